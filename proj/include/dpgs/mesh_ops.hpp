// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/scene.hpp"

#include <string>

namespace dpgs {

// Circumradius of the triangle (v0, v1, v2); throws on degenerate input.
double circumradius(const Vec3& v0, const Vec3& v1, const Vec3& v2);

// Face normal rotated by the learnable quaternion; q_normal is normalized
// internally so raw (drifted) quaternions are fine.
Vec3 rotated_normal(const Vec3& face_normal, const Vec4& q_normal);

// Merge duplicate vertices (tolerance 1e-7), drop duplicate and degenerate
// faces (area <= 1e-12). Winding preserved; face order preserved.
TriangleMesh cleanup_mesh(const TriangleMesh& mesh);

// In-plane initial scale as a fraction of the circumradius; below the scale
// regularizer ceiling so L_sc starts at rest.
inline constexpr double kBindScaleFraction = 0.15;
inline constexpr double kBindFlatFraction = 1e-4;
inline constexpr double kBindAlpha = 0.9;

// One flat splat per face: position at the centroid, local z along the face
// normal, local x along the longest edge.
HybridScene bind_gaussians(const TriangleMesh& mesh);

struct TestMeshParams {
    int subdivisions = 2;   // icosphere refinement / cube-plane grid resolution
    double size = 1.0;      // radius or half extent
    // two_plates rig layout
    double plate_half = 0.3;
    double occluder_z = 3.0;
    Vec2 occluder_center = Vec2(3.05, 0.0);
    Vec2 occluder_half = Vec2(0.55, 0.9);
};

TriangleMesh make_test_mesh(const std::string& kind, const TestMeshParams& params = {});

} // namespace dpgs
