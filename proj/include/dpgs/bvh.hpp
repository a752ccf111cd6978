// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/scene.hpp"

#include <vector>

namespace dpgs {

// Binary AABB tree over mesh triangles, median split on the longest centroid
// axis, at most 4 triangles per leaf.
struct Bvh {
    struct Node {
        Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();
        int left = -1;   // internal: child index; leaf: first triangle slot
        int right = -1;  // internal: child index; leaf: -1
        int count = 0;   // leaf triangle count, 0 for internal nodes
        bool leaf() const { return count > 0; }
    };

    std::vector<Node> nodes;
    std::vector<int> tri_order; // permutation of triangle indices
    // Flat triangle vertices in tri_order, 3 per triangle.
    std::vector<Vec3> tri_verts;

    bool empty() const { return nodes.empty(); }
};

inline constexpr double kOcclusionEps = 1e-3;  // caller-side normal offset
inline constexpr double kRayTEps = 1e-7;       // parametric cutoff

Bvh build_bvh(const TriangleMesh& mesh);

// Any-hit occlusion query over (kRayTEps, t_max); both triangle sides hit.
// skip_tri (an original face index) exempts one triangle, used when baking a
// splat bound to that face so the splat's own surface does not shadow it.
bool trace_occlusion(const Bvh& bvh, const Vec3& origin, const Vec3& dir, double t_max,
                     int skip_tri = -1);

// Reference used by the exactness tests: same predicate, all triangles.
bool trace_occlusion_brute(const TriangleMesh& mesh, const Vec3& origin, const Vec3& dir,
                           double t_max);

struct BakeResult {
    // Per splat: kShAuxFloats coefficients (scalar visibility replicated to
    // all three channels).
    std::vector<std::array<double, kShAuxFloats>> coeffs;
    double residual_rms = 0.0;
};

// Fits directional visibility (1 = open) from each splat center, offset by
// kOcclusionEps along its current normal, over a full-sphere direction set.
BakeResult bake_visibility(const HybridScene& scene, const Bvh& bvh, int n_dirs, int degree);

// Overwrites sh_aux with degree-2 baked visibility and flags the scene baked.
void finalize_bake(HybridScene& scene, const Bvh& bvh, int n_dirs);

} // namespace dpgs
