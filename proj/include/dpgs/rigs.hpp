// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/camera.hpp"
#include "dpgs/scene.hpp"

#include <vector>

namespace dpgs {

// Diagnostic rig: an opaque shaded plate and an off-axis occluder blocking a
// very bright environment patch from it, plus one low-opacity splat hidden
// beneath the plate that still sees the patch around the plate edge. Forward
// per-splat shading leaks the hidden splat's bright color into the pixels;
// deferred shading does not.
struct HiddenRig {
    HybridScene scene;
    Camera camera;
    // Image-space strip whose true surface points lie on the shaded plate,
    // fully shadowed from the bright patch.
    double strip_half = 0.2;        // world units on the plate
    Vec3 bright_dir = Vec3(1, 0, 1).normalized();
    double patch_half_angle = 4.0 * kPi / 180.0;
    double patch_radiance = 150000.0;
    double plate_albedo = 0.6;
};

HiddenRig make_hidden_rig(int image_size = 96);

// True surface point of a camera ray on the z=0 plate; false if the pixel
// misses the plate.
bool hidden_rig_surface_point(const HiddenRig& rig, int x, int y, Vec3& point);

// Reference shading of the plate surface by direct texel-sum quadrature of
// the envmap against an independently written BRDF and exact two-quad
// visibility. No splatting, no BVH, no shared shading code.
Vec3 hidden_rig_reference_shade(const HiddenRig& rig, const Vec3& surface_point);

// Tiny randomized hybrid scene (20 splats on an icosahedron) plus a matching
// view, for gradient verification.
struct GradcheckFixture {
    HybridScene scene;
    TrainView view;
};
GradcheckFixture make_gradcheck_fixture(uint64_t seed, int image_size = 16);

// Self-supervised inverse-rendering rig: an icosphere with banded albedo
// under a fixed degree-2 SH light, plus orbit cameras.
struct RecoveryRig {
    HybridScene scene; // ground-truth parameters
    std::vector<Camera> train_cameras;
    Camera heldout_camera;
    Envmap relight_envmap;
};
RecoveryRig make_recovery_rig(int image_size = 64, int n_views = 24);

// Re-initializes the BRDF raws, aux SH and global light of a recovery scene
// to neutral starting values (geometry and opacity kept).
void reset_recovery_parameters(HybridScene& scene);

} // namespace dpgs
