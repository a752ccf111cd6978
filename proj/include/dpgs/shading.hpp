// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/brdf.hpp"
#include "dpgs/bvh.hpp"
#include "dpgs/rng.hpp"
#include "dpgs/scene.hpp"
#include "dpgs/sh.hpp"

#include <array>

namespace dpgs {

struct ShadingPoint {
    Vec3 x = Vec3::Zero();   // world position
    Vec3 n = Vec3(0, 0, 1);  // unit shading normal
    BrdfParams brdf;
    Vec3 wo = Vec3(0, 0, 1); // unit direction toward the viewer
    std::array<double, kShAuxFloats> aux{}; // blended local SH (indirect light,
                                            // or visibility once baked)
};

enum class LightTechnique { Fibonacci, Ggx, Light };

struct LightSample {
    Vec3 wi = Vec3(0, 0, 1);
    double pdf = 0.0; // sr^-1, or exactly 1/N in Fibonacci uniform-set mode
    LightTechnique technique = LightTechnique::Fibonacci;
};

enum class LightMode { Train, Baked };
enum class ShadeStrategy { Fibonacci, Mis };

// Where binary visibility comes from. With neither a BVH nor baked SH the
// scene is treated as fully open (V = 1).
struct VisibilitySource {
    const Bvh* bvh = nullptr;
    double t_max = 1e30;
    bool baked = false; // V = clamp(sh_eval(sp.aux, wi), 0, 1)
};

struct ShadeOptions {
    LightMode mode = LightMode::Train;
    bool light_from_envmap = false;      // global light from envmap lookup (relighting)
    const double* vis_override = nullptr; // frozen per-sample V, length spp (gradient checks)
    int* nan_count = nullptr;            // incremented per discarded non-finite sample
};

// GGX importance sample of the half-vector distribution D(h)(n.h);
// wi = reflect(-wo, h), pdf = D(h)(n.h) / (4 h.wo). Rejects below-horizon
// directions by resampling.
LightSample sample_ggx(const BrdfParams& brdf, const Vec3& n, const Vec3& wo, Pcg32& rng);
double pdf_ggx(const BrdfParams& brdf, const Vec3& n, const Vec3& wo, const Vec3& wi);

// Luminance-proportional envmap sample; pdf is piecewise constant per texel
// and integrates to one over the sphere.
LightSample sample_envmap(const Envmap& env, Pcg32& rng);
double pdf_envmap(const Envmap& env, const Vec3& wi);

// Balance heuristic.
double mis_weight(double pdf_this, double pdf_other);

// Eq-style light decomposition at one direction. Train mode evaluates
// V * L_global + max(0, L_local); baked mode replaces V by the baked SH and
// drops the local term.
Vec3 incoming_light(const ShadingPoint& sp, const Vec3& wi, const EnvironmentLight& light,
                    const VisibilitySource& vis, LightMode mode, bool light_from_envmap);

// Monte-Carlo outgoing radiance. Fibonacci strategy is deterministic (no rng
// use); MIS draws spp/2 light and spp/2 GGX samples.
Vec3 shade(const ShadingPoint& sp, const EnvironmentLight& light, const VisibilitySource& vis,
           int spp, ShadeStrategy strategy, Pcg32& rng, const ShadeOptions& opts = {});

struct ShadeBackward {
    Vec3 d_albedo = Vec3::Zero();
    double d_rough = 0.0;
    double d_metal = 0.0;
    Vec3 d_n = Vec3::Zero();  // wrt the unit shading normal
    Vec3 d_wo = Vec3::Zero(); // wrt the unit view direction
    std::array<double, kShAuxFloats> d_aux{};
    std::array<double, kShAuxFloats> d_sh_global{};
};

// Forward value plus reverse accumulation for the Fibonacci training
// estimator (SH global light). Visibility is treated as a constant.
Vec3 shade_backward(const ShadingPoint& sp, const EnvironmentLight& light,
                    const VisibilitySource& vis, int spp, const Vec3& d_out, ShadeBackward& bw,
                    const ShadeOptions& opts = {});

} // namespace dpgs
