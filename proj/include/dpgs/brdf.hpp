// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/math.hpp"

namespace dpgs {

// Microfacet parameters after activation. rough is the perceptual value; the
// GGX alpha is rough^2.
struct BrdfParams {
    Vec3 albedo = Vec3::Zero(); // [0,1] per channel
    double rough = 1.0;         // [0.09, 1]
    double metal = 0.0;         // [0,1]

    double alpha_g() const { return rough * rough; }
    Vec3 f0() const { return Vec3::Constant(0.04 * (1.0 - metal)) + albedo * metal; }
};

// Ablation switches reproducing the uncorrected factor definitions. The
// corrected forms are the default; gradients are only provided for them.
struct BrdfOptions {
    bool fresnel_half_normal = false; // evaluate F at h.n instead of h.wo
    bool reciprocal_lambda = false;   // Lambda = 1/(2(sqrt(1+a(1-c^2)/c^2)-1))
};

// GGX normal distribution.
double ggx_d(double alpha_g, double n_dot_h);

// Schlick Fresnel.
Vec3 fresnel(const Vec3& f0, double h_dot);

// Correlated Smith masking-shadowing; returns 0 when either cosine is <= 0.
double smith_g(double alpha_g, double n_dot_i, double n_dot_o);
double smith_g(double alpha_g, double n_dot_i, double n_dot_o, const BrdfOptions& opt);

// Diffuse + specular; zero when either side is backfacing. All vectors unit.
Vec3 eval_brdf(const BrdfParams& p, const Vec3& n, const Vec3& wi, const Vec3& wo,
               const BrdfOptions& opt = {});

struct BrdfBackward {
    Vec3 d_albedo = Vec3::Zero();
    double d_rough = 0.0;
    double d_metal = 0.0;
    Vec3 d_n = Vec3::Zero();
    Vec3 d_wi = Vec3::Zero();
    Vec3 d_wo = Vec3::Zero();
};

// Forward value plus reverse-mode accumulation of d_out through every input.
// Uses the corrected factor forms.
Vec3 eval_brdf_backward(const BrdfParams& p, const Vec3& n, const Vec3& wi, const Vec3& wo,
                        const Vec3& d_out, BrdfBackward& bw);

} // namespace dpgs
