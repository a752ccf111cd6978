// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/shading.hpp"

#include "dpgs/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dpgs {

namespace {

double trace_visibility(const ShadingPoint& sp, const Vec3& wi, const VisibilitySource& vis) {
    if (vis.baked) {
        std::array<double, kShAuxCoeffs> mono;
        for (int j = 0; j < kShAuxCoeffs; ++j) mono[j] = sp.aux[static_cast<size_t>(j) * 3];
        return std::clamp(sh_eval(std::span<const double>(mono.data(), mono.size()), wi), 0.0, 1.0);
    }
    if (vis.bvh && !vis.bvh->empty()) {
        const Vec3 origin = sp.x + kOcclusionEps * sp.n;
        return trace_occlusion(*vis.bvh, origin, wi, vis.t_max) ? 0.0 : 1.0;
    }
    return 1.0;
}

Vec3 global_light(const EnvironmentLight& light, const Vec3& wi, bool from_envmap) {
    if (from_envmap) {
        if (!light.envmap) throw Error("lighting", "envmap lookup requested but none is loaded");
        return light.envmap->lookup(wi);
    }
    return sh_eval_rgb(std::span<const double>(light.sh_global.data(), light.sh_global.size()),
                       kShAuxCoeffs, wi);
}

} // namespace

LightSample sample_ggx(const BrdfParams& brdf, const Vec3& n, const Vec3& wo, Pcg32& rng) {
    const double alpha = brdf.alpha_g();
    const double a2 = alpha * alpha;
    const Mat3 frame = rotation_from_z(n);
    LightSample out;
    out.technique = LightTechnique::Ggx;
    // Half vectors follow D(h) (n.h) exactly; below-horizon reflections are
    // kept with their nominal pdf and rejected by the caller through a zero
    // contribution, which keeps the estimator unbiased. Only a degenerate
    // half vector (h.wo ~ 0, undefined pdf) is redrawn.
    for (int attempt = 0; attempt < 64; ++attempt) {
        const double u1 = rng.next_double();
        const double u2 = rng.next_double();
        const double cos_h = std::sqrt(std::max(0.0, (1.0 - u1) / (1.0 + (a2 - 1.0) * u1)));
        const double sin_h = std::sqrt(std::max(0.0, 1.0 - cos_h * cos_h));
        const double phi = kTwoPi * u2;
        const Vec3 h = frame * Vec3(sin_h * std::cos(phi), sin_h * std::sin(phi), cos_h);
        const double h_dot_o = h.dot(wo);
        if (h_dot_o <= 1e-9) continue;
        out.wi = 2.0 * h_dot_o * h - wo;
        out.pdf = ggx_d(alpha, cos_h) * cos_h / (4.0 * h_dot_o);
        if (out.pdf > 0.0) return out;
    }
    // Persistent degeneracy (grazing view); return a zero-weight horizon sample.
    out.wi = n;
    out.pdf = ggx_d(alpha, 1.0) / 4.0;
    return out;
}

double pdf_ggx(const BrdfParams& brdf, const Vec3& n, const Vec3& wo, const Vec3& wi) {
    if (n.dot(wi) <= 0.0 || n.dot(wo) <= 0.0) return 0.0;
    const Vec3 h_raw = wi + wo;
    const double len = h_raw.norm();
    if (len < 1e-9) return 0.0;
    const Vec3 h = h_raw / len;
    const double h_dot_o = h.dot(wo);
    if (h_dot_o <= 1e-9) return 0.0;
    return ggx_d(brdf.alpha_g(), n.dot(h)) * n.dot(h) / (4.0 * h_dot_o);
}

LightSample sample_envmap(const Envmap& env, Pcg32& rng) {
    LightSample out;
    out.technique = LightTechnique::Light;
    const double u_row = rng.next_double();
    const int y = static_cast<int>(
        std::lower_bound(env.row_cdf.begin(), env.row_cdf.end(), u_row) - env.row_cdf.begin());
    const int yy = std::min(y, env.height - 1);
    const double* row = env.col_cdf.data() + static_cast<size_t>(yy) * env.width;
    const double u_col = rng.next_double();
    const int x = static_cast<int>(std::lower_bound(row, row + env.width, u_col) - row);
    const int xx = std::min(x, env.width - 1);

    // Uniform direction within the texel solid angle: phi linear, cos(theta)
    // linear across the texel.
    const double ct0 = std::cos(kPi * yy / env.height);
    const double ct1 = std::cos(kPi * (yy + 1) / env.height);
    const double ct = ct0 + (ct1 - ct0) * rng.next_double();
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    const double phi = kTwoPi * (xx + rng.next_double()) / env.width - kPi;
    out.wi = Vec3(st * std::sin(phi), ct, st * std::cos(phi));
    out.pdf = pdf_envmap(env, out.wi);
    if (out.pdf <= 0.0) out.pdf = 1e-12;
    return out;
}

double pdf_envmap(const Envmap& env, const Vec3& wi) {
    double fy, fx;
    env.texel_of_dir(wi, fy, fx);
    const int y = std::clamp(static_cast<int>(fy), 0, env.height - 1);
    const int x = std::clamp(static_cast<int>(fx), 0, env.width - 1);
    const Vec3 c = env.texel(y, x);
    const double lum = 0.2126 * c.x() + 0.7152 * c.y() + 0.0722 * c.z();
    return lum / env.total_weight;
}

double mis_weight(double pdf_this, double pdf_other) {
    return pdf_this / (pdf_this + pdf_other);
}

Vec3 incoming_light(const ShadingPoint& sp, const Vec3& wi, const EnvironmentLight& light,
                    const VisibilitySource& vis, LightMode mode, bool light_from_envmap) {
    const Vec3 lg = global_light(light, wi, light_from_envmap);
    if (mode == LightMode::Baked) {
        VisibilitySource baked_vis = vis;
        baked_vis.baked = true;
        return trace_visibility(sp, wi, baked_vis) * lg;
    }
    const double v = trace_visibility(sp, wi, vis);
    const Vec3 local = sh_eval_rgb(std::span<const double>(sp.aux.data(), sp.aux.size()),
                                   kShAuxCoeffs, wi)
                           .cwiseMax(0.0);
    return v * lg + local;
}

namespace {

inline Vec3 guard_finite(const Vec3& v, int* nan_count) {
    if (v.allFinite()) return v;
    if (nan_count) ++(*nan_count);
    return Vec3::Zero();
}

} // namespace

Vec3 shade(const ShadingPoint& sp, const EnvironmentLight& light, const VisibilitySource& vis,
           int spp, ShadeStrategy strategy, Pcg32& rng, const ShadeOptions& opts) {
    if (spp < 1) throw Error("lighting", "spp must be >= 1");

    Vec3 acc = Vec3::Zero();
    if (strategy == ShadeStrategy::Fibonacci) {
        const Mat3 frame = rotation_from_z(sp.n);
        for (int k = 0; k < spp; ++k) {
            const Vec3 canonical = fibonacci_hemisphere_canonical(spp, k);
            const Vec3 wi = frame * canonical;
            const double cos_i = canonical.z();
            double v;
            if (opts.vis_override) {
                v = opts.vis_override[k];
            } else if (opts.mode == LightMode::Baked || vis.baked) {
                VisibilitySource b = vis;
                b.baked = true;
                v = trace_visibility(sp, wi, b);
            } else {
                v = trace_visibility(sp, wi, vis);
            }
            Vec3 l = v * global_light(light, wi, opts.light_from_envmap);
            if (opts.mode == LightMode::Train)
                l += sh_eval_rgb(std::span<const double>(sp.aux.data(), sp.aux.size()),
                                 kShAuxCoeffs, wi)
                         .cwiseMax(0.0);
            l = l.cwiseMax(0.0);
            const Vec3 f = eval_brdf(sp.brdf, sp.n, wi, sp.wo);
            acc += guard_finite(l.cwiseProduct(f) * cos_i, opts.nan_count);
        }
        return acc * (kTwoPi / spp);
    }

    // MIS: equal split of light-importance and GGX-importance rays.
    if (!light.envmap) throw Error("lighting", "MIS strategy needs an envmap light");
    const Envmap& env = *light.envmap;
    const int half = std::max(1, spp / 2);
    Vec3 acc_light = Vec3::Zero(), acc_ggx = Vec3::Zero();
    for (int k = 0; k < half; ++k) {
        const LightSample ls = sample_envmap(env, rng);
        if (sp.n.dot(ls.wi) > 0.0) {
            const double w = mis_weight(ls.pdf, pdf_ggx(sp.brdf, sp.n, sp.wo, ls.wi));
            const Vec3 l = incoming_light(sp, ls.wi, light, vis, opts.mode, true);
            const Vec3 f = eval_brdf(sp.brdf, sp.n, ls.wi, sp.wo);
            acc_light +=
                guard_finite(l.cwiseProduct(f) * sp.n.dot(ls.wi) * (w / ls.pdf), opts.nan_count);
        }
    }
    for (int k = 0; k < half; ++k) {
        const LightSample gs = sample_ggx(sp.brdf, sp.n, sp.wo, rng);
        if (sp.n.dot(gs.wi) > 0.0 && gs.pdf > 0.0) {
            const double w = mis_weight(gs.pdf, pdf_envmap(env, gs.wi));
            const Vec3 l = incoming_light(sp, gs.wi, light, vis, opts.mode, true);
            const Vec3 f = eval_brdf(sp.brdf, sp.n, gs.wi, sp.wo);
            acc_ggx +=
                guard_finite(l.cwiseProduct(f) * sp.n.dot(gs.wi) * (w / gs.pdf), opts.nan_count);
        }
    }
    return (acc_light + acc_ggx) / half;
}

Vec3 shade_backward(const ShadingPoint& sp, const EnvironmentLight& light,
                    const VisibilitySource& vis, int spp, const Vec3& d_out, ShadeBackward& bw,
                    const ShadeOptions& opts) {
    if (spp < 1) throw Error("lighting", "spp must be >= 1");
    const Mat3 frame = rotation_from_z(sp.n);
    const double scale = kTwoPi / spp;
    const Vec3 g_up = d_out * scale;

    double global_basis[kShAuxCoeffs];
    Vec3 global_basis_grad[kShAuxCoeffs];

    Vec3 acc = Vec3::Zero();
    for (int k = 0; k < spp; ++k) {
        const Vec3 canonical = fibonacci_hemisphere_canonical(spp, k);
        const Vec3 wi = frame * canonical;
        const double cos_i = canonical.z();

        double v;
        if (opts.vis_override)
            v = opts.vis_override[k];
        else
            v = trace_visibility(sp, wi, vis);

        sh_basis(2, wi, global_basis);
        sh_basis_grad(2, wi, global_basis_grad);

        Vec3 lg = Vec3::Zero(), laux_raw = Vec3::Zero();
        for (int j = 0; j < kShAuxCoeffs; ++j) {
            const double b = global_basis[j];
            for (int c = 0; c < 3; ++c) {
                lg[c] += light.sh_global[static_cast<size_t>(j) * 3 + c] * b;
                laux_raw[c] += sp.aux[static_cast<size_t>(j) * 3 + c] * b;
            }
        }
        const Vec3 laux = laux_raw.cwiseMax(0.0);
        const Vec3 l_raw = v * lg + laux;
        const Vec3 l = l_raw.cwiseMax(0.0);

        BrdfBackward fb;
        const Vec3 d_f = Vec3(g_up.x() * l.x(), g_up.y() * l.y(), g_up.z() * l.z()) * cos_i;
        const Vec3 f = eval_brdf_backward(sp.brdf, sp.n, wi, sp.wo, d_f, fb);

        const Vec3 contrib = l.cwiseProduct(f) * cos_i;
        if (!contrib.allFinite()) {
            if (opts.nan_count) ++(*opts.nan_count);
            // Contribution replaced by zero; discard this sample's gradients
            // by rebuilding fb from scratch on the next iteration.
            continue;
        }
        acc += contrib;

        bw.d_albedo += fb.d_albedo;
        bw.d_rough += fb.d_rough;
        bw.d_metal += fb.d_metal;
        bw.d_n += fb.d_n;
        bw.d_wo += fb.d_wo;

        // d wrt incoming radiance, gated by both max(0, .) clamps.
        Vec3 d_l = Vec3(g_up.x() * f.x(), g_up.y() * f.y(), g_up.z() * f.z()) * cos_i;
        Vec3 d_wi = fb.d_wi;
        for (int c = 0; c < 3; ++c) {
            if (l_raw[c] <= 0.0) {
                d_l[c] = 0.0;
                continue;
            }
            const double d_lg_c = v * d_l[c];
            const double d_laux_c = laux_raw[c] > 0.0 ? d_l[c] : 0.0;
            for (int j = 0; j < kShAuxCoeffs; ++j) {
                const size_t idx = static_cast<size_t>(j) * 3 + c;
                bw.d_sh_global[idx] += d_lg_c * global_basis[j];
                bw.d_aux[idx] += d_laux_c * global_basis[j];
                d_wi += (d_lg_c * light.sh_global[idx] + d_laux_c * sp.aux[idx]) *
                        global_basis_grad[j];
            }
        }
        rotation_from_z_apply_backward(sp.n, canonical, d_wi, bw.d_n);
    }
    return acc * scale;
}

} // namespace dpgs
