// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/brdf.hpp"

#include <algorithm>
#include <cmath>

namespace dpgs {

namespace {
constexpr double kDenomClamp = 1e-6;

double smith_lambda(double alpha_g, double c) {
    const double c2 = c * c;
    return 0.5 * (std::sqrt(1.0 + alpha_g * alpha_g * (1.0 - c2) / c2) - 1.0);
}

double smith_lambda_paper(double alpha_g, double c) {
    const double c2 = c * c;
    const double root = std::sqrt(1.0 + alpha_g * (1.0 - c2) / c2);
    return 1.0 / (2.0 * (root - 1.0));
}
} // namespace

double ggx_d(double alpha_g, double n_dot_h) {
    const double a2 = alpha_g * alpha_g;
    const double u = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    return a2 / (kPi * u * u);
}

Vec3 fresnel(const Vec3& f0, double h_dot) {
    const double t = 1.0 - h_dot;
    const double t5 = t * t * t * t * t;
    return f0 + (Vec3::Ones() - f0) * t5;
}

double smith_g(double alpha_g, double n_dot_i, double n_dot_o) {
    return smith_g(alpha_g, n_dot_i, n_dot_o, BrdfOptions{});
}

double smith_g(double alpha_g, double n_dot_i, double n_dot_o, const BrdfOptions& opt) {
    if (n_dot_i <= 0.0 || n_dot_o <= 0.0) return 0.0;
    if (opt.reciprocal_lambda)
        return 1.0 /
               (1.0 + smith_lambda_paper(alpha_g, n_dot_i) + smith_lambda_paper(alpha_g, n_dot_o));
    return 1.0 / (1.0 + smith_lambda(alpha_g, n_dot_i) + smith_lambda(alpha_g, n_dot_o));
}

Vec3 eval_brdf(const BrdfParams& p, const Vec3& n, const Vec3& wi, const Vec3& wo,
               const BrdfOptions& opt) {
    const double n_i = n.dot(wi);
    const double n_o = n.dot(wo);
    if (n_i <= 0.0 || n_o <= 0.0) return Vec3::Zero();

    const Vec3 diffuse = (1.0 - p.metal) * kInvPi * p.albedo;

    const Vec3 h_raw = wi + wo;
    const double h_len = h_raw.norm();
    if (h_len < 1e-9) return diffuse; // wi == -wo, half vector undefined
    const Vec3 h = h_raw / h_len;

    const double alpha = p.alpha_g();
    const double ndh = n.dot(h);
    const double hdot = opt.fresnel_half_normal ? ndh : h.dot(wo);
    const double d = ggx_d(alpha, ndh);
    const Vec3 f = fresnel(p.f0(), hdot);
    const double g = smith_g(alpha, n_i, n_o, opt);
    const double denom = std::max(4.0 * n_i * n_o, kDenomClamp);
    return diffuse + d * g / denom * f;
}

Vec3 eval_brdf_backward(const BrdfParams& p, const Vec3& n, const Vec3& wi, const Vec3& wo,
                        const Vec3& d_out, BrdfBackward& bw) {
    const double n_i = n.dot(wi);
    const double n_o = n.dot(wo);
    if (n_i <= 0.0 || n_o <= 0.0) return Vec3::Zero();

    const Vec3 diffuse = (1.0 - p.metal) * kInvPi * p.albedo;
    bw.d_albedo += (1.0 - p.metal) * kInvPi * d_out;
    bw.d_metal += -kInvPi * p.albedo.dot(d_out);

    const Vec3 h_raw = wi + wo;
    const double h_len = h_raw.norm();
    if (h_len < 1e-9) return diffuse;
    const Vec3 h = h_raw / h_len;

    const double alpha = p.alpha_g();
    const double a2 = alpha * alpha;
    const double ndh = n.dot(h);
    const double hdot = h.dot(wo);
    const Vec3 f0 = p.f0();

    const double u = ndh * ndh * (a2 - 1.0) + 1.0;
    const double d = a2 / (kPi * u * u);
    const double t = 1.0 - hdot;
    const double t4 = t * t * t * t;
    const double t5 = t4 * t;
    const Vec3 f = f0 + (Vec3::Ones() - f0) * t5;
    const double c2i = n_i * n_i, c2o = n_o * n_o;
    const double si = std::sqrt(1.0 + a2 * (1.0 - c2i) / c2i);
    const double so = std::sqrt(1.0 + a2 * (1.0 - c2o) / c2o);
    const double lam_i = 0.5 * (si - 1.0);
    const double lam_o = 0.5 * (so - 1.0);
    const double g = 1.0 / (1.0 + lam_i + lam_o);
    const double denom_raw = 4.0 * n_i * n_o;
    const bool denom_clamped = denom_raw < kDenomClamp;
    const double denom = denom_clamped ? kDenomClamp : denom_raw;
    const double k = d * g / denom;
    const Vec3 spec = k * f;

    // F0 path: per channel F = F0 + (1 - F0) t5.
    const Vec3 d_f = k * d_out;
    const Vec3 d_f0 = d_f * (1.0 - t5);
    bw.d_albedo += p.metal * d_f0;
    bw.d_metal += (p.albedo - Vec3::Constant(0.04)).dot(d_f0);

    // h.wo path through the t^5 term.
    const double d_hdot = -5.0 * t4 * (Vec3::Ones() - f0).dot(d_f);

    // K = D G / denom.
    const double d_k = f.dot(d_out);
    const double d_d = d_k * g / denom;
    const double d_g = d_k * d / denom;
    const double d_denom = denom_clamped ? 0.0 : -d_k * d * g / (denom * denom);

    // D partials.
    const double d_alpha_from_d = d_d * 2.0 * alpha * (u - 2.0 * a2 * ndh * ndh) / (kPi * u * u * u);
    const double d_ndh = d_d * (-4.0) * a2 * ndh * (a2 - 1.0) / (kPi * u * u * u);

    // G partials: dG/dLambda = -G^2; Lambda(c) partials via s = sqrt(...).
    const double d_lam = -g * g * d_g;
    const double d_alpha_from_g =
        d_lam * (alpha * (1.0 - c2i) / (2.0 * si * c2i) + alpha * (1.0 - c2o) / (2.0 * so * c2o));
    double d_ni = d_lam * (-a2 / (2.0 * si * n_i * c2i));
    double d_no = d_lam * (-a2 / (2.0 * so * n_o * c2o));
    d_ni += d_denom * 4.0 * n_o;
    d_no += d_denom * 4.0 * n_i;

    const double d_alpha = d_alpha_from_d + d_alpha_from_g;
    bw.d_rough += d_alpha * 2.0 * p.rough;

    // Vector chains. ndh = n.h ; hdot = h.wo ; h = (wi+wo)/|wi+wo|.
    Vec3 d_h = n * d_ndh + wo * d_hdot;
    bw.d_n += h * d_ndh + wi * d_ni + wo * d_no;
    bw.d_wi += n * d_ni;
    bw.d_wo += n * d_no + h * d_hdot;
    const Vec3 d_h_raw = (d_h - h * h.dot(d_h)) / h_len;
    bw.d_wi += d_h_raw;
    bw.d_wo += d_h_raw;

    return diffuse + spec;
}

} // namespace dpgs
