// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/postproc.hpp"

#include "dpgs/errors.hpp"
#include "dpgs/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace dpgs {

ImageF bilateral_denoise(const ImageF& image, const ImageF& depth, const ImageF& normal,
                         const ImageF& albedo, const BilateralParams& params) {
    const int h = image.height, w = image.width;
    if (depth.height != h || depth.width != w || normal.height != h || albedo.height != h)
        throw Error("postproc", "denoiser guide buffers must match the image size");

    double sigma_d = params.sigma_depth;
    if (sigma_d <= 0.0) {
        double lo = 1e300, hi = -1e300;
        for (double v : depth.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        sigma_d = std::max(0.05 * (hi - lo), 1e-6);
    }
    const double inv_2sd2 = 1.0 / (2.0 * sigma_d * sigma_d);
    const double inv_sn = 1.0 / params.sigma_normal;
    const double inv_2sa2 = 1.0 / (2.0 * params.sigma_albedo * params.sigma_albedo);
    const int r = params.radius;

    // Demodulate so the filter works on the irradiance-like signal.
    ImageF demod(h, w, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                demod.at(y, x, c) = image.at(y, x, c) / (albedo.at(y, x, c) + 1e-3);

    ImageF out(h, w, 3);
    parallel_for(0, h, [&](int64_t yi) {
        const int y = static_cast<int>(yi);
        for (int x = 0; x < w; ++x) {
            const double d0 = depth.at(y, x, 0);
            const Vec3 n0(normal.at(y, x, 0), normal.at(y, x, 1), normal.at(y, x, 2));
            const double n0_len = n0.norm();
            const Vec3 a0(albedo.at(y, x, 0), albedo.at(y, x, 1), albedo.at(y, x, 2));
            Vec3 sum = Vec3::Zero();
            double wsum = 0.0;
            for (int dy = -r; dy <= r; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (int dx = -r; dx <= r; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    const double dd = depth.at(yy, xx, 0) - d0;
                    double wgt = std::exp(-dd * dd * inv_2sd2);
                    const Vec3 n1(normal.at(yy, xx, 0), normal.at(yy, xx, 1), normal.at(yy, xx, 2));
                    const double denom = n0_len * n1.norm();
                    const double ncos = denom > 1e-12 ? n0.dot(n1) / denom : 1.0;
                    wgt *= std::exp(-(1.0 - ncos) * inv_sn);
                    const Vec3 da = Vec3(albedo.at(yy, xx, 0), albedo.at(yy, xx, 1),
                                         albedo.at(yy, xx, 2)) -
                                    a0;
                    wgt *= std::exp(-da.squaredNorm() * inv_2sa2);
                    sum += wgt * Vec3(demod.at(yy, xx, 0), demod.at(yy, xx, 1), demod.at(yy, xx, 2));
                    wsum += wgt;
                }
            }
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = (sum[c] / wsum) * (albedo.at(y, x, c) + 1e-3);
        }
    });
    return out;
}

double srgb_encode(double linear) {
    const double v = clamp01(linear);
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double srgb_encode_grad(double linear) {
    if (linear <= 0.0 || linear >= 1.0) return 0.0;
    return linear <= 0.0031308 ? 12.92
                               : (1.055 / 2.4) * std::pow(linear, 1.0 / 2.4 - 1.0);
}

ImageF tonemap_srgb(const ImageF& linear) {
    ImageF out = linear;
    for (double& v : out.data) v = srgb_encode(v);
    return out;
}

double psnr(const ImageF& pred, const ImageF& gt, const std::vector<uint8_t>& mask) {
    if (pred.height != gt.height || pred.width != gt.width || pred.channels != gt.channels)
        throw Error("postproc", "psnr: image shapes differ");
    if (mask.size() != pred.pixel_count()) throw Error("postproc", "psnr: mask size mismatch");
    double se = 0.0;
    int64_t count = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            if (!mask[static_cast<size_t>(y) * pred.width + x]) continue;
            ++count;
            for (int c = 0; c < pred.channels; ++c) se += sqr(pred.at(y, x, c) - gt.at(y, x, c));
        }
    if (count == 0) throw Error("postproc", "psnr: empty mask");
    const double mse = se / (static_cast<double>(count) * pred.channels);
    if (mse < 1e-10) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

Vec3 basecolor_rescale(const ImageF& pred_albedo, const ImageF& gt_albedo,
                       const std::vector<uint8_t>& mask) {
    if (pred_albedo.height != gt_albedo.height || pred_albedo.width != gt_albedo.width)
        throw Error("postproc", "rescale: image shapes differ");
    Vec3 factor;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> ratios;
        for (int y = 0; y < pred_albedo.height; ++y)
            for (int x = 0; x < pred_albedo.width; ++x) {
                if (!mask[static_cast<size_t>(y) * pred_albedo.width + x]) continue;
                const double p = pred_albedo.at(y, x, c);
                if (p > 1e-4) ratios.push_back(gt_albedo.at(y, x, c) / p);
            }
        if (ratios.empty()) throw Error("postproc", "rescale: no valid pixels");
        const size_t mid = ratios.size() / 2;
        std::nth_element(ratios.begin(), ratios.begin() + mid, ratios.end());
        double med = ratios[mid];
        if (ratios.size() % 2 == 0) {
            const double lower = *std::max_element(ratios.begin(), ratios.begin() + mid);
            med = 0.5 * (med + lower);
        }
        factor[c] = med;
    }
    return factor;
}

} // namespace dpgs
