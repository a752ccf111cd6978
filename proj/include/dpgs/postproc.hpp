// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/image.hpp"
#include "dpgs/math.hpp"

#include <vector>

namespace dpgs {

struct BilateralParams {
    int radius = 3;
    double sigma_depth = 0.0;  // 0: auto-scaled to 5% of the depth spread
    double sigma_normal = 0.1;
    double sigma_albedo = 0.1;
};

// Joint bilateral filter guided by depth/normal/albedo. The color is
// demodulated by albedo + 1e-3 before filtering and remodulated after, so
// albedo texture stays sharp.
ImageF bilateral_denoise(const ImageF& image, const ImageF& depth, const ImageF& normal,
                         const ImageF& albedo, const BilateralParams& params = {});

double srgb_encode(double linear);
double srgb_encode_grad(double linear); // zero outside [0, 1]

// Clip to [0,1] then apply the piecewise sRGB transfer.
ImageF tonemap_srgb(const ImageF& linear);

// 10 log10(1 / MSE) over masked pixels of display-range images; identical
// inputs report the 99 dB sentinel. Empty mask is an error.
double psnr(const ImageF& pred, const ImageF& gt, const std::vector<uint8_t>& mask);

// Per-channel median of gt/pred over masked pixels with pred above 1e-4;
// multiply the prediction by this before albedo metrics.
Vec3 basecolor_rescale(const ImageF& pred_albedo, const ImageF& gt_albedo,
                       const std::vector<uint8_t>& mask);

} // namespace dpgs
