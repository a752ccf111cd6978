// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/raster.hpp"
#include "dpgs/scene.hpp"

#include <map>
#include <string>
#include <vector>

namespace dpgs {

struct LossWeights {
    double lambda_smooth_albedo = 0.06;
    double lambda_smooth_metal = 0.02;
    double lambda_smooth_rough = 0.02;
    double lambda_o = 1.0;
    double lambda_sc = 1.0;
    double lambda_sr = 1.0;
    double lambda_normal = 0.01;
    double kappa_rc = 0.2;
};

// Named terms are stored unweighted except `smooth`, which carries its
// per-map lambdas already (the three maps use different weights).
struct LossReport {
    double total = 0.0;
    double l1 = 0.0, pbr = 0.0, smooth = 0.0, o = 0.0, sc = 0.0, sr = 0.0, normal = 0.0;
    SceneGrads grads;
};

enum class TrainStage { Stage2, Pbr };

// Detached inputs can be frozen for finite-difference checks: binary
// visibility per (pixel, sample), the depth-derived pseudo-normal target, and
// the circumradii entering the scale hinge.
struct LossOptions {
    TrainStage stage = TrainStage::Pbr;
    int spp = 32;
    uint64_t seed = 0;
    uint64_t frame = 0;
    LossWeights weights;

    const std::vector<uint8_t>* vis_frozen = nullptr;
    const ImageF* pseudo_normal_frozen = nullptr;
    const std::vector<double>* circumradii_frozen = nullptr;

    std::vector<uint8_t>* vis_out = nullptr;
    ImageF* pseudo_normal_out = nullptr;
    std::vector<double>* circumradii_out = nullptr;
};

// --- individual terms (unit-testable pieces of the composite loss) ---

// Masked opacity: mean over pixels of -(1-M) log(1-o). o is clamped at
// 1 - 1e-6 before the log.
double loss_masked_opacity(const std::vector<double>& o_map, const std::vector<uint8_t>& mask,
                           std::vector<double>* grad_o);

// Scale hinge sum over bound splats: max(max(s) - kappa * r_c, 0).
double loss_scale(const HybridScene& scene, double kappa_rc,
                  const std::vector<double>& circumradii, std::vector<Vec3>* grad_s_raw);

// Squared displacement of bound centroids from their binding positions;
// gradient spreads to the three parent vertices.
double loss_surface(const HybridScene& scene, std::vector<Vec3>* grad_vertices);

// Camera-space normals from back-projected depth differences, oriented toward
// the camera; borders use one-sided differences, degenerate pixels fall back
// to the view direction.
ImageF pseudo_normal_from_depth(const std::vector<double>& depth, const Camera& cam);

// Negative mean cosine between the normalized normal map and the (detached)
// pseudo-normal target, over masked pixels.
double loss_normal(const std::vector<double>& n_map, const ImageF& n_pseudo,
                   const std::vector<uint8_t>& mask, int height, int width,
                   std::vector<double>* grad_n_map);

// Edge-aware second-difference smoothness: |d2 x| * exp(-|d1 I|), masked mean.
double loss_smooth(const std::vector<double>& param_map, int channels, const ImageF& gt_display,
                   const std::vector<uint8_t>& mask, int height, int width,
                   std::vector<double>* grad_param);

// Masked mean absolute error between display-range images.
double loss_photometric(const ImageF& pred_display, const ImageF& gt_display,
                        const std::vector<uint8_t>& mask, ImageF* grad_pred);

std::vector<double> face_circumradii(const TriangleMesh& mesh);

// Full training objective with hand-derived reverse-mode gradients through
// rasterization, blending and deferred shading. Scene must have bound
// positions synced. Throws naming the term if any value is non-finite.
LossReport total_loss(const HybridScene& scene, const TrainView& view, const Bvh* bvh,
                      const LossOptions& opts);

// --- finite-difference verification harness ---

enum class ParamGroup { Vertices, Opacity, Scales, Brdf, QNormal, ShRgb, ShAux, ShGlobal };

const char* param_group_name(ParamGroup g);
std::vector<ParamGroup> all_param_groups();

int param_group_size(const HybridScene& scene, ParamGroup g);
double param_get(const HybridScene& scene, ParamGroup g, int index);
void param_set(HybridScene& scene, ParamGroup g, int index, double value);
double grad_get(const SceneGrads& grads, ParamGroup g, int index);

struct GradCheckRow {
    ParamGroup group;
    double max_rel_err = 0.0;
    int worst_index = -1;
    double analytic = 0.0, fd = 0.0;
};

// Central differences with step h under common random numbers and frozen
// detached inputs (visibility, pseudo-normal, circumradii).
std::vector<GradCheckRow> check_gradients(const HybridScene& scene, const TrainView& view,
                                          const Bvh* bvh, const std::vector<ParamGroup>& groups,
                                          double h, LossOptions opts);

} // namespace dpgs
