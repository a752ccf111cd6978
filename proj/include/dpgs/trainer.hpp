// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/losses.hpp"
#include "dpgs/scene.hpp"

#include <string>
#include <vector>

namespace dpgs {

// Constant per-group learning rates; SH groups split the DC band from the
// rest.
struct LrTable {
    double position = 1.6e-4;
    double sh_rgb = 2.5e-3;
    double scale = 5e-3;
    double opacity = 5e-2;
    double albedo = 1e-2;
    double metal = 1e-2;
    double rough = 1e-2;
    double q_normal = 1e-3;
    double light_dc = 2.5e-3;
    double light_rest = 2.5e-4;
    double aux_dc = 1e-3;
    double aux_rest = 1e-4;
    double visibility = 0.1;

    double lr_for(ParamGroup g, int index) const;
};

struct AdamState {
    // Flat first/second moments per group, indexed like param_get.
    std::vector<std::vector<double>> m, v;
    int64_t t = 0;
    int64_t nan_grads_zeroed = 0;

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-15;

    void init(const HybridScene& scene);
};

// One bias-corrected update over the listed groups; NaN gradients are zeroed
// and counted. Increments t once.
void adam_step(HybridScene& scene, const SceneGrads& grads, AdamState& state,
               const LrTable& lr, const std::vector<ParamGroup>& groups);

struct TrainConfig {
    std::string scene_path;
    std::string views_path;
    std::string out_dir = "out";
    std::string stage2_scene; // resume: skip stage 2 when set
    int steps_stage2 = 1000;
    int steps_pbr = 2000;
    int spp = 32;
    uint64_t seed = 0;
    int threads = 0;
    int bake_dirs = 256;
    int bvh_rebuild_every = 25;
    double bvh_move_tolerance = 1e-3;
    LossWeights weights;
    LrTable lr;
};

TrainConfig parse_train_config(const std::string& path);

struct StepRecord {
    int step = 0;
    double l1 = 0, pbr = 0, smooth = 0, o = 0, sc = 0, sr = 0, normal = 0, total = 0;
};

std::string loss_csv(const std::vector<StepRecord>& records);

// Stage 2: non-PBR fit (L1 + masked opacity + scale + surface) updating
// vertices, opacity, scales and radiance SH only.
std::vector<StepRecord> train_stage2(HybridScene& scene, const std::vector<TrainView>& views,
                                     int steps, const TrainConfig& cfg);

// PBR stage: full objective with deferred shading, every group live,
// visibility traced per sample and detached.
std::vector<StepRecord> train_pbr(HybridScene& scene, const std::vector<TrainView>& views,
                                  int steps, int spp, const TrainConfig& cfg);

struct RunSummary {
    std::vector<StepRecord> history;
    std::string final_scene_path;
    std::string stage2_scene_path;
    std::string loss_csv_path;
};

// Stage 2 -> PBR -> visibility bake; writes scene assets, the per-step loss
// CSV and a short summary.
RunSummary run_full(const TrainConfig& cfg);

} // namespace dpgs
