// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/trainer.hpp"

#include "dpgs/errors.hpp"
#include "dpgs/image.hpp"
#include "dpgs/parallel.hpp"
#include "dpgs/rng.hpp"
#include "dpgs/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dpgs {

double LrTable::lr_for(ParamGroup g, int index) const {
    switch (g) {
    case ParamGroup::Vertices: return position;
    case ParamGroup::Opacity: return opacity;
    case ParamGroup::Scales: return scale;
    case ParamGroup::Brdf: {
        const int k = index % 5;
        if (k < 3) return albedo;
        return k == 3 ? rough : metal;
    }
    case ParamGroup::QNormal: return q_normal;
    case ParamGroup::ShRgb: return sh_rgb;
    case ParamGroup::ShAux: {
        const int coeff = (index % kShAuxFloats) / 3;
        return coeff == 0 ? aux_dc : aux_rest;
    }
    case ParamGroup::ShGlobal: {
        const int coeff = index / 3;
        return coeff == 0 ? light_dc : light_rest;
    }
    }
    return 0.0;
}

void AdamState::init(const HybridScene& scene) {
    const auto groups = all_param_groups();
    m.assign(groups.size(), {});
    v.assign(groups.size(), {});
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        const int n = param_group_size(scene, groups[gi]);
        m[gi].assign(n, 0.0);
        v[gi].assign(n, 0.0);
    }
    t = 0;
    nan_grads_zeroed = 0;
}

void adam_step(HybridScene& scene, const SceneGrads& grads, AdamState& state, const LrTable& lr,
               const std::vector<ParamGroup>& groups) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.t));
    const auto all = all_param_groups();
    for (ParamGroup g : groups) {
        const size_t gi = static_cast<size_t>(
            std::find(all.begin(), all.end(), g) - all.begin());
        const int n = param_group_size(scene, g);
        auto& m = state.m[gi];
        auto& v = state.v[gi];
        for (int i = 0; i < n; ++i) {
            double grad = grad_get(grads, g, i);
            if (!std::isfinite(grad)) {
                grad = 0.0;
                ++state.nan_grads_zeroed;
            }
            m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * grad;
            v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * grad * grad;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            const double step = lr.lr_for(g, i) * m_hat / (std::sqrt(v_hat) + AdamState::kEps);
            param_set(scene, g, i, param_get(scene, g, i) - step);
        }
    }
    scene.sync_bound_positions();
}

namespace {

std::map<std::string, std::string> parse_kv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("trainer", "missing config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        if (!key.empty()) kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

} // namespace

TrainConfig parse_train_config(const std::string& path) {
    const auto kv = parse_kv(path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    TrainConfig cfg;
    auto str = [&](const char* key, std::string& out, bool is_path) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        out = is_path && !it->second.empty() ? (base / it->second).string() : it->second;
    };
    auto num = [&](const char* key, auto& out) {
        auto it = kv.find(key);
        if (it != kv.end()) out = static_cast<std::decay_t<decltype(out)>>(std::stod(it->second));
    };
    str("scene", cfg.scene_path, true);
    str("views", cfg.views_path, true);
    str("out_dir", cfg.out_dir, true);
    str("stage2_scene", cfg.stage2_scene, true);
    num("steps_stage2", cfg.steps_stage2);
    num("steps_pbr", cfg.steps_pbr);
    num("spp", cfg.spp);
    num("seed", cfg.seed);
    num("threads", cfg.threads);
    num("bake_dirs", cfg.bake_dirs);
    num("bvh_rebuild_every", cfg.bvh_rebuild_every);
    num("lambda_o", cfg.weights.lambda_o);
    num("lambda_sc", cfg.weights.lambda_sc);
    num("lambda_sr", cfg.weights.lambda_sr);
    num("lambda_normal", cfg.weights.lambda_normal);
    num("lambda_smooth_albedo", cfg.weights.lambda_smooth_albedo);
    num("lambda_smooth_metal", cfg.weights.lambda_smooth_metal);
    num("lambda_smooth_rough", cfg.weights.lambda_smooth_rough);
    num("kappa_rc", cfg.weights.kappa_rc);
    num("lr_position", cfg.lr.position);
    num("lr_sh_rgb", cfg.lr.sh_rgb);
    num("lr_scale", cfg.lr.scale);
    num("lr_opacity", cfg.lr.opacity);
    num("lr_albedo", cfg.lr.albedo);
    num("lr_metal", cfg.lr.metal);
    num("lr_rough", cfg.lr.rough);
    num("lr_q_normal", cfg.lr.q_normal);
    num("lr_light_dc", cfg.lr.light_dc);
    num("lr_light_rest", cfg.lr.light_rest);
    num("lr_aux_dc", cfg.lr.aux_dc);
    num("lr_aux_rest", cfg.lr.aux_rest);
    return cfg;
}

std::string loss_csv(const std::vector<StepRecord>& records) {
    std::ostringstream out;
    out << "step,l1,pbr,smooth,o,sc,sr,normal,total\n";
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.step,
                      r.l1, r.pbr, r.smooth, r.o, r.sc, r.sr, r.normal, r.total);
        out << buf;
    }
    return out.str();
}

namespace {

struct ViewShuffler {
    std::vector<int> order;
    size_t pos = 0;
    Pcg32 rng;

    ViewShuffler(size_t n, uint64_t seed) : rng(mix_u64(seed ^ 0x5e3d1ab1), 0x9d2c) {
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
        reshuffle();
    }
    void reshuffle() {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.next_below(static_cast<uint32_t>(i))]);
        pos = 0;
    }
    int next() {
        if (pos >= order.size()) reshuffle();
        return order[pos++];
    }
};

void assert_params_finite(const HybridScene& scene, int step) {
    for (const auto& g : scene.gaussians) {
        bool ok = g.mu.allFinite() && g.s_raw.allFinite() && std::isfinite(g.alpha_raw) &&
                  g.albedo_raw.allFinite() && std::isfinite(g.rough_raw) &&
                  std::isfinite(g.metal_raw) && g.q_normal.allFinite();
        for (double v : g.sh_rgb) ok = ok && std::isfinite(v);
        for (double v : g.sh_aux) ok = ok && std::isfinite(v);
        if (!ok)
            throw Error("trainer", "non-finite parameter after step " + std::to_string(step));
    }
    for (const auto& v : scene.mesh.vertices)
        if (!v.allFinite())
            throw Error("trainer", "non-finite vertex after step " + std::to_string(step));
    for (double v : scene.light.sh_global)
        if (!std::isfinite(v))
            throw Error("trainer", "non-finite light after step " + std::to_string(step));
}

std::vector<StepRecord> train_loop(HybridScene& scene, const std::vector<TrainView>& views,
                                   int steps, int spp, const TrainConfig& cfg, TrainStage stage,
                                   const std::vector<ParamGroup>& groups) {
    if (views.empty()) throw Error("trainer", "need at least one training view");
    std::vector<StepRecord> history;
    if (steps <= 0) return history;

    AdamState state;
    state.init(scene);
    ViewShuffler shuffler(views.size(), cfg.seed);
    scene.sync_bound_positions();

    Bvh bvh;
    std::vector<Vec3> verts_at_build;
    auto rebuild = [&]() {
        bvh = build_bvh(scene.mesh);
        verts_at_build = scene.mesh.vertices;
        scene.bvh_dirty = false;
    };
    if (stage == TrainStage::Pbr) rebuild();

    for (int step = 0; step < steps; ++step) {
        if (stage == TrainStage::Pbr) {
            bool moved = scene.bvh_dirty;
            if (!moved && cfg.bvh_rebuild_every > 0 && step % cfg.bvh_rebuild_every == 0 && step > 0)
                moved = true;
            if (!moved) {
                for (size_t i = 0; i < scene.mesh.vertices.size() && !moved; ++i)
                    moved = (scene.mesh.vertices[i] - verts_at_build[i]).lpNorm<Eigen::Infinity>() >
                            cfg.bvh_move_tolerance;
            }
            if (moved) rebuild();
        }

        const TrainView& view = views[shuffler.next()];
        LossOptions opts;
        opts.stage = stage;
        opts.spp = spp;
        opts.seed = cfg.seed;
        opts.frame = static_cast<uint64_t>(step);
        opts.weights = cfg.weights;

        LossReport report;
        try {
            report = total_loss(scene, view, stage == TrainStage::Pbr ? &bvh : nullptr, opts);
        } catch (const Error& e) {
            throw Error("trainer",
                        "aborted at step " + std::to_string(step) + ": " + e.what());
        }

        adam_step(scene, report.grads, state, cfg.lr, groups);
        assert_params_finite(scene, step);
        scene.bvh_dirty = true;

        StepRecord rec;
        rec.step = step;
        rec.l1 = report.l1;
        rec.pbr = report.pbr;
        rec.smooth = report.smooth;
        rec.o = report.o;
        rec.sc = report.sc;
        rec.sr = report.sr;
        rec.normal = report.normal;
        rec.total = report.total;
        history.push_back(rec);
    }
    return history;
}

} // namespace

std::vector<StepRecord> train_stage2(HybridScene& scene, const std::vector<TrainView>& views,
                                     int steps, const TrainConfig& cfg) {
    const std::vector<ParamGroup> groups = {ParamGroup::Vertices, ParamGroup::Opacity,
                                            ParamGroup::Scales, ParamGroup::ShRgb};
    return train_loop(scene, views, steps, cfg.spp, cfg, TrainStage::Stage2, groups);
}

std::vector<StepRecord> train_pbr(HybridScene& scene, const std::vector<TrainView>& views,
                                  int steps, int spp, const TrainConfig& cfg) {
    return train_loop(scene, views, steps, spp, cfg, TrainStage::Pbr, all_param_groups());
}

RunSummary run_full(const TrainConfig& cfg) {
    if (cfg.threads > 0) set_thread_count(cfg.threads);
    if (cfg.scene_path.empty() || cfg.views_path.empty())
        throw Error("trainer", "config must set 'scene' and 'views'");
    std::vector<TrainView> views = load_views(cfg.views_path);

    RunSummary summary;
    const std::filesystem::path out(cfg.out_dir);
    std::filesystem::create_directories(out);

    HybridScene scene;
    std::vector<StepRecord> history;
    if (!cfg.stage2_scene.empty()) {
        scene = load_scene(cfg.stage2_scene);
    } else {
        scene = load_scene(cfg.scene_path);
        history = train_stage2(scene, views, cfg.steps_stage2, cfg);
    }
    summary.stage2_scene_path = (out / "stage2.scene").string();
    save_scene(scene, summary.stage2_scene_path);

    auto pbr_history = train_pbr(scene, views, cfg.steps_pbr, cfg.spp, cfg);
    for (auto& r : pbr_history) r.step += cfg.steps_stage2;
    history.insert(history.end(), pbr_history.begin(), pbr_history.end());

    Bvh bvh = build_bvh(scene.mesh);
    finalize_bake(scene, bvh, cfg.bake_dirs);

    summary.final_scene_path = (out / "final.scene").string();
    save_scene(scene, summary.final_scene_path);
    summary.loss_csv_path = (out / "loss.csv").string();
    atomic_write_file(summary.loss_csv_path, loss_csv(history));

    std::ostringstream metrics;
    metrics << "steps_stage2 = " << (cfg.stage2_scene.empty() ? cfg.steps_stage2 : 0) << "\n";
    metrics << "steps_pbr = " << cfg.steps_pbr << "\n";
    if (!history.empty()) {
        metrics << "initial_total = " << history.front().total << "\n";
        metrics << "final_total = " << history.back().total << "\n";
    }
    metrics << "gaussians = " << scene.gaussians.size() << "\n";
    atomic_write_file((out / "summary.txt").string(), metrics.str());
    summary.history = std::move(history);
    return summary;
}

} // namespace dpgs
