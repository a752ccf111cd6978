// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/bvh.hpp"
#include "dpgs/errors.hpp"
#include "dpgs/hull.hpp"
#include "dpgs/image.hpp"
#include "dpgs/losses.hpp"
#include "dpgs/parallel.hpp"
#include "dpgs/postproc.hpp"
#include "dpgs/raster.hpp"
#include "dpgs/rigs.hpp"
#include "dpgs/scene_io.hpp"
#include "dpgs/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dpgs;

namespace {

void write_image_pair(const std::string& out_base, const ImageF& linear) {
    save_pfm(out_base + ".pfm", linear);
    save_png(out_base + ".png", tonemap_srgb(linear));
}

int cmd_render(const std::string& scene_path, const std::string& camera_path, int view_index,
               const std::string& mode, int spp, const std::string& strategy,
               const std::string& visibility, bool light_envmap, bool normalize, bool denoise,
               uint64_t seed, const std::string& out) {
    HybridScene scene = load_scene(scene_path);
    const std::vector<Camera> cams = load_camera_list(camera_path);
    if (view_index < 0 || view_index >= static_cast<int>(cams.size()))
        throw Error("cli", "camera index out of range");
    scene.sync_bound_positions();
    Bvh bvh = build_bvh(scene.mesh);

    RenderOptions opts;
    opts.spp = spp;
    opts.seed = seed;
    opts.strategy = strategy == "mis" ? ShadeStrategy::Mis : ShadeStrategy::Fibonacci;
    opts.light_from_envmap = light_envmap || strategy == "mis";
    opts.mode = scene.baked ? LightMode::Baked : LightMode::Train;
    opts.traced_visibility = visibility != "baked";
    opts.normalized_gbuffer = normalize;
    opts.denoise = denoise;

    ImageF img;
    if (mode == "forward")
        img = render_forward(scene, cams[view_index], &bvh, opts);
    else if (mode == "deferred")
        img = render_deferred(scene, cams[view_index], &bvh, opts);
    else
        throw Error("cli", "mode must be forward or deferred");
    write_image_pair(out, img);
    std::printf("wrote %s.pfm and %s.png\n", out.c_str(), out.c_str());
    return 0;
}

int cmd_train(const std::string& config_path) {
    TrainConfig cfg = parse_train_config(config_path);
    const RunSummary summary = run_full(cfg);
    std::printf("trained %zu steps; final scene: %s\n", summary.history.size(),
                summary.final_scene_path.c_str());
    std::printf("loss log: %s\n", summary.loss_csv_path.c_str());
    return 0;
}

int cmd_relight(const std::string& scene_path, const std::string& envmap_path,
                const std::string& camera_path, const std::string& visibility, int spp,
                bool denoise, uint64_t seed, const std::string& out_dir) {
    HybridScene scene = load_scene(scene_path);
    scene.light.envmap = load_envmap_pfm(envmap_path);
    scene.sync_bound_positions();
    const std::vector<Camera> cams = load_camera_list(camera_path);
    Bvh bvh = build_bvh(scene.mesh);

    RenderOptions opts;
    opts.spp = spp;
    opts.seed = seed;
    opts.strategy = ShadeStrategy::Mis;
    opts.mode = LightMode::Baked;
    opts.light_from_envmap = true;
    opts.traced_visibility = visibility == "traced";
    opts.denoise = denoise;
    if (!opts.traced_visibility && !scene.baked)
        std::fprintf(stderr, "note: scene has no baked visibility; results treat aux SH as visibility\n");

    fs::create_directories(out_dir);
    for (size_t i = 0; i < cams.size(); ++i) {
        opts.frame = i;
        const ImageF img = render_deferred(scene, cams[i], &bvh, opts);
        char name[64];
        std::snprintf(name, sizeof(name), "relit_%03zu", i);
        write_image_pair((fs::path(out_dir) / name).string(), img);
    }
    std::printf("wrote %zu relit views to %s\n", cams.size(), out_dir.c_str());
    return 0;
}

int cmd_bake(const std::string& scene_path, int dirs, const std::string& out) {
    HybridScene scene = load_scene(scene_path);
    scene.sync_bound_positions();
    Bvh bvh = build_bvh(scene.mesh);
    finalize_bake(scene, bvh, dirs);
    save_scene(scene, out);
    std::printf("baked visibility (%d directions) -> %s\n", dirs, out.c_str());
    return 0;
}

int cmd_stats_opacity(const std::string& scene_path, int bins, const std::string& out) {
    const HybridScene scene = load_scene(scene_path);
    const auto rows = opacity_depth_stats(scene.gaussians, bins);
    atomic_write_file(out, opacity_stats_csv(rows));
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_demo_hidden(const std::string& out_dir, int spp, int size, uint64_t seed) {
    const HiddenRig rig = make_hidden_rig(size);
    Bvh bvh = build_bvh(rig.scene.mesh);

    RenderOptions opts;
    opts.spp = spp;
    opts.seed = seed;
    opts.strategy = ShadeStrategy::Fibonacci;
    opts.mode = LightMode::Train;
    opts.light_from_envmap = true;

    const ImageF fwd = render_forward(rig.scene, rig.camera, &bvh, opts);
    const ImageF def = render_deferred(rig.scene, rig.camera, &bvh, opts);

    ImageF analytic(size, size, 3);
    std::vector<uint8_t> strip(static_cast<size_t>(size) * size, 0);
    parallel_for(0, size, [&](int64_t y) {
        for (int x = 0; x < size; ++x) {
            Vec3 p;
            if (!hidden_rig_surface_point(rig, x, static_cast<int>(y), p)) continue;
            const Vec3 ref = hidden_rig_reference_shade(rig, p);
            for (int c = 0; c < 3; ++c) analytic.at(static_cast<int>(y), x, c) = ref[c];
            if (std::abs(p.x()) <= rig.strip_half && std::abs(p.y()) <= rig.strip_half)
                strip[static_cast<size_t>(y) * size + x] = 1;
        }
    });

    double fwd_min = 1e300, fwd_max = 0.0, def_max = 0.0, fwd_mean = 0.0, def_mean = 0.0;
    int64_t count = 0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            if (!strip[static_cast<size_t>(y) * size + x]) continue;
            ++count;
            double fdev = 0.0, ddev = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double ref = analytic.at(y, x, c);
                fdev = std::max(fdev, std::abs(fwd.at(y, x, c) - ref) / ref);
                ddev = std::max(ddev, std::abs(def.at(y, x, c) - ref) / ref);
            }
            fwd_min = std::min(fwd_min, fdev);
            fwd_max = std::max(fwd_max, fdev);
            def_max = std::max(def_max, ddev);
            fwd_mean += fdev;
            def_mean += ddev;
        }
    fwd_mean /= std::max<int64_t>(1, count);
    def_mean /= std::max<int64_t>(1, count);

    fs::create_directories(out_dir);
    write_image_pair((fs::path(out_dir) / "forward").string(), fwd);
    write_image_pair((fs::path(out_dir) / "deferred").string(), def);
    write_image_pair((fs::path(out_dir) / "analytic").string(), analytic);

    std::ostringstream report;
    report << "pixels_in_strip = " << count << "\n";
    report << "spp = " << spp << "\n";
    report << "forward_rel_deviation_min = " << fwd_min << "\n";
    report << "forward_rel_deviation_mean = " << fwd_mean << "\n";
    report << "forward_rel_deviation_max = " << fwd_max << "\n";
    report << "deferred_rel_deviation_mean = " << def_mean << "\n";
    report << "deferred_rel_deviation_max = " << def_max << "\n";
    atomic_write_file((fs::path(out_dir) / "divergence_report.txt").string(), report.str());
    std::printf("%s", report.str().c_str());
    return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& mask_dir,
             bool rescale) {
    std::vector<fs::path> preds;
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.path().extension() == ".pfm") preds.push_back(e.path());
    std::sort(preds.begin(), preds.end());
    if (preds.empty()) throw Error("cli", "no .pfm images in " + pred_dir);

    double sum = 0.0;
    for (const auto& p : preds) {
        const fs::path gt_path = fs::path(gt_dir) / p.filename();
        ImageF pred = load_pfm(p.string());
        const ImageF gt = load_pfm(gt_path.string());
        std::vector<uint8_t> mask(pred.pixel_count(), 1);
        if (!mask_dir.empty()) {
            const ImageF m = load_pfm((fs::path(mask_dir) / p.filename()).string());
            for (size_t i = 0; i < mask.size(); ++i) mask[i] = m.data[i] > 0.5 ? 1 : 0;
        }
        if (rescale) {
            const Vec3 f = basecolor_rescale(pred, gt, mask);
            for (int y = 0; y < pred.height; ++y)
                for (int x = 0; x < pred.width; ++x)
                    for (int c = 0; c < 3; ++c) pred.at(y, x, c) *= f[c];
        }
        const double db = psnr(tonemap_srgb(pred), tonemap_srgb(gt), mask);
        sum += db;
        std::printf("%s: %.3f dB\n", p.filename().c_str(), db);
    }
    std::printf("mean: %.3f dB over %zu images\n", sum / preds.size(), preds.size());
    return 0;
}

int cmd_gradcheck(const std::string& scene_arg, double h, int spp, uint64_t seed) {
    GradcheckFixture fx;
    if (scene_arg == "tiny") {
        fx = make_gradcheck_fixture(seed);
    } else {
        throw Error("cli", "gradcheck currently supports the built-in 'tiny' scene");
    }
    fx.scene.sync_bound_positions();
    Bvh bvh = build_bvh(fx.scene.mesh);
    LossOptions opts;
    opts.stage = TrainStage::Pbr;
    opts.spp = spp;
    opts.seed = seed;
    const auto rows = check_gradients(fx.scene, fx.view, &bvh, all_param_groups(), h, opts);
    bool ok = true;
    std::printf("%-10s %14s %14s %14s\n", "group", "max_rel_err", "analytic", "fd");
    for (const auto& r : rows) {
        std::printf("%-10s %14.6e %14.6e %14.6e\n", param_group_name(r.group), r.max_rel_err,
                    r.analytic, r.fd);
        ok = ok && r.max_rel_err < 1e-3;
    }
    std::printf("gradcheck %s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deferred physically-based splat renderer and trainer"};
    app.require_subcommand(1);
    uint64_t seed = 0;
    int threads = 0;
    app.add_option("--seed", seed, "deterministic seed");
    app.add_option("--threads", threads, "worker threads (0 = hardware)");

    // render
    auto* render = app.add_subcommand("render", "render one view of a scene");
    std::string scene_path, camera_path, out, mode = "deferred", strategy = "fibonacci",
                             visibility = "traced";
    int view_index = 0, spp = 64;
    bool light_envmap = false, normalize = false, denoise = false;
    render->add_option("--scene", scene_path)->required();
    render->add_option("--camera", camera_path)->required();
    render->add_option("--view", view_index);
    render->add_option("--mode", mode)->check(CLI::IsMember({"forward", "deferred"}));
    render->add_option("--spp", spp);
    render->add_option("--strategy", strategy)->check(CLI::IsMember({"fibonacci", "mis"}));
    render->add_option("--visibility", visibility)->check(CLI::IsMember({"traced", "baked"}));
    render->add_flag("--light-envmap", light_envmap, "evaluate global light from the envmap");
    render->add_flag("--normalize-gbuffer", normalize);
    render->add_flag("--denoise", denoise);
    render->add_option("--out", out)->required();

    // train
    auto* train = app.add_subcommand("train", "two-stage training from a config file");
    std::string config_path;
    train->add_option("--config", config_path)->required();

    // relight
    auto* relight = app.add_subcommand("relight", "render a trained scene under a new envmap");
    std::string envmap_path, out_dir = "relit";
    std::string relight_vis = "baked";
    int relight_spp = 64;
    bool relight_denoise = false;
    relight->add_option("--scene", scene_path)->required();
    relight->add_option("--envmap", envmap_path)->required();
    relight->add_option("--camera", camera_path)->required();
    relight->add_option("--visibility", relight_vis)->check(CLI::IsMember({"traced", "baked"}));
    relight->add_option("--spp", relight_spp);
    relight->add_flag("--denoise", relight_denoise);
    relight->add_option("--out", out_dir)->required();

    // bake
    auto* bake = app.add_subcommand("bake", "bake per-splat visibility into aux SH");
    int bake_dirs = 256;
    bake->add_option("--scene", scene_path)->required();
    bake->add_option("--dirs", bake_dirs);
    bake->add_option("--out", out)->required();

    // stats-opacity
    auto* stats = app.add_subcommand("stats-opacity", "hull-distance opacity histogram CSV");
    int bins = 16;
    stats->add_option("--scene", scene_path)->required();
    stats->add_option("--bins", bins);
    stats->add_option("--out", out)->required();

    // demo-hidden
    auto* demo = app.add_subcommand("demo-hidden",
                                    "forward vs deferred vs reference on the hidden-splat rig");
    int demo_spp = 4096, demo_size = 96;
    demo->add_option("--spp", demo_spp);
    demo->add_option("--size", demo_size);
    demo->add_option("--out", out_dir)->required();

    // eval
    auto* eval = app.add_subcommand("eval", "PSNR between two PFM image directories");
    std::string pred_dir, gt_dir, mask_dir;
    bool rescale = false;
    eval->add_option("--pred", pred_dir)->required();
    eval->add_option("--gt", gt_dir)->required();
    eval->add_option("--mask", mask_dir);
    eval->add_flag("--rescale-basecolor", rescale);

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_scene = "tiny";
    double gc_h = 1e-5;
    int gc_spp = 8;
    gradcheck->add_option("--scene", gc_scene);
    gradcheck->add_option("--h", gc_h);
    gradcheck->add_option("--spp", gc_spp);

    if (argc <= 1) {
        std::cout << app.help() << std::endl;
        return 1;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    set_thread_count(threads);
    try {
        if (render->parsed())
            return cmd_render(scene_path, camera_path, view_index, mode, spp, strategy, visibility,
                              light_envmap, normalize, denoise, seed, out);
        if (train->parsed()) return cmd_train(config_path);
        if (relight->parsed())
            return cmd_relight(scene_path, envmap_path, camera_path, relight_vis, relight_spp,
                               relight_denoise, seed, out_dir);
        if (bake->parsed()) return cmd_bake(scene_path, bake_dirs, out);
        if (stats->parsed()) return cmd_stats_opacity(scene_path, bins, out);
        if (demo->parsed()) return cmd_demo_hidden(out_dir, demo_spp, demo_size, seed);
        if (eval->parsed()) return cmd_eval(pred_dir, gt_dir, mask_dir, rescale);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_scene, gc_h, gc_spp, seed);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
