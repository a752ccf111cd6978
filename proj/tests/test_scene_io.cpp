// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/errors.hpp"
#include "dpgs/mesh_ops.hpp"
#include "dpgs/rng.hpp"
#include "dpgs/scene_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace dpgs;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    const fs::path dir = fs::temp_directory_path() / "dpgs_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

HybridScene random_scene(int n_gauss, uint64_t seed, bool with_envmap) {
    Pcg32 rng(seed);
    TriangleMesh mesh = make_test_mesh("icosphere", TestMeshParams{1, 1.0});
    HybridScene scene;
    scene.mesh = mesh;
    for (int i = 0; i < n_gauss; ++i) {
        Gaussian3D g;
        g.mu = Vec3(rng.next_double() * 4 - 2, rng.next_double() * 4 - 2, rng.next_double() * 4 - 2);
        g.q_shape = Vec4(rng.next_double() + 0.3, rng.next_double() - 0.5, rng.next_double() - 0.5,
                         rng.next_double() - 0.5);
        g.q_shape /= g.q_shape.norm();
        g.s_raw = Vec3(rng.next_double() * 4 - 3, rng.next_double() * 4 - 3, rng.next_double() * 4 - 3);
        g.alpha_raw = rng.next_double() * 6 - 3;
        for (double& v : g.sh_rgb) v = rng.next_double() * 2 - 1;
        g.albedo_raw = Vec3(rng.next_double() * 2 - 1, rng.next_double() * 2 - 1,
                            rng.next_double() * 2 - 1);
        g.rough_raw = rng.next_double() * 2 - 1;
        g.metal_raw = rng.next_double() * 2 - 1;
        g.q_normal = Vec4(1.0, 0.2 * rng.next_double(), 0.2 * rng.next_double(),
                          0.2 * rng.next_double());
        g.q_normal /= g.q_normal.norm();
        for (double& v : g.sh_aux) v = rng.next_double() - 0.5;
        g.tri_id = -1;
        scene.gaussians.push_back(g);
    }
    for (double& v : scene.light.sh_global) v = rng.next_double();
    if (with_envmap) {
        Envmap env;
        env.width = 16;
        env.height = 8;
        env.rgb.resize(static_cast<size_t>(16) * 8 * 3);
        for (auto& v : env.rgb) v = static_cast<float>(rng.next_double() * 3.0);
        env.finalize();
        scene.light.envmap = std::move(env);
    }
    return scene;
}

double max_param_diff(const HybridScene& a, const HybridScene& b) {
    double m = 0.0;
    auto upd = [&](double x, double y) { m = std::max(m, std::abs(x - y)); };
    REQUIRE(a.gaussians.size() == b.gaussians.size());
    for (size_t i = 0; i < a.gaussians.size(); ++i) {
        const auto& ga = a.gaussians[i];
        const auto& gb = b.gaussians[i];
        for (int k = 0; k < 3; ++k) upd(ga.mu[k], gb.mu[k]);
        for (int k = 0; k < 4; ++k) upd(ga.q_shape[k], gb.q_shape[k]);
        for (int k = 0; k < 3; ++k) upd(ga.s_raw[k], gb.s_raw[k]);
        upd(ga.alpha_raw, gb.alpha_raw);
        for (size_t k = 0; k < ga.sh_rgb.size(); ++k) upd(ga.sh_rgb[k], gb.sh_rgb[k]);
        for (int k = 0; k < 3; ++k) upd(ga.albedo_raw[k], gb.albedo_raw[k]);
        upd(ga.rough_raw, gb.rough_raw);
        upd(ga.metal_raw, gb.metal_raw);
        for (int k = 0; k < 4; ++k) upd(ga.q_normal[k], gb.q_normal[k]);
        for (size_t k = 0; k < ga.sh_aux.size(); ++k) upd(ga.sh_aux[k], gb.sh_aux[k]);
        for (int k = 0; k < 3; ++k) upd(ga.mu_init[k], gb.mu_init[k]);
        CHECK(ga.tri_id == gb.tri_id);
    }
    for (size_t i = 0; i < a.mesh.vertices.size(); ++i)
        for (int k = 0; k < 3; ++k) upd(a.mesh.vertices[i][k], b.mesh.vertices[i][k]);
    return m;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("activation examples") {
    Gaussian3D g;
    g.rough_raw = 0.0;
    CHECK(g.rough() == doctest::Approx(0.545).epsilon(1e-9));
    g.rough_raw = -60.0;
    CHECK(g.rough() == doctest::Approx(0.09).epsilon(1e-9));
    g.albedo_raw = Vec3::Zero();
    CHECK(g.albedo() == Vec3::Constant(0.5));
}

TEST_CASE("activation ranges are strict over random raw inputs") {
    Pcg32 rng(7);
    for (int i = 0; i < 10000; ++i) {
        Gaussian3D g;
        auto r = [&]() { return rng.next_double() * 100.0 - 50.0; };
        g.alpha_raw = r();
        g.rough_raw = r();
        g.metal_raw = r();
        g.albedo_raw = Vec3(r(), r(), r());
        g.s_raw = Vec3(r() * 0.1, r() * 0.1, r() * 0.1);
        CHECK(g.alpha() > 0.0);
        CHECK(g.alpha() < 1.0);
        CHECK(g.rough() >= 0.09);
        CHECK(g.rough() <= 1.0);
        CHECK(g.metal() > 0.0);
        CHECK(g.metal() < 1.0);
        CHECK(g.albedo().minCoeff() > 0.0);
        CHECK(g.albedo().maxCoeff() < 1.0);
        CHECK(g.scale().minCoeff() > 0.0);
    }
}

TEST_CASE("minimal one-triangle scene round-trips") {
    const fs::path dir = temp_dir("minimal");
    TriangleMesh mesh;
    mesh.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    mesh.faces = {Eigen::Vector3i(0, 1, 2)};
    HybridScene scene = bind_gaussians(mesh);
    save_scene(scene, (dir / "one.scene").string());
    const HybridScene loaded = load_scene((dir / "one.scene").string());
    CHECK(loaded.gaussians.size() == 1);
    CHECK(loaded.gaussians[0].tri_id == 0);
    CHECK(loaded.fully_bound());
}

TEST_CASE("binding mismatch is rejected") {
    const fs::path dir = temp_dir("mismatch");
    TriangleMesh mesh;
    mesh.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)};
    mesh.faces = {Eigen::Vector3i(0, 1, 2), Eigen::Vector3i(1, 3, 2)};
    HybridScene scene = bind_gaussians(mesh);
    scene.gaussians.pop_back(); // break the bijection
    // save_scene writes bound=0 for a broken binding, so force the flag.
    save_gaussian_ply((dir / "g.ply").string(), scene.gaussians);
    save_obj((dir / "m.obj").string(), scene.mesh);
    std::ofstream manifest(dir / "bad.scene");
    manifest << "gaussians = g.ply\nmesh = m.obj\nbound = 1\n";
    manifest.close();
    CHECK_THROWS_WITH_AS(load_scene((dir / "bad.scene").string()),
                         doctest::Contains("binding mismatch"), Error);
}

TEST_CASE("empty splat list round-trips") {
    const fs::path dir = temp_dir("empty");
    save_gaussian_ply((dir / "none.ply").string(), {});
    CHECK(load_gaussian_ply((dir / "none.ply").string()).empty());
}

TEST_CASE("random scene round-trips within 1e-6 and second save is byte-identical") {
    const fs::path dir = temp_dir("roundtrip");
    const HybridScene scene = random_scene(100, 5, false);
    save_scene(scene, (dir / "a.scene").string());
    const HybridScene once = load_scene((dir / "a.scene").string());
    CHECK(max_param_diff(scene, once) <= 1e-6);

    save_scene(once, (dir / "b.scene").string());
    const HybridScene twice = load_scene((dir / "b.scene").string());
    CHECK(max_param_diff(once, twice) == 0.0);
    CHECK(file_bytes(dir / "a.gaussians.ply") == file_bytes(dir / "b.gaussians.ply"));
    CHECK(file_bytes(dir / "a.mesh.obj") == file_bytes(dir / "b.mesh.obj"));
}

TEST_CASE("envmap grids survive the round trip bit-exactly") {
    const fs::path dir = temp_dir("envmap");
    const HybridScene scene = random_scene(3, 9, true);
    save_scene(scene, (dir / "e.scene").string());
    const HybridScene loaded = load_scene((dir / "e.scene").string());
    REQUIRE(loaded.light.envmap.has_value());
    CHECK(loaded.light.envmap->rgb == scene.light.envmap->rgb);
}

TEST_CASE("missing and malformed files raise scene errors") {
    CHECK_THROWS_AS(load_scene("/nonexistent/path.scene"), Error);
    const fs::path dir = temp_dir("malformed");
    std::ofstream bad(dir / "bad.ply");
    bad << "not a ply\n";
    bad.close();
    CHECK_THROWS_WITH_AS(load_gaussian_ply((dir / "bad.ply").string()),
                         doctest::Contains("malformed header"), Error);
}

TEST_CASE("non-finite values are rejected on load") {
    const fs::path dir = temp_dir("nonfinite");
    HybridScene scene = random_scene(2, 11, false);
    scene.gaussians[1].s_raw[0] = std::numeric_limits<double>::infinity();
    save_gaussian_ply((dir / "g.ply").string(), scene.gaussians);
    CHECK_THROWS_WITH_AS(load_gaussian_ply((dir / "g.ply").string()),
                         doctest::Contains("non-finite"), Error);
}

TEST_CASE("camera and view lists round-trip") {
    const fs::path dir = temp_dir("views");
    std::vector<Camera> cams;
    cams.push_back(look_at_camera(Vec3(1, 2, 3), Vec3(0, 0, 0), Vec3(0, 0, 1), 40.0, 32, 24));
    cams.push_back(look_at_camera(Vec3(-2, 1, 0.5), Vec3(0.1, 0, 0), Vec3(0, 0, 1), 55.0, 16, 16));
    save_camera_list((dir / "cams.txt").string(), cams);
    const auto loaded = load_camera_list((dir / "cams.txt").string());
    REQUIRE(loaded.size() == 2);
    CHECK((loaded[0].rot - cams[0].rot).norm() < 1e-12);
    CHECK((loaded[1].trans - cams[1].trans).norm() < 1e-12);

    std::vector<TrainView> views(1);
    views[0].camera = cams[1];
    views[0].image = ImageF(16, 16, 3, 0.25);
    views[0].mask.assign(256, 1);
    views[0].mask[3] = 0;
    save_views((dir / "views.txt").string(), views);
    const auto vloaded = load_views((dir / "views.txt").string());
    REQUIRE(vloaded.size() == 1);
    CHECK(vloaded[0].mask[3] == 0);
    CHECK(vloaded[0].mask[4] == 1);
    CHECK(vloaded[0].image.at(7, 7, 1) == doctest::Approx(0.25));
}
