// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/errors.hpp"
#include "dpgs/bvh.hpp"
#include "dpgs/losses.hpp"
#include "dpgs/mesh_ops.hpp"
#include "dpgs/rigs.hpp"
#include "dpgs/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace dpgs;

TEST_CASE("masked opacity loss: rest state, single pixel, mask gate") {
    SUBCASE("zero opacity outside the mask costs nothing") {
        std::vector<double> o(16, 0.0);
        std::vector<uint8_t> mask(16, 0);
        CHECK(loss_masked_opacity(o, mask, nullptr) == 0.0);
    }
    SUBCASE("single background pixel at o=0.5") {
        std::vector<double> o{0.5};
        std::vector<uint8_t> mask{0};
        CHECK(loss_masked_opacity(o, mask, nullptr) == doctest::Approx(0.6931).epsilon(1e-4));
    }
    SUBCASE("all-foreground mask gates everything") {
        std::vector<double> o{0.3, 0.99, 0.7};
        std::vector<uint8_t> mask{1, 1, 1};
        CHECK(loss_masked_opacity(o, mask, nullptr) == 0.0);
    }
}

TEST_CASE("scale hinge: arithmetic, rest state, gradient") {
    TriangleMesh mesh;
    mesh.vertices = {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 2, 0)};
    mesh.faces = {Eigen::Vector3i(0, 1, 2)};
    HybridScene scene = bind_gaussians(mesh);
    std::vector<double> rc{1.0}; // pretend circumradius 1

    SUBCASE("hinge arithmetic") {
        scene.gaussians[0].s_raw = Vec3(std::log(0.3), std::log(0.1), std::log(0.05));
        double loss = loss_scale(scene, 0.2, rc, nullptr);
        CHECK(loss == doctest::Approx(0.1).epsilon(1e-9));
    }
    SUBCASE("inside the threshold: zero with zero gradient") {
        scene.gaussians[0].s_raw = Vec3::Constant(std::log(0.1));
        std::vector<Vec3> grad;
        CHECK(loss_scale(scene, 0.2, rc, &grad) == 0.0);
        CHECK(grad[0] == Vec3::Zero());
    }
    SUBCASE("gradient matches finite differences away from the hinge") {
        scene.gaussians[0].s_raw = Vec3(std::log(0.35), std::log(0.1), std::log(0.01));
        std::vector<Vec3> grad;
        loss_scale(scene, 0.2, rc, &grad);
        const double h = 1e-6;
        for (int k = 0; k < 3; ++k) {
            HybridScene p = scene, m = scene;
            p.gaussians[0].s_raw[k] += h;
            m.gaussians[0].s_raw[k] -= h;
            const double fd = (loss_scale(p, 0.2, rc, nullptr) - loss_scale(m, 0.2, rc, nullptr)) /
                              (2 * h);
            CHECK(std::abs(fd - grad[0][k]) <= 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("surface loss: rest, displacement value, vertex gradient") {
    TriangleMesh mesh = make_test_mesh("icosphere", TestMeshParams{0, 1.0});
    HybridScene scene = bind_gaussians(mesh);
    SUBCASE("at rest") { CHECK(loss_surface(scene, nullptr) == 0.0); }
    SUBCASE("single displaced splat") {
        for (auto& v : scene.mesh.vertices) v += Vec3(0.1, 0, 0);
        scene.sync_bound_positions();
        // Every centroid moved by (0.1,0,0): each contributes 0.01.
        CHECK(loss_surface(scene, nullptr) ==
              doctest::Approx(0.01 * static_cast<double>(scene.gaussians.size())).epsilon(1e-9));
    }
    SUBCASE("vertex gradient matches finite differences") {
        Pcg32 rng(3);
        for (auto& v : scene.mesh.vertices)
            v += 0.05 * Vec3(rng.next_double() - 0.5, rng.next_double() - 0.5, rng.next_double() - 0.5);
        scene.sync_bound_positions();
        std::vector<Vec3> grad;
        loss_surface(scene, &grad);
        const double h = 1e-7;
        for (int vi = 0; vi < 3; ++vi) {
            for (int k = 0; k < 3; ++k) {
                HybridScene p = scene, m = scene;
                p.mesh.vertices[vi][k] += h;
                p.sync_bound_positions();
                m.mesh.vertices[vi][k] -= h;
                m.sync_bound_positions();
                const double fd =
                    (loss_surface(p, nullptr) - loss_surface(m, nullptr)) / (2 * h);
                CHECK(std::abs(fd - grad[vi][k]) <= 1e-6 * std::max(1.0, std::abs(fd)));
            }
        }
    }
}

TEST_CASE("pseudo-normal from depth") {
    Camera cam = look_at_camera(Vec3(0, 0, 0), Vec3(0, 0, 1), Vec3(0, 1, 0), 45.0, 16, 16);
    SUBCASE("fronto-parallel plane gives the negative view axis") {
        std::vector<double> depth(16 * 16, 2.0);
        const ImageF n = pseudo_normal_from_depth(depth, cam);
        for (int y = 4; y < 12; ++y)
            for (int x = 4; x < 12; ++x) {
                CHECK(n.at(y, x, 2) == doctest::Approx(-1.0).epsilon(1e-9));
                CHECK(std::abs(n.at(y, x, 0)) < 1e-9);
            }
    }
    SUBCASE("tilted plane is recovered within a degree") {
        // Plane z = 2 + 0.5 y_world in camera space; depth solves
        // d = 2 + 0.5 * d * (py - cy)/fy.
        std::vector<double> depth(16 * 16);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                const double ry = (y + 0.5 - cam.cy) / cam.fy;
                depth[static_cast<size_t>(y) * 16 + x] = 2.0 / (1.0 - 0.5 * ry);
            }
        const ImageF n = pseudo_normal_from_depth(depth, cam);
        const Vec3 expected = Vec3(0, 0.5, -1).normalized(); // plane z - 0.5 y = 2
        for (int y = 4; y < 12; ++y)
            for (int x = 4; x < 12; ++x) {
                const Vec3 got(n.at(y, x, 0), n.at(y, x, 1), n.at(y, x, 2));
                CHECK(std::acos(std::clamp(got.dot(expected), -1.0, 1.0)) < kPi / 180.0);
            }
    }
    SUBCASE("single pixel image falls back to the view direction") {
        Camera one = cam;
        one.width = one.height = 1;
        one.cx = one.cy = 0.5;
        std::vector<double> depth{3.0};
        const ImageF n = pseudo_normal_from_depth(depth, one);
        CHECK(Vec3(n.at(0, 0, 0), n.at(0, 0, 1), n.at(0, 0, 2)).norm() ==
              doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("normal loss endpoints") {
    const int n = 4;
    std::vector<uint8_t> mask(n * n, 1);
    ImageF pseudo(n, n, 3);
    std::vector<double> nmap(static_cast<size_t>(n) * n * 3, 0.0);
    for (int i = 0; i < n * n; ++i) {
        pseudo.data[static_cast<size_t>(i) * 3 + 2] = 1.0;
        nmap[static_cast<size_t>(i) * 3 + 2] = 2.5; // parallel, unnormalized
    }
    CHECK(loss_normal(nmap, pseudo, mask, n, n, nullptr) == doctest::Approx(-1.0).epsilon(1e-12));
    for (int i = 0; i < n * n; ++i) {
        nmap[static_cast<size_t>(i) * 3 + 2] = 0.0;
        nmap[static_cast<size_t>(i) * 3 + 0] = 1.4; // perpendicular
    }
    CHECK(loss_normal(nmap, pseudo, mask, n, n, nullptr) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("normal loss gradient matches finite differences") {
    Pcg32 rng(5);
    const int n = 6;
    std::vector<uint8_t> mask(n * n, 1);
    ImageF pseudo(n, n, 3);
    std::vector<double> nmap(static_cast<size_t>(n) * n * 3);
    for (int i = 0; i < n * n; ++i) {
        Vec3 p(rng.next_double() - 0.5, rng.next_double() - 0.5, -1.0);
        p.normalize();
        Vec3 m(rng.next_double() - 0.5, rng.next_double() - 0.5, -0.5 - rng.next_double());
        for (int c = 0; c < 3; ++c) {
            pseudo.data[static_cast<size_t>(i) * 3 + c] = p[c];
            nmap[static_cast<size_t>(i) * 3 + c] = m[c];
        }
    }
    std::vector<double> grad;
    loss_normal(nmap, pseudo, mask, n, n, &grad);
    const double h = 1e-6;
    for (size_t j = 0; j < nmap.size(); j += 7) {
        auto p = nmap, m = nmap;
        p[j] += h;
        m[j] -= h;
        const double fd =
            (loss_normal(p, pseudo, mask, n, n, nullptr) - loss_normal(m, pseudo, mask, n, n, nullptr)) /
            (2 * h);
        CHECK(std::abs(fd - grad[j]) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("smoothness loss: flat and linear ramps cost nothing") {
    const int n = 8;
    std::vector<uint8_t> mask(n * n, 1);
    ImageF gt(n, n, 3);
    std::vector<double> flat(static_cast<size_t>(n) * n, 0.7);
    CHECK(loss_smooth(flat, 1, gt, mask, n, n, nullptr) == 0.0);
    std::vector<double> ramp(static_cast<size_t>(n) * n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) ramp[static_cast<size_t>(y) * n + x] = 0.1 * x + 0.05 * y;
    CHECK(loss_smooth(ramp, 1, gt, mask, n, n, nullptr) < 1e-12);
}

TEST_CASE("smoothness loss weights drop across image edges") {
    const int n = 8;
    std::vector<uint8_t> mask(n * n, 1);
    std::vector<double> step(static_cast<size_t>(n) * n, 0.0);
    for (int y = 0; y < n; ++y)
        for (int x = n / 2; x < n; ++x) step[static_cast<size_t>(y) * n + x] = 1.0;

    ImageF flat_gt(n, n, 3);
    ImageF edge_gt(n, n, 3);
    for (int y = 0; y < n; ++y)
        for (int x = n / 2; x < n; ++x)
            for (int c = 0; c < 3; ++c) edge_gt.at(y, x, c) = 1.0;

    const double on_flat = loss_smooth(step, 1, flat_gt, mask, n, n, nullptr);
    const double on_edge = loss_smooth(step, 1, edge_gt, mask, n, n, nullptr);
    CHECK(on_edge / on_flat < 0.5);
}

TEST_CASE("photometric loss values and subgradient sign") {
    const int n = 4;
    ImageF a(n, n, 3), b(n, n, 3);
    std::vector<uint8_t> mask(n * n, 1);
    for (int i = 0; i < n * n * 3; ++i) {
        a.data[i] = 0.5;
        b.data[i] = 0.5;
    }
    CHECK(loss_photometric(a, b, mask, nullptr) == 0.0);
    for (int i = 0; i < n * n * 3; ++i) a.data[i] = 0.6;
    ImageF grad;
    CHECK(loss_photometric(a, b, mask, &grad) == doctest::Approx(0.1).epsilon(1e-12));
    for (double g : grad.data) CHECK(g > 0.0);
}

TEST_CASE("total loss composes the weighted terms") {
    const GradcheckFixture fx = make_gradcheck_fixture(17);
    Bvh bvh = build_bvh(fx.scene.mesh);
    LossOptions opts;
    opts.spp = 8;
    opts.weights.lambda_sc = 1.7;
    opts.weights.lambda_sr = 0.8;
    opts.weights.lambda_o = 1.3;
    opts.weights.lambda_normal = 0.02;
    const LossReport r = total_loss(fx.scene, fx.view, &bvh, opts);
    const double expected = r.l1 + r.pbr + r.smooth + 1.3 * r.o + 1.7 * r.sc + 0.8 * r.sr +
                            0.02 * r.normal;
    CHECK(r.total == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(r.total - expected) < 1e-9);
}

TEST_CASE("lambda linearity: doubling lambda_sc doubles its contribution") {
    const GradcheckFixture fx = make_gradcheck_fixture(19);
    Bvh bvh = build_bvh(fx.scene.mesh);
    LossOptions opts;
    opts.spp = 4;
    opts.stage = TrainStage::Stage2;
    const LossReport r1 = total_loss(fx.scene, fx.view, &bvh, opts);
    opts.weights.lambda_sc *= 2.0;
    const LossReport r2 = total_loss(fx.scene, fx.view, &bvh, opts);
    CHECK(r2.sc == doctest::Approx(r1.sc).epsilon(1e-12)); // raw term unchanged
    CHECK(r2.total - r1.total == doctest::Approx(r1.sc).epsilon(1e-9));
    for (size_t i = 0; i < r1.grads.s_raw.size(); ++i) {
        // The sc gradient doubles; other contributions to s_raw stay.
        const Vec3 diff = r2.grads.s_raw[i] - r1.grads.s_raw[i];
        // diff equals the original sc gradient contribution (lambda_sc=1)
        // which we can recover by an independent evaluation.
        std::vector<Vec3> sc_grad;
        loss_scale(fx.scene, opts.weights.kappa_rc, face_circumradii(fx.scene.mesh), &sc_grad);
        CHECK((diff - sc_grad[i]).norm() < 1e-12);
    }
}

TEST_CASE("full-graph gradients match central finite differences per group") {
    const GradcheckFixture fx = make_gradcheck_fixture(23);
    Bvh bvh = build_bvh(fx.scene.mesh);
    LossOptions opts;
    opts.stage = TrainStage::Pbr;
    opts.spp = 8;
    opts.seed = 5;
    const auto rows =
        check_gradients(fx.scene, fx.view, &bvh, all_param_groups(), 1e-5, opts);
    for (const auto& row : rows) {
        INFO(param_group_name(row.group), " worst index ", row.worst_index, " analytic ",
             row.analytic, " fd ", row.fd);
        CHECK(row.max_rel_err < 1e-3);
    }
}

TEST_CASE("two step sizes agree (Richardson-style confidence)") {
    const GradcheckFixture fx = make_gradcheck_fixture(29);
    Bvh bvh = build_bvh(fx.scene.mesh);
    LossOptions opts;
    opts.stage = TrainStage::Pbr;
    opts.spp = 4;
    const std::vector<ParamGroup> groups{ParamGroup::QNormal, ParamGroup::Vertices};
    const auto a = check_gradients(fx.scene, fx.view, &bvh, groups, 1e-5, opts);
    const auto b = check_gradients(fx.scene, fx.view, &bvh, groups, 5e-6, opts);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].max_rel_err < 1e-3);
        CHECK(b[i].max_rel_err < 1e-3);
    }
}

TEST_CASE("detached visibility: frozen-V finite differences are the contract") {
    // With visibility frozen, perturbing vertices must reproduce the
    // analytic vertex gradient even though a live trace would change V.
    const GradcheckFixture fx = make_gradcheck_fixture(31);
    Bvh bvh = build_bvh(fx.scene.mesh);
    LossOptions opts;
    opts.stage = TrainStage::Pbr;
    opts.spp = 4;
    const auto rows = check_gradients(fx.scene, fx.view, &bvh, {ParamGroup::Vertices}, 1e-5, opts);
    CHECK(rows[0].max_rel_err < 1e-3);
}
