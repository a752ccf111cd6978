// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/errors.hpp"
#include "dpgs/mesh_ops.hpp"
#include "dpgs/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace dpgs;

TEST_CASE("circumradius closed forms") {
    // Equilateral, side 1.
    const Vec3 a(0, 0, 0), b(1, 0, 0), c(0.5, std::sqrt(3.0) / 2.0, 0);
    CHECK(circumradius(a, b, c) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));
    // Right triangle, legs 3 and 4: half the hypotenuse.
    CHECK(circumradius(Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 4, 0)) ==
          doctest::Approx(2.5).epsilon(1e-12));
    // Collinear points.
    CHECK_THROWS_AS(circumradius(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)), Error);
}

TEST_CASE("circumradius scales with the vertices") {
    Pcg32 rng(3);
    for (int i = 0; i < 50; ++i) {
        const Vec3 a(rng.next_double(), rng.next_double(), rng.next_double());
        const Vec3 b(rng.next_double() + 1.0, rng.next_double(), rng.next_double());
        const Vec3 c(rng.next_double(), rng.next_double() + 1.0, rng.next_double());
        const double k = 0.3 + 3.0 * rng.next_double();
        CHECK(circumradius(k * a, k * b, k * c) ==
              doctest::Approx(k * circumradius(a, b, c)).epsilon(1e-12));
    }
}

TEST_CASE("rotated_normal identity and quarter turn") {
    const Vec3 n(0, 0, 1);
    CHECK((rotated_normal(n, Vec4(1, 0, 0, 0)) - n).norm() < 1e-15);
    // 90 degrees about x: (0,0,1) -> (0,-1,0).
    const double s = std::sqrt(0.5);
    const Vec3 r = rotated_normal(n, Vec4(s, s, 0, 0));
    CHECK((r - Vec3(0, -1, 0)).norm() < 1e-12);
}

TEST_CASE("rotated_normal gradient matches finite differences") {
    Pcg32 rng(5);
    const double h = 1e-6;
    for (int trial = 0; trial < 10; ++trial) {
        Vec4 q(1.0, 0.3 * rng.next_double(), 0.3 * rng.next_double(), 0.3 * rng.next_double());
        Vec3 n(rng.next_double() - 0.5, rng.next_double() - 0.5, 1.0);
        n.normalize();
        const Vec3 d_out(rng.next_double(), rng.next_double(), rng.next_double());
        Vec4 d_q = Vec4::Zero();
        Vec3 d_n = Vec3::Zero();
        quat_rotate_backward(q, n, d_out, d_q, d_n);
        for (int k = 0; k < 4; ++k) {
            Vec4 qp = q, qm = q;
            qp[k] += h;
            qm[k] -= h;
            const double fd =
                (rotated_normal(n, qp).dot(d_out) - rotated_normal(n, qm).dot(d_out)) / (2 * h);
            CHECK(std::abs(fd - d_q[k]) <= 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("rotated_normal preserves length") {
    Pcg32 rng(7);
    for (int i = 0; i < 100; ++i) {
        Vec4 q(rng.next_double() + 0.2, rng.next_double() - 0.5, rng.next_double() - 0.5,
               rng.next_double() - 0.5);
        Vec3 n(rng.next_double() - 0.5, rng.next_double() - 0.5, rng.next_double() - 0.5);
        if (n.norm() < 1e-3) continue;
        n.normalize();
        CHECK(std::abs(rotated_normal(n, q).norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("cleanup merges duplicates and drops degenerates") {
    SUBCASE("duplicate face removed") {
        TriangleMesh m;
        m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
        m.faces = {Eigen::Vector3i(0, 1, 2), Eigen::Vector3i(0, 1, 2)};
        CHECK(cleanup_mesh(m).faces.size() == 1);
    }
    SUBCASE("coincident vertices merged and faces remapped") {
        TriangleMesh m;
        m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 0, 0)};
        m.faces = {Eigen::Vector3i(0, 1, 2), Eigen::Vector3i(0, 3, 2)};
        const TriangleMesh out = cleanup_mesh(m);
        CHECK(out.vertices.size() == 3);
        CHECK(out.faces.size() == 1); // the two faces became identical
    }
    SUBCASE("degenerate face dropped") {
        TriangleMesh m;
        m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
        m.faces = {Eigen::Vector3i(0, 1, 2)};
        CHECK(cleanup_mesh(m).faces.empty());
    }
    SUBCASE("already-clean mesh unchanged") {
        const TriangleMesh m = make_test_mesh("icosphere", TestMeshParams{1, 1.0});
        const TriangleMesh once = cleanup_mesh(m);
        CHECK(once.vertices.size() == m.vertices.size());
        CHECK(once.faces.size() == m.faces.size());
        const TriangleMesh twice = cleanup_mesh(once);
        REQUIRE(twice.vertices.size() == once.vertices.size());
        for (size_t i = 0; i < once.vertices.size(); ++i)
            CHECK(once.vertices[i] == twice.vertices[i]);
        for (size_t i = 0; i < once.faces.size(); ++i) CHECK(once.faces[i] == twice.faces[i]);
    }
}

TEST_CASE("test meshes have the expected shapes") {
    const TriangleMesh ico0 = make_test_mesh("icosphere", TestMeshParams{0, 1.0});
    CHECK(ico0.faces.size() == 20);
    CHECK(ico0.vertices.size() == 12);

    const TriangleMesh cube = make_test_mesh("cube", TestMeshParams{1, 1.0});
    CHECK(cube.faces.size() == 12);
    CHECK(cube.vertices.size() == 8);

    const TriangleMesh ico2 = make_test_mesh("icosphere", TestMeshParams{2, 1.0});
    CHECK(ico2.faces.size() == 320);
    for (const auto& v : ico2.vertices) CHECK(std::abs(v.norm() - 1.0) < 1e-6);

    CHECK_THROWS_AS(make_test_mesh("nonsense", TestMeshParams{}), Error);
    CHECK_THROWS_AS(make_test_mesh("icosphere", TestMeshParams{-1, 1.0}), Error);
}

TEST_CASE("binding: single triangle") {
    TriangleMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    m.faces = {Eigen::Vector3i(0, 1, 2)};
    const HybridScene scene = bind_gaussians(m);
    REQUIRE(scene.gaussians.size() == 1);
    const Gaussian3D& g = scene.gaussians[0];
    CHECK((g.mu - Vec3(1.0 / 3, 1.0 / 3, 0)).norm() < 1e-12);
    CHECK((g.mu_init - g.mu).norm() == 0.0);
    CHECK((scene.splat_normal(0) - Vec3(0, 0, 1)).norm() < 1e-12);
    CHECK(g.alpha() == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("binding: icosphere audit") {
    const TriangleMesh mesh = make_test_mesh("icosphere", TestMeshParams{2, 1.0});
    const HybridScene scene = bind_gaussians(mesh);
    REQUIRE(scene.gaussians.size() == 320);
    for (size_t i = 0; i < scene.gaussians.size(); ++i) {
        const Gaussian3D& g = scene.gaussians[i];
        CHECK(g.tri_id == static_cast<int32_t>(i));
        CHECK(std::abs(g.q_shape.norm() - 1.0) < 1e-9);
        const double rc = circumradius(mesh.vertices[mesh.faces[i][0]],
                                       mesh.vertices[mesh.faces[i][1]],
                                       mesh.vertices[mesh.faces[i][2]]);
        CHECK(g.scale().maxCoeff() <= kBindScaleFraction * rc * (1.0 + 1e-9));
        CHECK((g.mu - mesh.face_centroid(static_cast<int>(i))).norm() < 1e-9);
        // Shape frame z tracks the face normal.
        const Vec3 fn = mesh.face_normal_raw(static_cast<int>(i)).normalized();
        CHECK((quat_to_mat(g.q_shape).col(2) - fn).norm() < 1e-9);
    }
}

TEST_CASE("binding an empty mesh fails") {
    CHECK_THROWS_AS(bind_gaussians(TriangleMesh{}), Error);
}
