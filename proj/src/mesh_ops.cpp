// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/mesh_ops.hpp"

#include "dpgs/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace dpgs {

double circumradius(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
    const Vec3 a = v1 - v0;
    const Vec3 b = v2 - v0;
    const double cross_norm = a.cross(b).norm();
    if (cross_norm < 1e-12) throw Error("hybrid_mesh", "degenerate triangle in circumradius");
    return a.norm() * b.norm() * (a - b).norm() / (2.0 * cross_norm);
}

Vec3 rotated_normal(const Vec3& face_normal, const Vec4& q_normal) {
    return quat_rotate(q_normal, face_normal);
}

TriangleMesh cleanup_mesh(const TriangleMesh& mesh) {
    TriangleMesh out;
    // Quantize to the merge tolerance so coincident vertices collapse.
    constexpr double kTol = 1e-7;
    std::map<std::array<int64_t, 3>, int> grid;
    std::vector<int> remap(mesh.vertices.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3& v = mesh.vertices[i];
        const std::array<int64_t, 3> key = {static_cast<int64_t>(std::llround(v.x() / kTol)),
                                            static_cast<int64_t>(std::llround(v.y() / kTol)),
                                            static_cast<int64_t>(std::llround(v.z() / kTol))};
        auto it = grid.find(key);
        if (it == grid.end()) {
            grid.emplace(key, static_cast<int>(out.vertices.size()));
            remap[i] = static_cast<int>(out.vertices.size());
            out.vertices.push_back(v);
        } else {
            remap[i] = it->second;
        }
    }
    std::set<std::array<int, 3>> seen;
    for (const auto& f : mesh.faces) {
        const int a = remap[f[0]], b = remap[f[1]], c = remap[f[2]];
        if (a == b || b == c || a == c) continue;
        const double area =
            0.5 * (out.vertices[b] - out.vertices[a]).cross(out.vertices[c] - out.vertices[a]).norm();
        if (area <= 1e-12) continue;
        // Canonical key up to cyclic rotation (winding preserved in output).
        std::array<int, 3> key = {a, b, c};
        int lo = 0;
        for (int k = 1; k < 3; ++k)
            if (key[k] < key[lo]) lo = k;
        const std::array<int, 3> canon = {key[lo], key[(lo + 1) % 3], key[(lo + 2) % 3]};
        if (!seen.insert(canon).second) continue;
        out.faces.emplace_back(a, b, c);
    }
    return out;
}

HybridScene bind_gaussians(const TriangleMesh& mesh) {
    if (mesh.face_count() == 0) throw Error("hybrid_mesh", "cannot bind an empty mesh");
    HybridScene scene;
    scene.mesh = mesh;
    scene.gaussians.reserve(mesh.face_count());
    for (size_t f = 0; f < mesh.face_count(); ++f) {
        const auto& tri = mesh.faces[f];
        const Vec3 v0 = mesh.vertices[tri[0]];
        const Vec3 v1 = mesh.vertices[tri[1]];
        const Vec3 v2 = mesh.vertices[tri[2]];
        const Vec3 n_raw = (v1 - v0).cross(v2 - v0);
        if (n_raw.norm() < 1e-12)
            throw Error("hybrid_mesh", "degenerate face " + std::to_string(f) +
                                           " encountered during binding; run cleanup_mesh first");
        const double r_c = circumradius(v0, v1, v2);

        Gaussian3D g;
        g.tri_id = static_cast<int32_t>(f);
        g.mu = (v0 + v1 + v2) / 3.0;
        g.mu_init = g.mu;

        // Frame: z = face normal, x = longest edge direction.
        const Vec3 z_axis = n_raw.normalized();
        const Vec3 edges[3] = {v1 - v0, v2 - v1, v0 - v2};
        int longest = 0;
        for (int k = 1; k < 3; ++k)
            if (edges[k].norm() > edges[longest].norm()) longest = k;
        Vec3 x_axis = (edges[longest] - z_axis * z_axis.dot(edges[longest])).normalized();
        const Vec3 y_axis = z_axis.cross(x_axis);
        Mat3 rot;
        rot.col(0) = x_axis;
        rot.col(1) = y_axis;
        rot.col(2) = z_axis;
        const Quat q(rot);
        g.q_shape = Vec4(q.w(), q.x(), q.y(), q.z());
        g.q_shape /= g.q_shape.norm();

        g.s_raw = Vec3(std::log(kBindScaleFraction * r_c), std::log(kBindScaleFraction * r_c),
                       std::log(kBindFlatFraction * r_c));
        g.alpha_raw = logit(kBindAlpha);
        scene.gaussians.push_back(g);
    }
    scene.bvh_dirty = true;
    return scene;
}

namespace {

TriangleMesh make_icosphere(int level, double radius) {
    // Icosahedron.
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriangleMesh m;
    const double verts[12][3] = {{-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0},
                                 {0, -1, t}, {0, 1, t},   {0, -1, -t}, {0, 1, -t},
                                 {t, 0, -1}, {t, 0, 1},   {-t, 0, -1}, {-t, 0, 1}};
    for (const auto& v : verts) m.vertices.push_back(Vec3(v[0], v[1], v[2]).normalized());
    const int faces[20][3] = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                              {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                              {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                              {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (const auto& f : faces) m.faces.emplace_back(f[0], f[1], f[2]);

    for (int l = 0; l < level; ++l) {
        TriangleMesh next;
        next.vertices = m.vertices;
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int idx = static_cast<int>(next.vertices.size());
            next.vertices.push_back(((m.vertices[a] + m.vertices[b]) * 0.5).normalized());
            midpoint.emplace(key, idx);
            return idx;
        };
        for (const auto& f : m.faces) {
            const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.faces.emplace_back(f[0], ab, ca);
            next.faces.emplace_back(f[1], bc, ab);
            next.faces.emplace_back(f[2], ca, bc);
            next.faces.emplace_back(ab, bc, ca);
        }
        m = std::move(next);
    }
    for (auto& v : m.vertices) v *= radius;
    return m;
}

TriangleMesh make_cube(double half) {
    TriangleMesh m;
    for (int i = 0; i < 8; ++i)
        m.vertices.emplace_back((i & 1 ? half : -half), (i & 2 ? half : -half),
                                (i & 4 ? half : -half));
    // Outward-facing winding per axis-aligned side.
    const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                             {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
    for (const auto& q : quads) {
        m.faces.emplace_back(q[0], q[1], q[2]);
        m.faces.emplace_back(q[0], q[2], q[3]);
    }
    return m;
}

// Grid plane in the z=0 plane, normal +z, spanning [-half, half]^2.
TriangleMesh make_plane(int res, double half, double z = 0.0, const Vec2& center = Vec2(0, 0)) {
    TriangleMesh m;
    const int n = std::max(1, res);
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
            m.vertices.emplace_back(center.x() - half + 2.0 * half * j / n,
                                    center.y() - half + 2.0 * half * i / n, z);
    auto vid = [&](int i, int j) { return i * (n + 1) + j; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            m.faces.emplace_back(vid(i, j), vid(i, j + 1), vid(i + 1, j + 1));
            m.faces.emplace_back(vid(i, j), vid(i + 1, j + 1), vid(i + 1, j));
        }
    return m;
}

TriangleMesh make_rect(double z, const Vec2& center, const Vec2& half) {
    TriangleMesh m;
    m.vertices.emplace_back(center.x() - half.x(), center.y() - half.y(), z);
    m.vertices.emplace_back(center.x() + half.x(), center.y() - half.y(), z);
    m.vertices.emplace_back(center.x() + half.x(), center.y() + half.y(), z);
    m.vertices.emplace_back(center.x() - half.x(), center.y() + half.y(), z);
    m.faces.emplace_back(0, 1, 2);
    m.faces.emplace_back(0, 2, 3);
    return m;
}

} // namespace

TriangleMesh make_test_mesh(const std::string& kind, const TestMeshParams& params) {
    if (params.size <= 0.0) throw Error("hybrid_mesh", "test mesh size must be positive");
    if (kind == "icosphere") {
        if (params.subdivisions < 0 || params.subdivisions > 6)
            throw Error("hybrid_mesh", "icosphere subdivisions must be in [0, 6]");
        return make_icosphere(params.subdivisions, params.size);
    }
    if (kind == "cube") return make_cube(params.size);
    if (kind == "plane") {
        if (params.subdivisions < 1) throw Error("hybrid_mesh", "plane needs subdivisions >= 1");
        return make_plane(params.subdivisions, params.size);
    }
    if (kind == "two_plates") {
        // Shaded plate at z = 0 plus an opaque occluder between it and the
        // bright region of the environment.
        TriangleMesh m = make_rect(0.0, Vec2(0, 0), Vec2(params.plate_half, params.plate_half));
        TriangleMesh occ = make_rect(params.occluder_z, params.occluder_center, params.occluder_half);
        const int base = static_cast<int>(m.vertices.size());
        for (const auto& v : occ.vertices) m.vertices.push_back(v);
        for (const auto& f : occ.faces) m.faces.emplace_back(f[0] + base, f[1] + base, f[2] + base);
        return m;
    }
    throw Error("hybrid_mesh", "unknown test mesh kind: " + kind);
}

} // namespace dpgs
