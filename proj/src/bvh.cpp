// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/bvh.hpp"

#include "dpgs/errors.hpp"
#include "dpgs/parallel.hpp"
#include "dpgs/sh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dpgs {

namespace {

constexpr int kLeafSize = 4;
constexpr int kMaxDepth = 64;

bool ray_triangle(const Vec3& o, const Vec3& d, const Vec3& v0, const Vec3& v1, const Vec3& v2,
                  double t_max) {
    // Moller-Trumbore, double precision, no backface culling.
    const Vec3 e1 = v1 - v0;
    const Vec3 e2 = v2 - v0;
    const Vec3 pvec = d.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < 1e-14) return false;
    const double inv_det = 1.0 / det;
    const Vec3 tvec = o - v0;
    const double u = tvec.dot(pvec) * inv_det;
    if (u < 0.0 || u > 1.0) return false;
    const Vec3 qvec = tvec.cross(e1);
    const double v = d.dot(qvec) * inv_det;
    if (v < 0.0 || u + v > 1.0) return false;
    const double t = e2.dot(qvec) * inv_det;
    return t > kRayTEps && t < t_max;
}

struct BuildEntry {
    int node = 0;
    int begin = 0, end = 0;
    int depth = 0;
};

} // namespace

Bvh build_bvh(const TriangleMesh& mesh) {
    if (mesh.face_count() == 0) throw Error("visibility", "cannot build a BVH over an empty mesh");
    const int n = static_cast<int>(mesh.face_count());

    std::vector<Vec3> centroids(n);
    std::vector<Vec3> lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
        const auto& f = mesh.faces[i];
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        lo[i] = a.cwiseMin(b).cwiseMin(c);
        hi[i] = a.cwiseMax(b).cwiseMax(c);
        centroids[i] = (a + b + c) / 3.0;
    }

    Bvh bvh;
    bvh.tri_order.resize(n);
    std::iota(bvh.tri_order.begin(), bvh.tri_order.end(), 0);
    bvh.nodes.reserve(static_cast<size_t>(2) * n);
    bvh.nodes.emplace_back();

    std::vector<BuildEntry> stack{{0, 0, n, 0}};
    while (!stack.empty()) {
        const BuildEntry e = stack.back();
        stack.pop_back();
        Vec3 blo = Vec3::Constant(1e300), bhi = Vec3::Constant(-1e300);
        for (int i = e.begin; i < e.end; ++i) {
            blo = blo.cwiseMin(lo[bvh.tri_order[i]]);
            bhi = bhi.cwiseMax(hi[bvh.tri_order[i]]);
        }
        Bvh::Node& node = bvh.nodes[e.node];
        node.lo = blo;
        node.hi = bhi;
        const int count = e.end - e.begin;
        if (count <= kLeafSize || e.depth >= kMaxDepth) {
            node.left = e.begin;
            node.right = -1;
            node.count = count;
            continue;
        }
        Vec3 clo = Vec3::Constant(1e300), chi = Vec3::Constant(-1e300);
        for (int i = e.begin; i < e.end; ++i) {
            clo = clo.cwiseMin(centroids[bvh.tri_order[i]]);
            chi = chi.cwiseMax(centroids[bvh.tri_order[i]]);
        }
        int axis = 0;
        const Vec3 extent = chi - clo;
        if (extent[1] > extent[axis]) axis = 1;
        if (extent[2] > extent[axis]) axis = 2;
        const int mid = e.begin + count / 2;
        std::nth_element(bvh.tri_order.begin() + e.begin, bvh.tri_order.begin() + mid,
                         bvh.tri_order.begin() + e.end, [&](int a, int b) {
                             if (centroids[a][axis] != centroids[b][axis])
                                 return centroids[a][axis] < centroids[b][axis];
                             return a < b;
                         });
        const int left = static_cast<int>(bvh.nodes.size());
        bvh.nodes.emplace_back();
        bvh.nodes.emplace_back();
        bvh.nodes[e.node].left = left;
        bvh.nodes[e.node].right = left + 1;
        bvh.nodes[e.node].count = 0;
        stack.push_back({left, e.begin, mid, e.depth + 1});
        stack.push_back({left + 1, mid, e.end, e.depth + 1});
    }

    bvh.tri_verts.resize(static_cast<size_t>(3) * n);
    for (int i = 0; i < n; ++i) {
        const auto& f = mesh.faces[bvh.tri_order[i]];
        bvh.tri_verts[3 * i + 0] = mesh.vertices[f[0]];
        bvh.tri_verts[3 * i + 1] = mesh.vertices[f[1]];
        bvh.tri_verts[3 * i + 2] = mesh.vertices[f[2]];
    }
    return bvh;
}

namespace {

bool slab_hit(const Bvh::Node& node, const Vec3& o, const Vec3& inv_d, double t_max) {
    double t0 = kRayTEps, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
        const double lo = (node.lo[a] - o[a]) * inv_d[a];
        const double hi = (node.hi[a] - o[a]) * inv_d[a];
        t0 = std::max(t0, std::min(lo, hi));
        t1 = std::min(t1, std::max(lo, hi));
    }
    return t0 <= t1;
}

} // namespace

bool trace_occlusion(const Bvh& bvh, const Vec3& origin, const Vec3& dir, double t_max,
                     int skip_tri) {
    if (bvh.empty()) return false;
    const Vec3 inv_d(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
    int stack[kMaxDepth + 2];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Bvh::Node& node = bvh.nodes[stack[--top]];
        if (!slab_hit(node, origin, inv_d, t_max)) continue;
        if (node.leaf()) {
            for (int i = 0; i < node.count; ++i) {
                const int slot = node.left + i;
                if (bvh.tri_order[slot] == skip_tri) continue;
                if (ray_triangle(origin, dir, bvh.tri_verts[3 * slot], bvh.tri_verts[3 * slot + 1],
                                 bvh.tri_verts[3 * slot + 2], t_max))
                    return true;
            }
        } else {
            stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }
    return false;
}

bool trace_occlusion_brute(const TriangleMesh& mesh, const Vec3& origin, const Vec3& dir,
                           double t_max) {
    for (const auto& f : mesh.faces)
        if (ray_triangle(origin, dir, mesh.vertices[f[0]], mesh.vertices[f[1]],
                         mesh.vertices[f[2]], t_max))
            return true;
    return false;
}

BakeResult bake_visibility(const HybridScene& scene, const Bvh& bvh, int n_dirs, int degree) {
    const int need = sh_coeff_count(degree);
    if (n_dirs < need)
        throw Error("visibility", "bake needs at least " + std::to_string(need) + " directions");
    const double t_max = scene.bounding_diameter();
    const std::vector<Vec3> dirs = fibonacci_sphere(n_dirs);

    BakeResult result;
    result.coeffs.resize(scene.gaussians.size());
    std::vector<double> residuals(scene.gaussians.size(), 0.0);

    parallel_for(0, static_cast<int64_t>(scene.gaussians.size()), [&](int64_t gi) {
        const Vec3 n = scene.splat_normal(static_cast<int>(gi));
        const Vec3 origin = scene.gaussians[gi].mu + kOcclusionEps * n;
        const int own_face = scene.gaussians[gi].tri_id;
        std::vector<double> vis(n_dirs);
        for (int k = 0; k < n_dirs; ++k)
            vis[k] = trace_occlusion(bvh, origin, dirs[k], t_max, own_face) ? 0.0 : 1.0;
        const ShFit fit = sh_project(dirs, vis, 1, degree);
        auto& out = result.coeffs[gi];
        out.fill(0.0);
        for (int j = 0; j < need; ++j)
            for (int c = 0; c < 3; ++c) out[static_cast<size_t>(j) * 3 + c] = fit.coeffs[j];
        residuals[gi] = fit.residual_rms;
    });

    double sq = 0.0;
    for (double r : residuals) sq += r * r;
    result.residual_rms =
        scene.gaussians.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(residuals.size()));
    return result;
}

void finalize_bake(HybridScene& scene, const Bvh& bvh, int n_dirs) {
    const BakeResult baked = bake_visibility(scene, bvh, n_dirs, 2);
    for (size_t i = 0; i < scene.gaussians.size(); ++i) scene.gaussians[i].sh_aux = baked.coeffs[i];
    scene.baked = true;
}

} // namespace dpgs
