// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/hull.hpp"

#include "dpgs/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <sstream>

namespace dpgs {

namespace {

struct Face {
    int v[3];
    Vec3 normal; // unit, outward
    double offset = 0.0;
    bool alive = true;
    std::vector<int> conflicts;

    double dist(const Vec3& p) const { return normal.dot(p) - offset; }
};

struct Builder {
    const std::vector<Vec3>& pts;
    std::vector<Face> faces;
    std::map<std::pair<int, int>, int> edge_owner; // directed edge -> face
    double eps;

    explicit Builder(const std::vector<Vec3>& p) : pts(p) {
        Vec3 lo = pts[0], hi = pts[0];
        for (const auto& v : pts) {
            lo = lo.cwiseMin(v);
            hi = hi.cwiseMax(v);
        }
        eps = 1e-12 * std::max(1.0, (hi - lo).norm());
    }

    int add_face(int a, int b, int c) {
        Face f;
        f.v[0] = a;
        f.v[1] = b;
        f.v[2] = c;
        const Vec3 n_raw = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
        const double len = n_raw.norm();
        f.normal = len > 0.0 ? Vec3(n_raw / len) : Vec3(0, 0, 1);
        f.offset = f.normal.dot(pts[a]);
        const int id = static_cast<int>(faces.size());
        faces.push_back(std::move(f));
        edge_owner[{a, b}] = id;
        edge_owner[{b, c}] = id;
        edge_owner[{c, a}] = id;
        return id;
    }

    void drop_face(int id) {
        Face& f = faces[id];
        f.alive = false;
        for (int k = 0; k < 3; ++k) {
            const auto key = std::make_pair(f.v[k], f.v[(k + 1) % 3]);
            auto it = edge_owner.find(key);
            if (it != edge_owner.end() && it->second == id) edge_owner.erase(it);
        }
    }

    int neighbor(int face_id, int k) const {
        const Face& f = faces[face_id];
        const auto it = edge_owner.find({f.v[(k + 1) % 3], f.v[k]});
        return it == edge_owner.end() ? -1 : it->second;
    }
};

} // namespace

ConvexHull convex_hull(const std::vector<Vec3>& points) {
    if (points.size() < 4) throw Error("hybrid_mesh", "convex hull needs at least 4 points");
    Builder b(points);

    // Initial simplex: two x-extreme points, the point farthest from their
    // line, then the point farthest from that plane.
    int i0 = 0, i1 = 0;
    for (size_t i = 1; i < points.size(); ++i) {
        if (points[i].x() < points[i0].x()) i0 = static_cast<int>(i);
        if (points[i].x() > points[i1].x()) i1 = static_cast<int>(i);
    }
    if (i0 == i1) i1 = (i0 + 1) % static_cast<int>(points.size());
    int i2 = -1;
    double best = b.eps;
    const Vec3 dir = points[i1] - points[i0];
    for (size_t i = 0; i < points.size(); ++i) {
        const Vec3 rel = points[i] - points[i0];
        const double d = dir.norm() > 0 ? rel.cross(dir).norm() / dir.norm() : rel.norm();
        if (d > best) {
            best = d;
            i2 = static_cast<int>(i);
        }
    }
    if (i2 < 0) throw Error("hybrid_mesh", "all points collinear");
    int i3 = -1;
    best = b.eps;
    const Vec3 plane_n = (points[i1] - points[i0]).cross(points[i2] - points[i0]).normalized();
    for (size_t i = 0; i < points.size(); ++i) {
        const double d = std::abs(plane_n.dot(points[i] - points[i0]));
        if (d > best) {
            best = d;
            i3 = static_cast<int>(i);
        }
    }
    if (i3 < 0) throw Error("hybrid_mesh", "all points coplanar");

    if (plane_n.dot(points[i3] - points[i0]) > 0.0) std::swap(i1, i2);
    b.add_face(i0, i1, i2);
    b.add_face(i0, i2, i3);
    b.add_face(i2, i1, i3);
    b.add_face(i1, i0, i3);

    // Conflict assignment.
    for (size_t i = 0; i < points.size(); ++i) {
        for (auto& f : b.faces) {
            if (f.dist(points[i]) > b.eps) {
                f.conflicts.push_back(static_cast<int>(i));
                break;
            }
        }
    }

    std::deque<int> pending;
    for (int f = 0; f < static_cast<int>(b.faces.size()); ++f)
        if (!b.faces[f].conflicts.empty()) pending.push_back(f);

    while (!pending.empty()) {
        const int fid = pending.front();
        pending.pop_front();
        if (!b.faces[fid].alive || b.faces[fid].conflicts.empty()) continue;

        // Farthest conflict point of this face.
        int apex = -1;
        double far_d = -1.0;
        for (int p : b.faces[fid].conflicts) {
            const double d = b.faces[fid].dist(points[p]);
            if (d > far_d) {
                far_d = d;
                apex = p;
            }
        }

        // Visible set via BFS over adjacency.
        std::vector<int> visible;
        std::vector<char> mark(b.faces.size(), 0);
        std::deque<int> queue{fid};
        mark[fid] = 1;
        while (!queue.empty()) {
            const int f = queue.front();
            queue.pop_front();
            if (!b.faces[f].alive) continue;
            if (b.faces[f].dist(points[apex]) > b.eps) {
                visible.push_back(f);
                for (int k = 0; k < 3; ++k) {
                    const int nb = b.neighbor(f, k);
                    if (nb >= 0 && !mark[nb]) {
                        mark[nb] = 1;
                        queue.push_back(nb);
                    }
                }
            }
        }

        // Horizon edges, oriented as they appear in visible faces.
        std::vector<std::pair<int, int>> horizon;
        std::vector<int> orphans;
        for (int f : visible) {
            for (int k = 0; k < 3; ++k) {
                const int nb = b.neighbor(f, k);
                const bool nb_visible =
                    nb >= 0 && b.faces[nb].alive && b.faces[nb].dist(points[apex]) > b.eps;
                if (!nb_visible)
                    horizon.emplace_back(b.faces[f].v[k], b.faces[f].v[(k + 1) % 3]);
            }
            for (int p : b.faces[f].conflicts)
                if (p != apex) orphans.push_back(p);
            b.faces[f].conflicts.clear();
        }
        for (int f : visible) b.drop_face(f);

        std::vector<int> fresh;
        for (const auto& [ea, eb] : horizon) fresh.push_back(b.add_face(ea, eb, apex));

        for (int p : orphans) {
            for (int f : fresh) {
                if (b.faces[f].dist(points[p]) > b.eps) {
                    b.faces[f].conflicts.push_back(p);
                    break;
                }
            }
        }
        for (int f : fresh)
            if (!b.faces[f].conflicts.empty()) pending.push_back(f);
    }

    ConvexHull hull;
    hull.points = points;
    for (const auto& f : b.faces)
        if (f.alive) hull.faces.emplace_back(f.v[0], f.v[1], f.v[2]);
    return hull;
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Ericson-style closest point on triangle.
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return (p - (a + v * ab)).norm();
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return (p - (a + w * ac)).norm();
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + w * (c - b))).norm();
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return (p - (a + ab * v + ac * w)).norm();
}

double hull_surface_distance(const ConvexHull& hull, const Vec3& p) {
    double best = 1e300;
    for (const auto& f : hull.faces)
        best = std::min(best, point_triangle_distance(p, hull.points[f[0]], hull.points[f[1]],
                                                      hull.points[f[2]]));
    return best;
}

std::vector<OpacityBin> opacity_depth_stats(const std::vector<Gaussian3D>& gaussians, int bins) {
    if (bins < 1) throw Error("hybrid_mesh", "bin count must be >= 1");
    std::vector<Vec3> centers;
    centers.reserve(gaussians.size());
    for (const auto& g : gaussians) centers.push_back(g.mu);
    const ConvexHull hull = convex_hull(centers);

    std::vector<double> dist(gaussians.size());
    double max_d = 0.0;
    for (size_t i = 0; i < gaussians.size(); ++i) {
        dist[i] = hull_surface_distance(hull, centers[i]);
        max_d = std::max(max_d, dist[i]);
    }
    const double hi = max_d > 0.0 ? max_d : 1.0;

    std::vector<OpacityBin> rows(bins);
    std::vector<double> alpha_sum(bins, 0.0);
    for (int k = 0; k < bins; ++k) {
        rows[k].bin_lo = hi * k / bins;
        rows[k].bin_hi = hi * (k + 1) / bins;
    }
    for (size_t i = 0; i < gaussians.size(); ++i) {
        int k = static_cast<int>(dist[i] / hi * bins);
        k = std::clamp(k, 0, bins - 1);
        alpha_sum[k] += gaussians[i].alpha();
        rows[k].count++;
    }
    for (int k = 0; k < bins; ++k)
        rows[k].mean_opacity = rows[k].count > 0 ? alpha_sum[k] / rows[k].count : 0.0;
    return rows;
}

std::string opacity_stats_csv(const std::vector<OpacityBin>& rows) {
    std::ostringstream out;
    out << "bin_lo,bin_hi,mean_opacity,count\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%lld\n", r.bin_lo, r.bin_hi,
                      r.mean_opacity, static_cast<long long>(r.count));
        out << buf;
    }
    return out.str();
}

} // namespace dpgs
