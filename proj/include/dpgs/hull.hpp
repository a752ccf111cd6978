// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/math.hpp"
#include "dpgs/scene.hpp"

#include <vector>

namespace dpgs {

struct ConvexHull {
    std::vector<Vec3> points;              // input copy
    std::vector<Eigen::Vector3i> faces;    // indices into points, outward winding
};

// Incremental quickhull over >= 4 non-coplanar points; throws otherwise.
ConvexHull convex_hull(const std::vector<Vec3>& points);

// Exact point-to-triangle distance (interior/edge/vertex regions).
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Min distance from p to any hull face.
double hull_surface_distance(const ConvexHull& hull, const Vec3& p);

struct OpacityBin {
    double bin_lo = 0.0;
    double bin_hi = 0.0;
    double mean_opacity = 0.0;
    int64_t count = 0;
};

// Convex hull of splat centers, then a histogram of mean activated opacity by
// distance from the hull surface.
std::vector<OpacityBin> opacity_depth_stats(const std::vector<Gaussian3D>& gaussians, int bins);

// CSV with header bin_lo,bin_hi,mean_opacity,count.
std::string opacity_stats_csv(const std::vector<OpacityBin>& rows);

} // namespace dpgs
