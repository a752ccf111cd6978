// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/brdf.hpp"
#include "dpgs/camera.hpp"
#include "dpgs/image.hpp"
#include "dpgs/math.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace dpgs {

inline constexpr int kShRgbCoeffs = 16; // radiance, degree 3
inline constexpr int kShAuxCoeffs = 9;  // indirect light / baked visibility, degree 2
inline constexpr int kShRgbFloats = kShRgbCoeffs * 3;
inline constexpr int kShAuxFloats = kShAuxCoeffs * 3;
inline constexpr double kRoughMin = 0.09;
inline constexpr double kRoughSpan = 0.91;

// One splat. Optimization parameters are stored raw (unconstrained); the
// activated values are derived through the accessors below and never stored.
struct Gaussian3D {
    Vec3 mu = Vec3::Zero();                 // derived from the bound triangle when tri_id >= 0
    Vec4 q_shape = Vec4(1, 0, 0, 0);        // splat orientation, normalized on use
    Vec3 s_raw = Vec3::Zero();              // log scales
    double alpha_raw = 0.0;                 // logit opacity
    std::array<double, kShRgbFloats> sh_rgb{};  // coefficient-major, RGB interleaved
    Vec3 albedo_raw = Vec3::Zero();         // logit
    double rough_raw = 0.0;                 // logit of (r - 0.09)/0.91
    double metal_raw = 0.0;                 // logit
    Vec4 q_normal = Vec4(1, 0, 0, 0);       // learnable normal rotation, normalized on use
    std::array<double, kShAuxFloats> sh_aux{};  // indirect light; visibility after baking
    int32_t tri_id = -1;                    // bound triangle index, -1 = unbound
    Vec3 mu_init = Vec3::Zero();            // binding-time position, frozen

    double alpha() const { return sigmoid(alpha_raw); }
    Vec3 scale() const { return s_raw.array().exp(); }
    Vec3 albedo() const {
        return Vec3(sigmoid(albedo_raw[0]), sigmoid(albedo_raw[1]), sigmoid(albedo_raw[2]));
    }
    double rough() const { return kRoughMin + kRoughSpan * sigmoid(rough_raw); }
    double metal() const { return sigmoid(metal_raw); }
    BrdfParams brdf() const { return BrdfParams{albedo(), rough(), metal()}; }
    Mat3 shape_rot() const { return quat_to_mat(q_shape); }
    Mat3 covariance() const {
        const Mat3 r = shape_rot();
        const Vec3 s = scale();
        return r * s.cwiseProduct(s).asDiagonal() * r.transpose();
    }
};

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Eigen::Vector3i> faces;

    size_t face_count() const { return faces.size(); }
    Vec3 face_centroid(int f) const {
        const auto& t = faces[f];
        return (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
    }
    // Unnormalized cross product; callers normalize.
    Vec3 face_normal_raw(int f) const {
        const auto& t = faces[f];
        return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    }
    double face_area(int f) const { return 0.5 * face_normal_raw(f).norm(); }
};

// Equirectangular HDR radiance map with luminance sampling tables. The grid is
// kept in float so on-disk PFM round trips are bit exact. Direction
// convention: +Z at image center, +Y at the top row,
// dir(theta, phi) = (sin t sin p, cos t, sin t cos p).
struct Envmap {
    int width = 0, height = 0;
    std::vector<float> rgb; // row-major, top-down, 3 channels

    // Built by finalize(): row-marginal and per-row-conditional CDFs over
    // luminance * solid angle, plus cached per-row solid angles.
    std::vector<double> row_cdf;
    std::vector<double> col_cdf; // height * width, per-row cumulative
    std::vector<double> texel_solid_angle_row;
    double total_weight = 0.0;

    void finalize();
    Vec3 texel(int y, int x) const {
        const size_t i = (static_cast<size_t>(y) * width + x) * 3;
        return Vec3(rgb[i], rgb[i + 1], rgb[i + 2]);
    }
    Vec3 lookup(const Vec3& dir) const;
    Vec3 dir_of_texel(double y, double x) const; // continuous texel coords
    void texel_of_dir(const Vec3& dir, double& y, double& x) const;
};

struct EnvironmentLight {
    std::array<double, kShAuxFloats> sh_global{}; // degree-2 SH, RGB interleaved
    std::optional<Envmap> envmap;
};

struct HybridScene {
    TriangleMesh mesh;
    std::vector<Gaussian3D> gaussians;
    EnvironmentLight light;
    bool bvh_dirty = true;
    bool baked = false;

    bool fully_bound() const;
    // Refresh mu of bound splats from current triangle centroids.
    void sync_bound_positions();
    // World normal of splat i: bound splats rotate the current face normal,
    // unbound splats rotate the local +z of q_shape.
    Vec3 splat_base_normal(int i) const;
    Vec3 splat_normal(int i) const;
    double bounding_diameter() const;
};

struct TrainView {
    ImageF image;              // linear RGB
    std::vector<uint8_t> mask; // height*width, {0,1}
    Camera camera;
};

// Throws dpgs::Error("scene_model", ...) describing the first violated
// invariant; no-op on a valid scene.
void validate_scene(const HybridScene& scene);
void validate_view(const TrainView& view);

} // namespace dpgs
