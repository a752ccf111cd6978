// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/scene.hpp"

#include "dpgs/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dpgs {

void Envmap::finalize() {
    if (width <= 0 || height <= 0 || rgb.size() != static_cast<size_t>(width) * height * 3)
        throw Error("scene_model", "envmap grid size mismatch");
    row_cdf.assign(height, 0.0);
    col_cdf.assign(static_cast<size_t>(height) * width, 0.0);
    texel_solid_angle_row.assign(height, 0.0);
    total_weight = 0.0;
    const double dphi = kTwoPi / width;
    for (int y = 0; y < height; ++y) {
        const double ct0 = std::cos(kPi * y / height);
        const double ct1 = std::cos(kPi * (y + 1) / height);
        const double omega = dphi * (ct0 - ct1); // per texel in this row
        texel_solid_angle_row[y] = omega;
        double row_sum = 0.0;
        for (int x = 0; x < width; ++x) {
            const Vec3 c = texel(y, x);
            if (!(c.x() >= 0.0) || !(c.y() >= 0.0) || !(c.z() >= 0.0) || !c.allFinite())
                throw Error("scene_model", "envmap values must be finite and >= 0");
            const double lum = 0.2126 * c.x() + 0.7152 * c.y() + 0.0722 * c.z();
            row_sum += lum * omega;
            col_cdf[static_cast<size_t>(y) * width + x] = row_sum;
        }
        total_weight += row_sum;
        row_cdf[y] = total_weight;
    }
    if (total_weight <= 0.0) throw Error("scene_model", "envmap is completely black");
    for (auto& v : row_cdf) v /= total_weight;
    for (int y = 0; y < height; ++y) {
        const double row_total = col_cdf[static_cast<size_t>(y) * width + width - 1];
        if (row_total > 0.0)
            for (int x = 0; x < width; ++x) col_cdf[static_cast<size_t>(y) * width + x] /= row_total;
        else
            for (int x = 0; x < width; ++x)
                col_cdf[static_cast<size_t>(y) * width + x] = (x + 1.0) / width;
    }
    row_cdf[height - 1] = 1.0;
}

Vec3 Envmap::dir_of_texel(double y, double x) const {
    const double theta = kPi * y / height;
    const double phi = kTwoPi * x / width - kPi;
    const double st = std::sin(theta);
    return Vec3(st * std::sin(phi), std::cos(theta), st * std::cos(phi));
}

void Envmap::texel_of_dir(const Vec3& dir, double& y, double& x) const {
    const double theta = std::acos(std::clamp(dir.y(), -1.0, 1.0));
    double phi = std::atan2(dir.x(), dir.z());
    y = theta / kPi * height;
    x = (phi + kPi) / kTwoPi * width;
}

Vec3 Envmap::lookup(const Vec3& dir) const {
    double y, x;
    texel_of_dir(dir, y, x);
    int iy = std::clamp(static_cast<int>(y), 0, height - 1);
    int ix = std::clamp(static_cast<int>(x), 0, width - 1);
    return texel(iy, ix);
}

bool HybridScene::fully_bound() const {
    if (gaussians.size() != mesh.face_count()) return false;
    for (size_t i = 0; i < gaussians.size(); ++i)
        if (gaussians[i].tri_id != static_cast<int32_t>(i)) return false;
    return !gaussians.empty();
}

void HybridScene::sync_bound_positions() {
    for (auto& g : gaussians)
        if (g.tri_id >= 0) g.mu = mesh.face_centroid(g.tri_id);
}

Vec3 HybridScene::splat_base_normal(int i) const {
    const Gaussian3D& g = gaussians[i];
    if (g.tri_id >= 0) {
        const Vec3 raw = mesh.face_normal_raw(g.tri_id);
        const double len = raw.norm();
        if (len > 1e-18) return raw / len;
    }
    return quat_to_mat(g.q_shape).col(2);
}

Vec3 HybridScene::splat_normal(int i) const {
    return quat_rotate(gaussians[i].q_normal, splat_base_normal(i));
}

double HybridScene::bounding_diameter() const {
    Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
    for (const auto& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    for (const auto& g : gaussians) {
        lo = lo.cwiseMin(g.mu);
        hi = hi.cwiseMax(g.mu);
    }
    if (lo.x() > hi.x()) return 1.0;
    return std::max((hi - lo).norm(), 1e-6);
}

void validate_scene(const HybridScene& scene) {
    for (size_t f = 0; f < scene.mesh.face_count(); ++f) {
        const auto& t = scene.mesh.faces[f];
        for (int k = 0; k < 3; ++k)
            if (t[k] < 0 || t[k] >= static_cast<int>(scene.mesh.vertices.size()))
                throw Error("scene_model", "face index out of range at face " + std::to_string(f));
    }
    for (const auto& v : scene.mesh.vertices)
        if (!v.allFinite()) throw Error("scene_model", "non-finite mesh vertex");

    bool any_bound = false;
    for (size_t i = 0; i < scene.gaussians.size(); ++i) {
        const Gaussian3D& g = scene.gaussians[i];
        if (!g.mu.allFinite() || !g.q_shape.allFinite() || !g.s_raw.allFinite() ||
            !std::isfinite(g.alpha_raw) || !g.albedo_raw.allFinite() ||
            !std::isfinite(g.rough_raw) || !std::isfinite(g.metal_raw) || !g.q_normal.allFinite())
            throw Error("scene_model", "non-finite splat parameter at index " + std::to_string(i));
        for (double v : g.sh_rgb)
            if (!std::isfinite(v)) throw Error("scene_model", "non-finite sh_rgb");
        for (double v : g.sh_aux)
            if (!std::isfinite(v)) throw Error("scene_model", "non-finite sh_aux");
        if (g.q_shape.norm() < 1e-8 || g.q_normal.norm() < 1e-8)
            throw Error("scene_model", "degenerate quaternion at index " + std::to_string(i));
        if (g.tri_id >= 0) {
            any_bound = true;
            if (g.tri_id >= static_cast<int32_t>(scene.mesh.face_count()))
                throw Error("scene_model", "tri_id out of range at index " + std::to_string(i));
            if (!g.mu_init.allFinite())
                throw Error("scene_model", "bound splat with non-finite mu_init");
        }
    }
    if (any_bound && scene.gaussians.size() != scene.mesh.face_count())
        throw Error("scene_model", "binding mismatch: " + std::to_string(scene.gaussians.size()) +
                                       " splats vs " + std::to_string(scene.mesh.face_count()) +
                                       " faces");
    for (double v : scene.light.sh_global)
        if (!std::isfinite(v)) throw Error("scene_model", "non-finite global light SH");
}

void validate_view(const TrainView& view) {
    if (!view.camera.valid()) throw Error("scene_model", "invalid camera");
    if (view.image.height != view.camera.height || view.image.width != view.camera.width ||
        view.image.channels != 3)
        throw Error("scene_model", "view image does not match camera dimensions");
    if (view.mask.size() != view.image.pixel_count())
        throw Error("scene_model", "view mask does not match camera dimensions");
    for (double v : view.image.data)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw Error("scene_model", "view image must be finite and >= 0");
    for (uint8_t m : view.mask)
        if (m > 1) throw Error("scene_model", "mask values must be 0 or 1");
}

} // namespace dpgs
