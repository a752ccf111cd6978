// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/raster.hpp"

#include "dpgs/errors.hpp"
#include "dpgs/parallel.hpp"
#include "dpgs/postproc.hpp"
#include "dpgs/rng.hpp"
#include "dpgs/sh.hpp"

#include <algorithm>
#include <cmath>

namespace dpgs {

void GBuffer::resize(int h, int w) {
    height = h;
    width = w;
    const size_t n = static_cast<size_t>(h) * w;
    depth.assign(n, 0.0);
    normal.assign(n * 3, 0.0);
    albedo.assign(n * 3, 0.0);
    metal.assign(n, 0.0);
    rough.assign(n, 0.0);
    opacity.assign(n, 0.0);
    aux.assign(n * kShAuxFloats, 0.0);
    radiance.assign(n * 3, 0.0);
}

std::optional<Splat2D> project_gaussian(const Gaussian3D& g, const Camera& cam) {
    const Vec3 t = cam.to_camera(g.mu);
    if (t.z() < cam.near_clip || t.z() > cam.far_clip) return std::nullopt;

    const Mat3 cov_world = g.covariance();
    const Mat3 cov_cam = cam.rot * cov_world * cam.rot.transpose();

    Eigen::Matrix<double, 2, 3> j;
    const double tz = t.z();
    j << cam.fx / tz, 0.0, -cam.fx * t.x() / (tz * tz), 0.0, cam.fy / tz,
        -cam.fy * t.y() / (tz * tz);

    Splat2D s;
    s.cov2d = j * cov_cam * j.transpose() + kCovRegularization * Mat2::Identity();
    s.conic = s.cov2d.inverse();
    s.center = cam.project(t);
    s.depth = tz;
    s.t_cam = t;

    const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
    const double det = s.cov2d.determinant();
    const double lam_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    s.radius = 3.0 * std::sqrt(lam_max);

    if (s.center.x() + s.radius < 0.0 || s.center.x() - s.radius > cam.width ||
        s.center.y() + s.radius < 0.0 || s.center.y() - s.radius > cam.height)
        return std::nullopt;
    return s;
}

namespace {

GaussAttr make_attr(const HybridScene& scene, int gi, const Vec3& cam_pos) {
    const Gaussian3D& g = scene.gaussians[gi];
    GaussAttr a;
    a.alpha = g.alpha();
    a.albedo = g.albedo();
    a.rough = g.rough();
    a.metal = g.metal();
    a.base_normal = scene.splat_base_normal(gi);
    a.normal = quat_rotate(g.q_normal, a.base_normal);
    const Vec3 rel = g.mu - cam_pos;
    a.view_dist = std::max(rel.norm(), 1e-12);
    a.view_dir = rel / a.view_dist;
    a.radiance_raw =
        sh_eval_rgb(std::span<const double>(g.sh_rgb.data(), g.sh_rgb.size()), kShRgbCoeffs,
                    a.view_dir) +
        Vec3::Constant(0.5);
    a.radiance = a.radiance_raw.cwiseMax(0.0);
    return a;
}

struct RowFragment {
    int x;
    int splat;
    double falloff;
    double alpha;
    double depth;
    int gauss;
};

} // namespace

GBuffer rasterize_gbuffer(const HybridScene& scene, const Camera& cam, const RasterOptions& opts,
                          RasterCache* cache) {
    if (!cam.valid()) throw Error("splat_raster", "invalid camera");
    const int h = cam.height, w = cam.width;
    const int n_gauss = static_cast<int>(scene.gaussians.size());
    const Vec3 cam_pos = cam.position();

    std::vector<Splat2D> splats;
    {
        std::vector<std::optional<Splat2D>> projected(n_gauss);
        parallel_for(0, n_gauss, [&](int64_t i) {
            projected[i] = project_gaussian(scene.gaussians[i], cam);
            if (projected[i]) projected[i]->gauss = static_cast<int>(i);
        });
        for (auto& p : projected)
            if (p) splats.push_back(*p);
    }
    std::vector<GaussAttr> attrs(n_gauss);
    parallel_for(0, n_gauss, [&](int64_t i) { attrs[i] = make_attr(scene, static_cast<int>(i), cam_pos); });

    GBuffer gb;
    gb.resize(h, w);

    std::vector<std::vector<Fragment>> row_frags(h);
    std::vector<std::vector<int>> row_counts(h); // fragments per pixel in row

    parallel_for(0, h, [&](int64_t yi) {
        const int y = static_cast<int>(yi);
        const double py = y + 0.5;
        std::vector<RowFragment> candidates;
        for (int si = 0; si < static_cast<int>(splats.size()); ++si) {
            const Splat2D& s = splats[si];
            if (py < s.center.y() - s.radius || py > s.center.y() + s.radius) continue;
            const double alpha_act = attrs[s.gauss].alpha;
            const int x0 = std::max(0, static_cast<int>(std::floor(s.center.x() - s.radius)));
            const int x1 = std::min(w - 1, static_cast<int>(std::ceil(s.center.x() + s.radius)));
            for (int x = x0; x <= x1; ++x) {
                const Vec2 d(x + 0.5 - s.center.x(), py - s.center.y());
                const double power = -0.5 * d.dot(s.conic * d);
                if (power < -12.0) continue; // falloff below any useful alpha
                const double falloff = std::exp(power);
                const double alpha = std::min(kAlphaClamp, alpha_act * falloff);
                if (alpha < kAlphaMin) continue;
                candidates.push_back({x, si, falloff, alpha, s.depth, s.gauss});
            }
        }
        // Per-pixel front-to-back order, ties broken by splat index.
        std::sort(candidates.begin(), candidates.end(), [](const RowFragment& a, const RowFragment& b) {
            if (a.x != b.x) return a.x < b.x;
            if (a.depth != b.depth) return a.depth < b.depth;
            return a.gauss < b.gauss;
        });

        auto& frags = row_frags[y];
        auto& counts = row_counts[y];
        counts.assign(w, 0);
        size_t i = 0;
        while (i < candidates.size()) {
            const int x = candidates[i].x;
            size_t j = i;
            double transmittance = 1.0;
            const size_t pix = gb.pix(y, x);
            for (; j < candidates.size() && candidates[j].x == x; ++j) {
                if (transmittance < kTransmittanceMin) break;
                const RowFragment& f = candidates[j];
                const double wgt = transmittance * f.alpha;
                const GaussAttr& a = attrs[f.gauss];
                gb.depth[pix] += wgt * f.depth;
                gb.opacity[pix] += wgt;
                gb.metal[pix] += wgt * a.metal;
                gb.rough[pix] += wgt * a.rough;
                for (int c = 0; c < 3; ++c) {
                    gb.normal[pix * 3 + c] += wgt * a.normal[c];
                    gb.albedo[pix * 3 + c] += wgt * a.albedo[c];
                    gb.radiance[pix * 3 + c] += wgt * a.radiance[c];
                }
                const auto& aux = scene.gaussians[f.gauss].sh_aux;
                for (int c = 0; c < kShAuxFloats; ++c) gb.aux[pix * kShAuxFloats + c] += wgt * aux[c];
                counts[x]++;
                frags.push_back({f.splat, f.falloff, f.alpha});
                transmittance *= (1.0 - f.alpha);
            }
            while (j < candidates.size() && candidates[j].x == x) ++j;
            i = j;
        }
        if (opts.normalized) {
            for (int x = 0; x < w; ++x) {
                const size_t pix = gb.pix(y, x);
                const double o = gb.opacity[pix];
                if (o <= 0.0) continue;
                gb.depth[pix] /= o;
                gb.metal[pix] /= o;
                gb.rough[pix] /= o;
                for (int c = 0; c < 3; ++c) {
                    gb.normal[pix * 3 + c] /= o;
                    gb.albedo[pix * 3 + c] /= o;
                    gb.radiance[pix * 3 + c] /= o;
                }
                for (int c = 0; c < kShAuxFloats; ++c) gb.aux[pix * kShAuxFloats + c] /= o;
            }
        }
    });

    if (cache) {
        if (opts.normalized)
            throw Error("splat_raster", "gradient cache requires the unnormalized blend");
        cache->splats = std::move(splats);
        cache->attrs = std::move(attrs);
        // Row fragments are already in pixel-ascending order within each row.
        cache->frag_offset.assign(static_cast<size_t>(h) * w + 1, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                cache->frag_offset[gb.pix(y, x) + 1] = row_counts[y][x];
        for (size_t p = 1; p < cache->frag_offset.size(); ++p)
            cache->frag_offset[p] += cache->frag_offset[p - 1];
        cache->fragments.clear();
        cache->fragments.reserve(cache->frag_offset.back());
        for (int y = 0; y < h; ++y)
            cache->fragments.insert(cache->fragments.end(), row_frags[y].begin(),
                                    row_frags[y].end());
    }
    return gb;
}

namespace {

Vec3 env_background(const HybridScene& scene, const Camera& cam, double px, double py) {
    if (!scene.light.envmap) return Vec3::Zero();
    return scene.light.envmap->lookup(cam.pixel_ray_dir_world(px, py));
}

} // namespace

ImageF render_deferred(const HybridScene& scene, const Camera& cam, const Bvh* bvh,
                       const RenderOptions& opts, GBuffer* gbuffer_out) {
    if (opts.spp < 1) throw Error("splat_raster", "spp must be >= 1");
    RasterOptions ropts;
    ropts.normalized = opts.normalized_gbuffer;
    GBuffer gb = rasterize_gbuffer(scene, cam, ropts);

    const int h = cam.height, w = cam.width;
    ImageF img(h, w, 3);
    const Vec3 cam_pos = cam.position();

    VisibilitySource vis;
    vis.baked = !opts.traced_visibility;
    if (opts.traced_visibility && bvh) {
        vis.bvh = bvh;
        vis.t_max = scene.bounding_diameter() * 4.0 + 10.0;
    }
    ShadeOptions sopts;
    sopts.mode = opts.mode;
    sopts.light_from_envmap = opts.light_from_envmap;

    std::vector<std::string> row_error(h);
    parallel_for(0, h, [&](int64_t yi) {
        const int y = static_cast<int>(yi);
        for (int x = 0; x < w; ++x) {
            const size_t pix = gb.pix(y, x);
            const double px = x + 0.5, py = y + 0.5;
            // Finite check covers every channel blended into this pixel.
            bool finite = std::isfinite(gb.depth[pix]) && std::isfinite(gb.opacity[pix]) &&
                          std::isfinite(gb.metal[pix]) && std::isfinite(gb.rough[pix]);
            for (int c = 0; c < 3 && finite; ++c)
                finite = std::isfinite(gb.normal[pix * 3 + c]) &&
                         std::isfinite(gb.albedo[pix * 3 + c]);
            if (!finite) {
                if (row_error[y].empty())
                    row_error[y] = "non-finite G-buffer at pixel (" + std::to_string(x) + ", " +
                                   std::to_string(y) + ")";
                continue;
            }
            if (gb.opacity[pix] <= kForegroundTau) {
                const Vec3 bg = env_background(scene, cam, px, py);
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = bg[c];
                continue;
            }
            const Vec3 n_blend(gb.normal[pix * 3], gb.normal[pix * 3 + 1], gb.normal[pix * 3 + 2]);
            const double n_len = n_blend.norm();
            if (n_len < 1e-8) continue; // shaded black
            ShadingPoint sp;
            sp.n = n_blend / n_len;
            const Vec3 p_cam = cam.unproject(px, py, gb.depth[pix]);
            sp.x = cam.rot.transpose() * (p_cam - cam.trans);
            const Vec3 wo_raw = cam_pos - sp.x;
            const double wo_len = wo_raw.norm();
            if (wo_len < 1e-12) continue;
            sp.wo = wo_raw / wo_len;
            if (sp.n.dot(sp.wo) <= 0.0) continue; // backface, shaded black
            sp.brdf.albedo = Vec3(clamp01(gb.albedo[pix * 3]), clamp01(gb.albedo[pix * 3 + 1]),
                                  clamp01(gb.albedo[pix * 3 + 2]));
            sp.brdf.rough = std::clamp(gb.rough[pix], kRoughMin, 1.0);
            sp.brdf.metal = clamp01(gb.metal[pix]);
            for (int c = 0; c < kShAuxFloats; ++c) sp.aux[c] = gb.aux[pix * kShAuxFloats + c];

            Pcg32 rng = pixel_rng(opts.seed, opts.frame, pix);
            const Vec3 out = shade(sp, scene.light, vis, opts.spp, opts.strategy, rng, sopts);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = out[c];
        }
    });
    for (int y = 0; y < h; ++y)
        if (!row_error[y].empty()) throw Error("splat_raster", row_error[y]);

    if (opts.denoise) {
        ImageF depth_map(h, w, 1), normal_map(h, w, 3), albedo_map(h, w, 3);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const size_t pix = gb.pix(y, x);
                depth_map.at(y, x, 0) = gb.depth[pix];
                for (int c = 0; c < 3; ++c) {
                    normal_map.at(y, x, c) = gb.normal[pix * 3 + c];
                    albedo_map.at(y, x, c) = gb.albedo[pix * 3 + c];
                }
            }
        img = bilateral_denoise(img, depth_map, normal_map, albedo_map, BilateralParams{});
    }
    if (gbuffer_out) *gbuffer_out = std::move(gb);
    return img;
}

ImageF render_forward(const HybridScene& scene, const Camera& cam, const Bvh* bvh,
                      const RenderOptions& opts) {
    if (opts.spp < 1) throw Error("splat_raster", "spp must be >= 1");
    RasterCache cache;
    rasterize_gbuffer(scene, cam, RasterOptions{}, &cache);

    const int h = cam.height, w = cam.width;
    ImageF img(h, w, 3);
    const Vec3 cam_pos = cam.position();

    VisibilitySource vis;
    if (bvh) {
        vis.bvh = bvh;
        vis.t_max = scene.bounding_diameter() * 4.0 + 10.0;
    }
    ShadeOptions sopts;
    sopts.mode = opts.mode;
    sopts.light_from_envmap = opts.light_from_envmap;

    parallel_for(0, h, [&](int64_t yi) {
        const int y = static_cast<int>(yi);
        for (int x = 0; x < w; ++x) {
            const size_t pix = static_cast<size_t>(y) * w + x;
            const double px = x + 0.5, py = y + 0.5;
            const Vec3 dirvec((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
            Pcg32 rng = pixel_rng(opts.seed, opts.frame, pix);

            Vec3 acc = Vec3::Zero();
            double transmittance = 1.0;
            for (int fi = cache.frag_offset[pix]; fi < cache.frag_offset[pix + 1]; ++fi) {
                const Fragment& f = cache.fragments[fi];
                const Splat2D& s = cache.splats[f.splat];
                const GaussAttr& a = cache.attrs[s.gauss];
                const double wgt = transmittance * f.alpha;
                transmittance *= (1.0 - f.alpha);

                ShadingPoint sp;
                const Vec3 p_cam = dirvec * s.depth; // ray point at the splat's depth
                sp.x = cam.rot.transpose() * (p_cam - cam.trans);
                sp.n = a.normal;
                const Vec3 wo_raw = cam_pos - sp.x;
                const double wo_len = wo_raw.norm();
                if (wo_len < 1e-12) continue;
                sp.wo = wo_raw / wo_len;
                if (sp.n.dot(sp.wo) <= 0.0) continue;
                sp.brdf = BrdfParams{a.albedo, a.rough, a.metal};
                sp.aux = scene.gaussians[s.gauss].sh_aux;

                const Vec3 c = shade(sp, scene.light, vis, opts.spp, opts.strategy, rng, sopts);
                acc += wgt * c;
            }
            if (scene.light.envmap && transmittance > 0.0)
                acc += transmittance * env_background(scene, cam, px, py);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = acc[c];
        }
    });
    return img;
}

void SceneGrads::resize(const HybridScene& scene) {
    vertices.assign(scene.mesh.vertices.size(), Vec3::Zero());
    const size_t n = scene.gaussians.size();
    alpha_raw.assign(n, 0.0);
    s_raw.assign(n, Vec3::Zero());
    albedo_raw.assign(n, Vec3::Zero());
    rough_raw.assign(n, 0.0);
    metal_raw.assign(n, 0.0);
    q_normal.assign(n, Vec4::Zero());
    sh_rgb.assign(n, {});
    sh_aux.assign(n, {});
    sh_global.fill(0.0);
}

void SceneGrads::set_zero() {
    std::fill(vertices.begin(), vertices.end(), Vec3::Zero());
    std::fill(alpha_raw.begin(), alpha_raw.end(), 0.0);
    std::fill(s_raw.begin(), s_raw.end(), Vec3::Zero());
    std::fill(albedo_raw.begin(), albedo_raw.end(), Vec3::Zero());
    std::fill(rough_raw.begin(), rough_raw.end(), 0.0);
    std::fill(metal_raw.begin(), metal_raw.end(), 0.0);
    std::fill(q_normal.begin(), q_normal.end(), Vec4::Zero());
    for (auto& a : sh_rgb) a.fill(0.0);
    for (auto& a : sh_aux) a.fill(0.0);
    sh_global.fill(0.0);
}

bool SceneGrads::all_finite() const {
    for (const auto& v : vertices)
        if (!v.allFinite()) return false;
    for (double v : alpha_raw)
        if (!std::isfinite(v)) return false;
    for (const auto& v : s_raw)
        if (!v.allFinite()) return false;
    for (const auto& v : albedo_raw)
        if (!v.allFinite()) return false;
    for (double v : rough_raw)
        if (!std::isfinite(v)) return false;
    for (double v : metal_raw)
        if (!std::isfinite(v)) return false;
    for (const auto& v : q_normal)
        if (!v.allFinite()) return false;
    for (const auto& a : sh_rgb)
        for (double v : a)
            if (!std::isfinite(v)) return false;
    for (const auto& a : sh_aux)
        for (double v : a)
            if (!std::isfinite(v)) return false;
    for (double v : sh_global)
        if (!std::isfinite(v)) return false;
    return true;
}

void GBufferGrads::resize(int h, int w) {
    const size_t n = static_cast<size_t>(h) * w;
    depth.assign(n, 0.0);
    normal.assign(n * 3, 0.0);
    albedo.assign(n * 3, 0.0);
    metal.assign(n, 0.0);
    rough.assign(n, 0.0);
    opacity.assign(n, 0.0);
    aux.assign(n * kShAuxFloats, 0.0);
    radiance.assign(n * 3, 0.0);
}

namespace {

// Per-gaussian accumulators feeding the projection/activation chains.
struct GaussAccum {
    double alpha_act = 0.0;
    Vec2 center = Vec2::Zero();
    Mat2 conic = Mat2::Zero();
    double depth = 0.0;
    Vec3 normal = Vec3::Zero();
    Vec3 albedo_act = Vec3::Zero();
    double metal_act = 0.0;
    double rough_act = 0.0;
    std::array<double, kShAuxFloats> aux{};
    Vec3 radiance = Vec3::Zero();
};

} // namespace

void raster_backward(const HybridScene& scene, const Camera& cam, const RasterCache& cache,
                     const GBufferGrads& grads, SceneGrads& out) {
    const int h = cam.height, w = cam.width;
    const int n_gauss = static_cast<int>(scene.gaussians.size());
    std::vector<GaussAccum> acc(n_gauss);
    std::vector<int> splat_of_gauss(n_gauss, -1);
    for (size_t si = 0; si < cache.splats.size(); ++si)
        splat_of_gauss[cache.splats[si].gauss] = static_cast<int>(si);

    // Blend backward, serial over pixels for deterministic accumulation.
    constexpr int kChannels = 1 /*depth*/ + 3 /*normal*/ + 3 /*albedo*/ + 1 /*metal*/ +
                              1 /*rough*/ + kShAuxFloats + 3 /*radiance*/ + 1 /*opacity*/;
    std::vector<double> t_stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t pix = static_cast<size_t>(y) * w + x;
            const int f0 = cache.frag_offset[pix];
            const int f1 = cache.frag_offset[pix + 1];
            if (f0 == f1) continue;

            double up[kChannels];
            int ch = 0;
            up[ch++] = grads.depth[pix];
            for (int c = 0; c < 3; ++c) up[ch++] = grads.normal[pix * 3 + c];
            for (int c = 0; c < 3; ++c) up[ch++] = grads.albedo[pix * 3 + c];
            up[ch++] = grads.metal[pix];
            up[ch++] = grads.rough[pix];
            for (int c = 0; c < kShAuxFloats; ++c) up[ch++] = grads.aux[pix * kShAuxFloats + c];
            for (int c = 0; c < 3; ++c) up[ch++] = grads.radiance[pix * 3 + c];
            up[ch++] = grads.opacity[pix];
            bool any = false;
            for (double v : up) any = any || v != 0.0;
            if (!any) continue;

            t_stack.resize(f1 - f0);
            double transmittance = 1.0;
            for (int i = f0; i < f1; ++i) {
                t_stack[i - f0] = transmittance;
                transmittance *= (1.0 - cache.fragments[i].alpha);
            }

            double accum_after[kChannels] = {0.0};
            double frag_b[kChannels];
            for (int i = f1 - 1; i >= f0; --i) {
                const Fragment& f = cache.fragments[i];
                const Splat2D& s = cache.splats[f.splat];
                const GaussAttr& a = cache.attrs[s.gauss];
                const auto& g_aux = scene.gaussians[s.gauss].sh_aux;
                const double t_i = t_stack[i - f0];
                const double w_i = t_i * f.alpha;

                ch = 0;
                frag_b[ch++] = s.depth;
                for (int c = 0; c < 3; ++c) frag_b[ch++] = a.normal[c];
                for (int c = 0; c < 3; ++c) frag_b[ch++] = a.albedo[c];
                frag_b[ch++] = a.metal;
                frag_b[ch++] = a.rough;
                for (int c = 0; c < kShAuxFloats; ++c) frag_b[ch++] = g_aux[c];
                for (int c = 0; c < 3; ++c) frag_b[ch++] = a.radiance[c];
                frag_b[ch++] = 1.0; // opacity

                double d_alpha = 0.0;
                const double inv_one_minus = 1.0 / (1.0 - f.alpha);
                for (int c = 0; c < kChannels; ++c) {
                    if (up[c] == 0.0) {
                        accum_after[c] += w_i * frag_b[c];
                        continue;
                    }
                    d_alpha += (t_i * frag_b[c] - accum_after[c] * inv_one_minus) * up[c];
                    accum_after[c] += w_i * frag_b[c];
                }

                GaussAccum& ga = acc[s.gauss];
                ch = 0;
                ga.depth += w_i * up[ch++];
                for (int c = 0; c < 3; ++c) ga.normal[c] += w_i * up[ch++];
                for (int c = 0; c < 3; ++c) ga.albedo_act[c] += w_i * up[ch++];
                ga.metal_act += w_i * up[ch++];
                ga.rough_act += w_i * up[ch++];
                for (int c = 0; c < kShAuxFloats; ++c) ga.aux[c] += w_i * up[ch++];
                for (int c = 0; c < 3; ++c) ga.radiance[c] += w_i * up[ch++];

                // alpha_eff = min(clamp, alpha_act * falloff)
                if (a.alpha * f.falloff < kAlphaClamp) {
                    ga.alpha_act += f.falloff * d_alpha;
                    const double d_power = a.alpha * f.falloff * d_alpha;
                    const Vec2 delta(x + 0.5 - s.center.x(), y + 0.5 - s.center.y());
                    const Vec2 d_delta = -d_power * (s.conic * delta);
                    ga.center -= d_delta;
                    ga.conic += -0.5 * d_power * (delta * delta.transpose());
                }
            }
        }
    }

    // Per-gaussian finalize: activation, SH, normal and projection chains.
    double basis[kShRgbCoeffs];
    Vec3 basis_grad[kShRgbCoeffs];
    for (int gi = 0; gi < n_gauss; ++gi) {
        const GaussAccum& ga = acc[gi];
        const Gaussian3D& g = scene.gaussians[gi];
        const GaussAttr& a = cache.attrs[gi];

        // Activations.
        out.alpha_raw[gi] += ga.alpha_act * sigmoid_grad_from_value(a.alpha);
        for (int c = 0; c < 3; ++c)
            out.albedo_raw[gi][c] += ga.albedo_act[c] * sigmoid_grad_from_value(a.albedo[c]);
        out.metal_raw[gi] += ga.metal_act * sigmoid_grad_from_value(a.metal);
        {
            const double sig = (a.rough - kRoughMin) / kRoughSpan;
            out.rough_raw[gi] += ga.rough_act * kRoughSpan * sig * (1.0 - sig);
        }
        for (int c = 0; c < kShAuxFloats; ++c) out.sh_aux[gi][c] += ga.aux[c];

        Vec3 d_mu = Vec3::Zero();

        // Radiance: max(0, sh + 0.5) with per-gaussian view direction.
        {
            Vec3 d_raw = Vec3::Zero();
            for (int c = 0; c < 3; ++c) d_raw[c] = a.radiance_raw[c] > 0.0 ? ga.radiance[c] : 0.0;
            if (d_raw != Vec3::Zero()) {
                sh_basis(3, a.view_dir, basis);
                sh_basis_grad(3, a.view_dir, basis_grad);
                Vec3 d_dir = Vec3::Zero();
                for (int j = 0; j < kShRgbCoeffs; ++j) {
                    for (int c = 0; c < 3; ++c) {
                        const size_t idx = static_cast<size_t>(j) * 3 + c;
                        out.sh_rgb[gi][idx] += d_raw[c] * basis[j];
                        d_dir += d_raw[c] * g.sh_rgb[idx] * basis_grad[j];
                    }
                }
                d_mu += (d_dir - a.view_dir * a.view_dir.dot(d_dir)) / a.view_dist;
            }
        }

        // Normal chain: world normal = rotate(q_normal, base_normal).
        if (ga.normal != Vec3::Zero()) {
            Vec3 d_base = Vec3::Zero();
            quat_rotate_backward(g.q_normal, a.base_normal, ga.normal, out.q_normal[gi], d_base);
            if (g.tri_id >= 0 && d_base != Vec3::Zero()) {
                const auto& tri = scene.mesh.faces[g.tri_id];
                const Vec3 e1 = scene.mesh.vertices[tri[1]] - scene.mesh.vertices[tri[0]];
                const Vec3 e2 = scene.mesh.vertices[tri[2]] - scene.mesh.vertices[tri[0]];
                const Vec3 cr = e1.cross(e2);
                const double len = cr.norm();
                if (len > 1e-18) {
                    const Vec3 nb = cr / len;
                    const Vec3 d_cross = (d_base - nb * nb.dot(d_base)) / len;
                    const Vec3 d_e1 = e2.cross(d_cross);
                    const Vec3 d_e2 = d_cross.cross(e1);
                    out.vertices[tri[1]] += d_e1;
                    out.vertices[tri[2]] += d_e2;
                    out.vertices[tri[0]] -= d_e1 + d_e2;
                }
            }
        }

        // Projection chain.
        const bool has_proj = ga.center != Vec2::Zero() || ga.conic != Mat2::Zero() ||
                              ga.depth != 0.0;
        if (has_proj) {
            const Splat2D* splat =
                splat_of_gauss[gi] >= 0 ? &cache.splats[splat_of_gauss[gi]] : nullptr;
            if (splat) {
                const Mat2 d_cov2d = -splat->conic * ga.conic * splat->conic;
                const Mat3 cov_world = g.covariance();
                const Mat3 cov_cam = cam.rot * cov_world * cam.rot.transpose();
                const Vec3 t = splat->t_cam;
                const double tz = t.z();
                Eigen::Matrix<double, 2, 3> j;
                j << cam.fx / tz, 0.0, -cam.fx * t.x() / (tz * tz), 0.0, cam.fy / tz,
                    -cam.fy * t.y() / (tz * tz);

                const Mat3 d_cov_cam = j.transpose() * d_cov2d * j;
                const Eigen::Matrix<double, 2, 3> d_j =
                    (d_cov2d + d_cov2d.transpose()) * j * cov_cam;
                const Mat3 d_cov_world = cam.rot.transpose() * d_cov_cam * cam.rot;

                // Sigma = R diag(s^2) R^T with R frozen (shape orientation is
                // not a learnable group); raw scales get the exp chain.
                const Mat3 rot_shape = g.shape_rot();
                const Vec3 s_act = g.scale();
                const Mat3 rtd = rot_shape.transpose() * d_cov_world * rot_shape;
                for (int k = 0; k < 3; ++k)
                    out.s_raw[gi][k] += 2.0 * s_act[k] * s_act[k] * rtd(k, k);

                Vec3 d_t = Vec3::Zero();
                // Projection of the center.
                d_t.x() += ga.center.x() * cam.fx / tz;
                d_t.y() += ga.center.y() * cam.fy / tz;
                d_t.z() += -ga.center.x() * cam.fx * t.x() / (tz * tz) -
                           ga.center.y() * cam.fy * t.y() / (tz * tz);
                // J entries.
                d_t.x() += d_j(0, 2) * (-cam.fx / (tz * tz));
                d_t.y() += d_j(1, 2) * (-cam.fy / (tz * tz));
                d_t.z() += d_j(0, 0) * (-cam.fx / (tz * tz)) +
                           d_j(0, 2) * (2.0 * cam.fx * t.x() / (tz * tz * tz)) +
                           d_j(1, 1) * (-cam.fy / (tz * tz)) +
                           d_j(1, 2) * (2.0 * cam.fy * t.y() / (tz * tz * tz));
                // Blended depth attribute.
                d_t.z() += ga.depth;

                d_mu += cam.rot.transpose() * d_t;
            }
        }

        if (g.tri_id >= 0 && d_mu != Vec3::Zero()) {
            const auto& tri = scene.mesh.faces[g.tri_id];
            for (int k = 0; k < 3; ++k) out.vertices[tri[k]] += d_mu / 3.0;
        }
    }
}

} // namespace dpgs
