// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/losses.hpp"

#include "dpgs/errors.hpp"
#include "dpgs/parallel.hpp"
#include "dpgs/postproc.hpp"
#include "dpgs/rng.hpp"

#include <algorithm>
#include <cmath>

namespace dpgs {

double loss_masked_opacity(const std::vector<double>& o_map, const std::vector<uint8_t>& mask,
                           std::vector<double>* grad_o) {
    const size_t n = o_map.size();
    if (mask.size() != n) throw Error("losses", "opacity loss: mask size mismatch");
    if (grad_o) grad_o->assign(n, 0.0);
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (mask[i]) continue;
        const double o = std::min(o_map[i], 1.0 - 1e-6);
        sum += -std::log(1.0 - o);
        if (grad_o && o_map[i] < 1.0 - 1e-6) (*grad_o)[i] = 1.0 / (1.0 - o) / n;
    }
    return sum / n;
}

std::vector<double> face_circumradii(const TriangleMesh& mesh) {
    std::vector<double> out(mesh.face_count());
    for (size_t f = 0; f < mesh.face_count(); ++f) {
        const auto& t = mesh.faces[f];
        const Vec3 a = mesh.vertices[t[1]] - mesh.vertices[t[0]];
        const Vec3 b = mesh.vertices[t[2]] - mesh.vertices[t[0]];
        const double cross = a.cross(b).norm();
        out[f] = cross < 1e-12 ? 0.0 : a.norm() * b.norm() * (a - b).norm() / (2.0 * cross);
    }
    return out;
}

double loss_scale(const HybridScene& scene, double kappa_rc,
                  const std::vector<double>& circumradii, std::vector<Vec3>* grad_s_raw) {
    if (grad_s_raw) grad_s_raw->assign(scene.gaussians.size(), Vec3::Zero());
    double sum = 0.0;
    for (size_t i = 0; i < scene.gaussians.size(); ++i) {
        const Gaussian3D& g = scene.gaussians[i];
        if (g.tri_id < 0) continue;
        const Vec3 s = g.scale();
        int arg = 0;
        for (int k = 1; k < 3; ++k)
            if (s[k] > s[arg]) arg = k;
        const double excess = s[arg] - kappa_rc * circumradii[g.tri_id];
        if (excess > 0.0) {
            sum += excess;
            if (grad_s_raw) (*grad_s_raw)[i][arg] = s[arg]; // d exp(raw)/d raw
        }
    }
    return sum;
}

double loss_surface(const HybridScene& scene, std::vector<Vec3>* grad_vertices) {
    if (grad_vertices) grad_vertices->assign(scene.mesh.vertices.size(), Vec3::Zero());
    double sum = 0.0;
    for (const auto& g : scene.gaussians) {
        if (g.tri_id < 0) continue;
        const Vec3 mu = scene.mesh.face_centroid(g.tri_id);
        const Vec3 diff = mu - g.mu_init;
        sum += diff.squaredNorm();
        if (grad_vertices) {
            const auto& tri = scene.mesh.faces[g.tri_id];
            for (int k = 0; k < 3; ++k) (*grad_vertices)[tri[k]] += 2.0 * diff / 3.0;
        }
    }
    return sum;
}

ImageF pseudo_normal_from_depth(const std::vector<double>& depth, const Camera& cam) {
    const int h = cam.height, w = cam.width;
    ImageF out(h, w, 3);
    auto point = [&](int y, int x) {
        const double d = depth[static_cast<size_t>(y) * w + x];
        return Vec3((x + 0.5 - cam.cx) / cam.fx * d, (y + 0.5 - cam.cy) / cam.fy * d, d);
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int x0 = x > 0 ? x - 1 : x, x1 = x < w - 1 ? x + 1 : x;
            const int y0 = y > 0 ? y - 1 : y, y1 = y < h - 1 ? y + 1 : y;
            const Vec3 tx = point(y, x1) - point(y, x0);
            const Vec3 ty = point(y1, x) - point(y0, x);
            Vec3 n = tx.cross(ty);
            if (n.norm() < 1e-12) {
                n = -Vec3((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
            } else if (n.z() > 0.0) {
                n = -n;
            }
            n.normalize();
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = n[c];
        }
    }
    return out;
}

double loss_normal(const std::vector<double>& n_map, const ImageF& n_pseudo,
                   const std::vector<uint8_t>& mask, int height, int width,
                   std::vector<double>* grad_n_map) {
    if (grad_n_map) grad_n_map->assign(n_map.size(), 0.0);
    double sum = 0.0;
    int64_t count = 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const size_t pix = static_cast<size_t>(y) * width + x;
            if (!mask[pix]) continue;
            const Vec3 n(n_map[pix * 3], n_map[pix * 3 + 1], n_map[pix * 3 + 2]);
            const double len = n.norm();
            if (len < 1e-8) continue;
            ++count;
            const Vec3 np(n_pseudo.at(y, x, 0), n_pseudo.at(y, x, 1), n_pseudo.at(y, x, 2));
            const Vec3 nh = n / len;
            sum += -nh.dot(np);
            if (grad_n_map) {
                const Vec3 g = -(np - nh * nh.dot(np)) / len;
                for (int c = 0; c < 3; ++c) (*grad_n_map)[pix * 3 + c] = g[c];
            }
        }
    if (count == 0) return 0.0;
    if (grad_n_map)
        for (double& v : *grad_n_map) v /= static_cast<double>(count);
    return sum / static_cast<double>(count);
}

double loss_smooth(const std::vector<double>& param_map, int channels, const ImageF& gt_display,
                   const std::vector<uint8_t>& mask, int height, int width,
                   std::vector<double>* grad_param) {
    if (grad_param) grad_param->assign(param_map.size(), 0.0);
    double sum = 0.0;
    int64_t count = 0;
    auto p_at = [&](int y, int x, int c) {
        return param_map[(static_cast<size_t>(y) * width + x) * channels + c];
    };
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const size_t pix = static_cast<size_t>(y) * width + x;
            if (!mask[pix]) continue;
            ++count;
            for (int axis = 0; axis < 2; ++axis) {
                const int dx = axis == 0 ? 1 : 0;
                const int dy = axis == 0 ? 0 : 1;
                if (x - dx < 0 || x + dx >= width || y - dy < 0 || y + dy >= height) continue;
                // Edge stop: weight shrinks where the reference image varies.
                double gsq = 0.0;
                for (int c = 0; c < 3; ++c)
                    gsq += sqr(0.5 * (gt_display.at(y + dy, x + dx, c) -
                                      gt_display.at(y - dy, x - dx, c)));
                const double wgt = std::exp(-std::sqrt(gsq));
                for (int c = 0; c < channels; ++c) {
                    const double lap =
                        p_at(y - dy, x - dx, c) - 2.0 * p_at(y, x, c) + p_at(y + dy, x + dx, c);
                    sum += std::abs(lap) * wgt;
                    if (grad_param && lap != 0.0) {
                        const double s = (lap > 0.0 ? 1.0 : -1.0) * wgt;
                        (*grad_param)[(static_cast<size_t>(y - dy) * width + (x - dx)) * channels + c] += s;
                        (*grad_param)[pix * channels + c] += -2.0 * s;
                        (*grad_param)[(static_cast<size_t>(y + dy) * width + (x + dx)) * channels + c] += s;
                    }
                }
            }
        }
    if (count == 0) return 0.0;
    if (grad_param)
        for (double& v : *grad_param) v /= static_cast<double>(count);
    return sum / static_cast<double>(count);
}

double loss_photometric(const ImageF& pred_display, const ImageF& gt_display,
                        const std::vector<uint8_t>& mask, ImageF* grad_pred) {
    if (pred_display.height != gt_display.height || pred_display.width != gt_display.width ||
        pred_display.channels != gt_display.channels)
        throw Error("losses", "photometric loss: shape mismatch");
    if (grad_pred) *grad_pred = ImageF(pred_display.height, pred_display.width, 3);
    double sum = 0.0;
    int64_t count = 0;
    for (int y = 0; y < pred_display.height; ++y)
        for (int x = 0; x < pred_display.width; ++x) {
            if (!mask[static_cast<size_t>(y) * pred_display.width + x]) continue;
            ++count;
            for (int c = 0; c < 3; ++c) {
                const double e = pred_display.at(y, x, c) - gt_display.at(y, x, c);
                sum += std::abs(e);
                if (grad_pred) grad_pred->at(y, x, c) = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
            }
        }
    if (count == 0) return 0.0;
    const double denom = static_cast<double>(count) * 3.0;
    if (grad_pred)
        for (double& v : grad_pred->data) v /= denom;
    return sum / denom;
}

namespace {

struct DeferredPixel {
    bool shaded = false;
    ShadingPoint sp;
    double wo_len = 1.0;
    Vec3 dirvec_world = Vec3::Zero(); // d x / d depth
};

DeferredPixel surface_from_gbuffer(const GBuffer& gb, const Camera& cam, int x, int y) {
    DeferredPixel out;
    const size_t pix = gb.pix(y, x);
    if (gb.opacity[pix] <= kForegroundTau) return out;
    const Vec3 n_blend(gb.normal[pix * 3], gb.normal[pix * 3 + 1], gb.normal[pix * 3 + 2]);
    const double n_len = n_blend.norm();
    if (n_len < 1e-8) return out;
    const double px = x + 0.5, py = y + 0.5;
    const Vec3 dirvec((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
    out.dirvec_world = cam.rot.transpose() * dirvec;
    out.sp.n = n_blend / n_len;
    out.sp.x = cam.rot.transpose() * (dirvec * gb.depth[pix] - cam.trans);
    const Vec3 cam_pos = cam.position();
    const Vec3 wo_raw = cam_pos - out.sp.x;
    out.wo_len = wo_raw.norm();
    if (out.wo_len < 1e-12) return out;
    out.sp.wo = wo_raw / out.wo_len;
    if (out.sp.n.dot(out.sp.wo) <= 0.0) return out;
    out.sp.brdf.albedo = Vec3(clamp01(gb.albedo[pix * 3]), clamp01(gb.albedo[pix * 3 + 1]),
                              clamp01(gb.albedo[pix * 3 + 2]));
    out.sp.brdf.rough = std::clamp(gb.rough[pix], kRoughMin, 1.0);
    out.sp.brdf.metal = clamp01(gb.metal[pix]);
    for (int c = 0; c < kShAuxFloats; ++c) out.sp.aux[c] = gb.aux[pix * kShAuxFloats + c];
    out.shaded = true;
    return out;
}

void check_finite(double v, const char* term) {
    if (!std::isfinite(v)) throw Error("losses", std::string("non-finite loss term: ") + term);
}

} // namespace

LossReport total_loss(const HybridScene& scene, const TrainView& view, const Bvh* bvh,
                      const LossOptions& opts) {
    const Camera& cam = view.camera;
    const int h = cam.height, w = cam.width;
    const size_t npix = static_cast<size_t>(h) * w;

    LossReport report;
    report.grads.resize(scene);

    RasterCache cache;
    const GBuffer gb = rasterize_gbuffer(scene, cam, RasterOptions{}, &cache);

    GBufferGrads up;
    up.resize(h, w);

    const ImageF gt_display = tonemap_srgb(view.image);

    // L1 branch on the radiance blend.
    {
        ImageF pred(h, w, 3);
        for (size_t p = 0; p < npix; ++p)
            for (int c = 0; c < 3; ++c)
                pred.data[p * 3 + c] = srgb_encode(gb.radiance[p * 3 + c]);
        ImageF d_pred;
        report.l1 = loss_photometric(pred, gt_display, view.mask, &d_pred);
        check_finite(report.l1, "l1");
        for (size_t p = 0; p < npix; ++p)
            for (int c = 0; c < 3; ++c)
                up.radiance[p * 3 + c] =
                    d_pred.data[p * 3 + c] * srgb_encode_grad(gb.radiance[p * 3 + c]);
    }

    // Masked opacity.
    {
        std::vector<double> d_o;
        report.o = loss_masked_opacity(gb.opacity, view.mask, &d_o);
        check_finite(report.o, "o");
        for (size_t p = 0; p < npix; ++p) up.opacity[p] += opts.weights.lambda_o * d_o[p];
    }

    // Scale hinge (circumradii detached).
    std::vector<double> circumradii;
    {
        const std::vector<double>* rc = opts.circumradii_frozen;
        if (!rc) {
            circumradii = face_circumradii(scene.mesh);
            rc = &circumradii;
        }
        if (opts.circumradii_out) *opts.circumradii_out = *rc;
        std::vector<Vec3> d_s;
        report.sc = loss_scale(scene, opts.weights.kappa_rc, *rc, &d_s);
        check_finite(report.sc, "sc");
        for (size_t i = 0; i < d_s.size(); ++i)
            report.grads.s_raw[i] += opts.weights.lambda_sc * d_s[i];
    }

    // Surface anchoring.
    {
        std::vector<Vec3> d_v;
        report.sr = loss_surface(scene, &d_v);
        check_finite(report.sr, "sr");
        for (size_t i = 0; i < d_v.size(); ++i)
            report.grads.vertices[i] += opts.weights.lambda_sr * d_v[i];
    }

    if (opts.stage == TrainStage::Pbr) {
        // Deferred PBR branch: trace (or reuse) per-sample visibility, shade,
        // then push the photometric gradient back through the shader.
        const int spp = opts.spp;
        std::vector<uint8_t> vis_table;
        const std::vector<uint8_t>* vis = opts.vis_frozen;
        std::vector<DeferredPixel> surf(npix);

        VisibilitySource trace_src;
        trace_src.bvh = bvh;
        trace_src.t_max = scene.bounding_diameter() * 4.0 + 10.0;

        if (!vis) {
            vis_table.assign(npix * spp, 1);
            parallel_for(0, h, [&](int64_t yi) {
                const int y = static_cast<int>(yi);
                for (int x = 0; x < w; ++x) {
                    const size_t pix = static_cast<size_t>(y) * w + x;
                    surf[pix] = surface_from_gbuffer(gb, cam, x, y);
                    if (!surf[pix].shaded || !bvh || bvh->empty()) continue;
                    const Mat3 frame = rotation_from_z(surf[pix].sp.n);
                    const Vec3 origin = surf[pix].sp.x + kOcclusionEps * surf[pix].sp.n;
                    for (int k = 0; k < spp; ++k) {
                        const Vec3 wi = frame * fibonacci_hemisphere_canonical(spp, k);
                        vis_table[pix * spp + k] =
                            trace_occlusion(*bvh, origin, wi, trace_src.t_max) ? 0 : 1;
                    }
                }
            });
            vis = &vis_table;
        } else {
            parallel_for(0, h, [&](int64_t yi) {
                const int y = static_cast<int>(yi);
                for (int x = 0; x < w; ++x) {
                    const size_t pix = static_cast<size_t>(y) * w + x;
                    surf[pix] = surface_from_gbuffer(gb, cam, x, y);
                }
            });
        }
        if (opts.vis_out) *opts.vis_out = *vis;

        // Forward shade.
        ImageF pbr_linear(h, w, 3);
        std::vector<double> vis_buf(npix * spp);
        for (size_t i = 0; i < npix * static_cast<size_t>(spp); ++i)
            vis_buf[i] = (*vis)[i];
        std::vector<int> nan_rows(h, 0);
        parallel_for(0, h, [&](int64_t yi) {
            const int y = static_cast<int>(yi);
            Pcg32 rng; // Fibonacci path draws nothing
            for (int x = 0; x < w; ++x) {
                const size_t pix = static_cast<size_t>(y) * w + x;
                if (!surf[pix].shaded) continue;
                ShadeOptions sopts;
                sopts.mode = LightMode::Train;
                sopts.vis_override = vis_buf.data() + pix * spp;
                sopts.nan_count = &nan_rows[y];
                const Vec3 out = shade(surf[pix].sp, scene.light, trace_src, spp,
                                       ShadeStrategy::Fibonacci, rng, sopts);
                for (int c = 0; c < 3; ++c) pbr_linear.at(y, x, c) = out[c];
            }
        });

        ImageF pred(h, w, 3);
        for (size_t p = 0; p < npix; ++p)
            for (int c = 0; c < 3; ++c) pred.data[p * 3 + c] = srgb_encode(pbr_linear.data[p * 3 + c]);
        ImageF d_pred;
        report.pbr = loss_photometric(pred, gt_display, view.mask, &d_pred);
        check_finite(report.pbr, "pbr");

        // Smoothness on the blended BRDF maps.
        {
            std::vector<double> d_map;
            const double la = loss_smooth(gb.albedo, 3, gt_display, view.mask, h, w, &d_map);
            for (size_t i = 0; i < d_map.size(); ++i)
                up.albedo[i] += opts.weights.lambda_smooth_albedo * d_map[i];
            std::vector<double> metal_map(gb.metal), rough_map(gb.rough);
            const double lm = loss_smooth(metal_map, 1, gt_display, view.mask, h, w, &d_map);
            for (size_t i = 0; i < d_map.size(); ++i)
                up.metal[i] += opts.weights.lambda_smooth_metal * d_map[i];
            const double lr = loss_smooth(rough_map, 1, gt_display, view.mask, h, w, &d_map);
            for (size_t i = 0; i < d_map.size(); ++i)
                up.rough[i] += opts.weights.lambda_smooth_rough * d_map[i];
            report.smooth = opts.weights.lambda_smooth_albedo * la +
                            opts.weights.lambda_smooth_metal * lm +
                            opts.weights.lambda_smooth_rough * lr;
            check_finite(report.smooth, "smooth");
        }

        // Normal consistency against the detached pseudo-normal, in camera
        // space.
        {
            ImageF pseudo;
            const ImageF* np = opts.pseudo_normal_frozen;
            if (!np) {
                pseudo = pseudo_normal_from_depth(gb.depth, cam);
                np = &pseudo;
            }
            if (opts.pseudo_normal_out) *opts.pseudo_normal_out = *np;
            std::vector<double> n_cam(npix * 3);
            for (size_t p = 0; p < npix; ++p) {
                const Vec3 nw(gb.normal[p * 3], gb.normal[p * 3 + 1], gb.normal[p * 3 + 2]);
                const Vec3 nc = cam.rot * nw;
                for (int c = 0; c < 3; ++c) n_cam[p * 3 + c] = nc[c];
            }
            std::vector<double> d_ncam;
            report.normal = loss_normal(n_cam, *np, view.mask, h, w, &d_ncam);
            check_finite(report.normal, "normal");
            for (size_t p = 0; p < npix; ++p) {
                const Vec3 dc(d_ncam[p * 3], d_ncam[p * 3 + 1], d_ncam[p * 3 + 2]);
                const Vec3 dw = cam.rot.transpose() * (opts.weights.lambda_normal * dc);
                for (int c = 0; c < 3; ++c) up.normal[p * 3 + c] += dw[c];
            }
        }

        // Shade backward: per-pixel G-buffer gradients plus the global light.
        std::vector<std::array<double, kShAuxFloats>> row_sh_global(h);
        for (auto& r : row_sh_global) r.fill(0.0);
        parallel_for(0, h, [&](int64_t yi) {
            const int y = static_cast<int>(yi);
            for (int x = 0; x < w; ++x) {
                const size_t pix = static_cast<size_t>(y) * w + x;
                const DeferredPixel& s = surf[pix];
                if (!s.shaded) continue;
                Vec3 d_out = Vec3::Zero();
                for (int c = 0; c < 3; ++c)
                    d_out[c] = d_pred.at(y, x, c) * srgb_encode_grad(pbr_linear.at(y, x, c));
                if (d_out == Vec3::Zero()) continue;
                ShadeOptions sopts;
                sopts.mode = LightMode::Train;
                sopts.vis_override = vis_buf.data() + pix * spp;
                ShadeBackward sb;
                shade_backward(s.sp, scene.light, trace_src, spp, d_out, sb, sopts);

                // brdf clamps gate the gradient at the range edges.
                for (int c = 0; c < 3; ++c) {
                    const double a = gb.albedo[pix * 3 + c];
                    if (a > 0.0 && a < 1.0) up.albedo[pix * 3 + c] += sb.d_albedo[c];
                }
                if (gb.rough[pix] > kRoughMin && gb.rough[pix] < 1.0)
                    up.rough[pix] += sb.d_rough;
                if (gb.metal[pix] > 0.0 && gb.metal[pix] < 1.0) up.metal[pix] += sb.d_metal;
                for (int c = 0; c < kShAuxFloats; ++c)
                    up.aux[pix * kShAuxFloats + c] += sb.d_aux[c];
                for (int c = 0; c < kShAuxFloats; ++c)
                    row_sh_global[y][c] += sb.d_sh_global[c];

                // Normal: through the blend normalization.
                const Vec3 n_blend(gb.normal[pix * 3], gb.normal[pix * 3 + 1],
                                   gb.normal[pix * 3 + 2]);
                const double n_len = n_blend.norm();
                const Vec3 nh = n_blend / n_len;
                const Vec3 d_nb = (sb.d_n - nh * nh.dot(sb.d_n)) / n_len;
                for (int c = 0; c < 3; ++c) up.normal[pix * 3 + c] += d_nb[c];

                // Position: wo normalization then x(depth).
                const Vec3 d_x = -(sb.d_wo - s.sp.wo * s.sp.wo.dot(sb.d_wo)) / s.wo_len;
                up.depth[pix] += s.dirvec_world.dot(d_x);
            }
        });
        for (int y = 0; y < h; ++y)
            for (int c = 0; c < kShAuxFloats; ++c)
                report.grads.sh_global[c] += row_sh_global[y][c];
    }

    raster_backward(scene, cam, cache, up, report.grads);

    report.total = report.l1 + report.pbr + report.smooth + opts.weights.lambda_o * report.o +
                   opts.weights.lambda_sc * report.sc + opts.weights.lambda_sr * report.sr +
                   opts.weights.lambda_normal * report.normal;
    check_finite(report.total, "total");
    if (!report.grads.all_finite()) throw Error("losses", "non-finite gradient");
    return report;
}

const char* param_group_name(ParamGroup g) {
    switch (g) {
    case ParamGroup::Vertices: return "vertices";
    case ParamGroup::Opacity: return "opacity";
    case ParamGroup::Scales: return "scales";
    case ParamGroup::Brdf: return "brdf";
    case ParamGroup::QNormal: return "q_normal";
    case ParamGroup::ShRgb: return "sh_rgb";
    case ParamGroup::ShAux: return "sh_aux";
    case ParamGroup::ShGlobal: return "sh_global";
    }
    return "?";
}

std::vector<ParamGroup> all_param_groups() {
    return {ParamGroup::Vertices, ParamGroup::Opacity, ParamGroup::Scales, ParamGroup::Brdf,
            ParamGroup::QNormal,  ParamGroup::ShRgb,   ParamGroup::ShAux,  ParamGroup::ShGlobal};
}

int param_group_size(const HybridScene& scene, ParamGroup g) {
    const int n = static_cast<int>(scene.gaussians.size());
    switch (g) {
    case ParamGroup::Vertices: return static_cast<int>(scene.mesh.vertices.size()) * 3;
    case ParamGroup::Opacity: return n;
    case ParamGroup::Scales: return n * 3;
    case ParamGroup::Brdf: return n * 5;
    case ParamGroup::QNormal: return n * 4;
    case ParamGroup::ShRgb: return n * kShRgbFloats;
    case ParamGroup::ShAux: return n * kShAuxFloats;
    case ParamGroup::ShGlobal: return kShAuxFloats;
    }
    return 0;
}

namespace {
// Brdf group layout per gaussian: albedo_raw xyz, rough_raw, metal_raw.
double* brdf_slot(Gaussian3D& g, int k) {
    switch (k) {
    case 0: return &g.albedo_raw[0];
    case 1: return &g.albedo_raw[1];
    case 2: return &g.albedo_raw[2];
    case 3: return &g.rough_raw;
    default: return &g.metal_raw;
    }
}
} // namespace

double param_get(const HybridScene& scene, ParamGroup g, int index) {
    auto& self = const_cast<HybridScene&>(scene);
    switch (g) {
    case ParamGroup::Vertices: return self.mesh.vertices[index / 3][index % 3];
    case ParamGroup::Opacity: return self.gaussians[index].alpha_raw;
    case ParamGroup::Scales: return self.gaussians[index / 3].s_raw[index % 3];
    case ParamGroup::Brdf: return *brdf_slot(self.gaussians[index / 5], index % 5);
    case ParamGroup::QNormal: return self.gaussians[index / 4].q_normal[index % 4];
    case ParamGroup::ShRgb: return self.gaussians[index / kShRgbFloats].sh_rgb[index % kShRgbFloats];
    case ParamGroup::ShAux: return self.gaussians[index / kShAuxFloats].sh_aux[index % kShAuxFloats];
    case ParamGroup::ShGlobal: return self.light.sh_global[index];
    }
    return 0.0;
}

void param_set(HybridScene& scene, ParamGroup g, int index, double value) {
    switch (g) {
    case ParamGroup::Vertices:
        scene.mesh.vertices[index / 3][index % 3] = value;
        scene.sync_bound_positions();
        return;
    case ParamGroup::Opacity: scene.gaussians[index].alpha_raw = value; return;
    case ParamGroup::Scales: scene.gaussians[index / 3].s_raw[index % 3] = value; return;
    case ParamGroup::Brdf: *brdf_slot(scene.gaussians[index / 5], index % 5) = value; return;
    case ParamGroup::QNormal: scene.gaussians[index / 4].q_normal[index % 4] = value; return;
    case ParamGroup::ShRgb:
        scene.gaussians[index / kShRgbFloats].sh_rgb[index % kShRgbFloats] = value;
        return;
    case ParamGroup::ShAux:
        scene.gaussians[index / kShAuxFloats].sh_aux[index % kShAuxFloats] = value;
        return;
    case ParamGroup::ShGlobal: scene.light.sh_global[index] = value; return;
    }
}

double grad_get(const SceneGrads& grads, ParamGroup g, int index) {
    switch (g) {
    case ParamGroup::Vertices: return grads.vertices[index / 3][index % 3];
    case ParamGroup::Opacity: return grads.alpha_raw[index];
    case ParamGroup::Scales: return grads.s_raw[index / 3][index % 3];
    case ParamGroup::Brdf: {
        const int gi = index / 5, k = index % 5;
        if (k < 3) return grads.albedo_raw[gi][k];
        return k == 3 ? grads.rough_raw[gi] : grads.metal_raw[gi];
    }
    case ParamGroup::QNormal: return grads.q_normal[index / 4][index % 4];
    case ParamGroup::ShRgb: return grads.sh_rgb[index / kShRgbFloats][index % kShRgbFloats];
    case ParamGroup::ShAux: return grads.sh_aux[index / kShAuxFloats][index % kShAuxFloats];
    case ParamGroup::ShGlobal: return grads.sh_global[index];
    }
    return 0.0;
}

std::vector<GradCheckRow> check_gradients(const HybridScene& scene, const TrainView& view,
                                          const Bvh* bvh, const std::vector<ParamGroup>& groups,
                                          double h, LossOptions opts) {
    // Base pass captures the detached inputs so every finite-difference
    // evaluation sees the exact same visibility, pseudo-normal and radii.
    std::vector<uint8_t> vis;
    ImageF pseudo;
    std::vector<double> radii;
    opts.vis_out = &vis;
    opts.pseudo_normal_out = &pseudo;
    opts.circumradii_out = &radii;
    HybridScene base = scene;
    base.sync_bound_positions();
    const LossReport base_report = total_loss(base, view, bvh, opts);
    opts.vis_out = nullptr;
    opts.pseudo_normal_out = nullptr;
    opts.circumradii_out = nullptr;
    if (opts.stage == TrainStage::Pbr) opts.vis_frozen = &vis;
    opts.pseudo_normal_frozen = &pseudo;
    opts.circumradii_frozen = &radii;

    std::vector<GradCheckRow> rows;
    for (ParamGroup group : groups) {
        GradCheckRow row;
        row.group = group;
        const int n = param_group_size(base, group);
        for (int i = 0; i < n; ++i) {
            HybridScene probe = base;
            const double v0 = param_get(probe, group, i);
            param_set(probe, group, i, v0 + h);
            const double lp = total_loss(probe, view, nullptr, opts).total;
            param_set(probe, group, i, v0 - h);
            const double lm = total_loss(probe, view, nullptr, opts).total;
            const double fd = (lp - lm) / (2.0 * h);
            const double analytic = grad_get(base_report.grads, group, i);
            const double rel =
                std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-8});
            if (rel > row.max_rel_err) {
                row.max_rel_err = rel;
                row.worst_index = i;
                row.analytic = analytic;
                row.fd = fd;
            }
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace dpgs
