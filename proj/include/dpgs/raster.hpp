// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/bvh.hpp"
#include "dpgs/camera.hpp"
#include "dpgs/scene.hpp"
#include "dpgs/shading.hpp"

#include <optional>
#include <vector>

namespace dpgs {

struct Splat2D {
    Vec2 center = Vec2::Zero(); // pixels
    Mat2 cov2d = Mat2::Identity();
    Mat2 conic = Mat2::Identity(); // cov2d^-1
    double depth = 0.0;            // camera-space z of mu
    double radius = 0.0;           // 3 sigma screen bound
    Vec3 t_cam = Vec3::Zero();     // camera-space mu
    int gauss = -1;
};

inline constexpr double kCovRegularization = 0.3; // px^2, added to the diagonal
inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kAlphaMin = 1.0 / 255.0;
inline constexpr double kTransmittanceMin = 1e-4;
inline constexpr double kForegroundTau = 0.5;

std::optional<Splat2D> project_gaussian(const Gaussian3D& g, const Camera& cam);

struct GBuffer {
    int height = 0, width = 0;
    std::vector<double> depth;    // H*W
    std::vector<double> normal;   // H*W*3
    std::vector<double> albedo;   // H*W*3
    std::vector<double> metal;    // H*W
    std::vector<double> rough;    // H*W
    std::vector<double> opacity;  // H*W
    std::vector<double> aux;      // H*W*kShAuxFloats
    std::vector<double> radiance; // H*W*3

    void resize(int h, int w);
    size_t pix(int y, int x) const { return static_cast<size_t>(y) * width + x; }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

// Activated per-splat attributes cached for one render pass.
struct GaussAttr {
    double alpha = 0.0;
    Vec3 albedo = Vec3::Zero();
    double rough = 0.0, metal = 0.0;
    Vec3 base_normal = Vec3::UnitZ(); // pre-rotation
    Vec3 normal = Vec3::UnitZ();      // world, after q_normal
    Vec3 view_dir = Vec3::UnitZ();    // camera center -> mu
    double view_dist = 1.0;
    Vec3 radiance_raw = Vec3::Zero(); // sh_eval + 0.5, before the zero clamp
    Vec3 radiance = Vec3::Zero();
};

struct Fragment {
    int splat = -1;       // index into RasterCache::splats
    double falloff = 0.0; // exp(-0.5 d^T conic d)
    double alpha = 0.0;   // effective, after clamp
};

struct RasterCache {
    std::vector<Splat2D> splats;
    std::vector<GaussAttr> attrs;     // per gaussian
    std::vector<Fragment> fragments;  // blended fragments, per pixel, front-to-back
    std::vector<int> frag_offset;     // H*W+1 prefix offsets
};

struct RasterOptions {
    bool normalized = false; // divide blends by accumulated opacity
};

// Alpha-blended depth/normal/BRDF/opacity/aux/radiance maps. `cache`, when
// given, retains everything the reverse pass needs.
GBuffer rasterize_gbuffer(const HybridScene& scene, const Camera& cam,
                          const RasterOptions& opts = {}, RasterCache* cache = nullptr);

struct RenderOptions {
    int spp = 64;
    ShadeStrategy strategy = ShadeStrategy::Fibonacci;
    LightMode mode = LightMode::Train;
    bool light_from_envmap = false;
    bool traced_visibility = true; // false: baked SH aux (deferred only)
    bool normalized_gbuffer = false;
    bool denoise = false;
    uint64_t seed = 0;
    uint64_t frame = 0;
};

// Per-pixel deferred shading of the G-buffer surface estimate. Background
// (opacity <= tau) shows the envmap, or black without one.
ImageF render_deferred(const HybridScene& scene, const Camera& cam, const Bvh* bvh,
                       const RenderOptions& opts, GBuffer* gbuffer_out = nullptr);

// Per-splat shading baseline: every fragment is shaded at its own ray point
// with its own normal/BRDF, then alpha-blended. Residual transmittance shows
// the environment.
ImageF render_forward(const HybridScene& scene, const Camera& cam, const Bvh* bvh,
                      const RenderOptions& opts);

// Gradient accumulators for every learnable group.
struct SceneGrads {
    std::vector<Vec3> vertices;
    std::vector<double> alpha_raw;
    std::vector<Vec3> s_raw;
    std::vector<Vec3> albedo_raw;
    std::vector<double> rough_raw;
    std::vector<double> metal_raw;
    std::vector<Vec4> q_normal;
    std::vector<std::array<double, kShRgbFloats>> sh_rgb;
    std::vector<std::array<double, kShAuxFloats>> sh_aux;
    std::array<double, kShAuxFloats> sh_global{};

    void resize(const HybridScene& scene);
    void set_zero();
    bool all_finite() const;
};

// Upstream gradients flowing into the blended maps (same layout as GBuffer).
struct GBufferGrads {
    std::vector<double> depth, normal, albedo, metal, rough, opacity, aux, radiance;
    void resize(int h, int w);
};

// Reverse pass of rasterize_gbuffer for the unnormalized blend. Accumulates
// into `out` (which must be sized); deterministic regardless of thread count.
void raster_backward(const HybridScene& scene, const Camera& cam, const RasterCache& cache,
                     const GBufferGrads& grads, SceneGrads& out);

} // namespace dpgs
