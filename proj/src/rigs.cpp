// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/rigs.hpp"

#include "dpgs/errors.hpp"
#include "dpgs/mesh_ops.hpp"
#include "dpgs/raster.hpp"
#include "dpgs/rng.hpp"

#include <cmath>

namespace dpgs {

namespace {

Vec4 quat_from_rotation(const Mat3& rot) {
    const Quat q(rot);
    Vec4 out(q.w(), q.x(), q.y(), q.z());
    return out / out.norm();
}

} // namespace

HiddenRig make_hidden_rig(int image_size) {
    HiddenRig rig;

    TestMeshParams mp;
    mp.plate_half = 0.3;
    mp.occluder_z = 3.0;
    mp.occluder_center = Vec2(3.0, 0.0);
    mp.occluder_half = Vec2(0.8, 0.7);
    const TriangleMesh mesh = make_test_mesh("two_plates", mp);

    HybridScene scene = bind_gaussians(mesh);
    for (auto& g : scene.gaussians) {
        g.alpha_raw = logit(0.99);
        g.albedo_raw = Vec3::Constant(logit(rig.plate_albedo));
        g.rough_raw = 8.0; // rough ~= 1
        g.metal_raw = -12.0;
        // Wide flat coverage so the plate (faces 0 and 1) is near-opaque
        // everywhere; the occluder only matters as mesh geometry and keeps
        // its small bind-time splats out of frame.
        if (g.tri_id < 2) g.s_raw = Vec3(std::log(1.0), std::log(1.0), std::log(1e-4));
    }

    // Hidden splat beneath the plate, tilted toward the bright patch.
    Gaussian3D hidden;
    hidden.mu = Vec3(0.0, 0.0, -2.0);
    hidden.mu_init = hidden.mu;
    hidden.tri_id = -1;
    hidden.q_shape = quat_from_rotation(rotation_from_z(rig.bright_dir));
    hidden.s_raw = Vec3(std::log(0.8), std::log(0.8), std::log(1e-4));
    hidden.alpha_raw = logit(0.4);
    hidden.albedo_raw = Vec3::Constant(logit(rig.plate_albedo));
    hidden.rough_raw = 8.0;
    hidden.metal_raw = -12.0;
    scene.gaussians.push_back(hidden);

    // Environment: unit sky plus a very bright patch around bright_dir.
    Envmap env;
    env.width = 1024;
    env.height = 512;
    env.rgb.assign(static_cast<size_t>(env.width) * env.height * 3, 1.0f);
    const double cos_patch = std::cos(rig.patch_half_angle);
    for (int y = 0; y < env.height; ++y)
        for (int x = 0; x < env.width; ++x) {
            const Vec3 dir = env.dir_of_texel(y + 0.5, x + 0.5);
            if (dir.dot(rig.bright_dir) > cos_patch) {
                const size_t i = (static_cast<size_t>(y) * env.width + x) * 3;
                env.rgb[i] = env.rgb[i + 1] = env.rgb[i + 2] =
                    static_cast<float>(rig.patch_radiance);
            }
        }
    env.finalize();
    scene.light.envmap = std::move(env);
    scene.sync_bound_positions();
    rig.scene = std::move(scene);

    rig.camera =
        look_at_camera(Vec3(0, 0, 4), Vec3(0, 0, 0), Vec3(0, 1, 0), 13.0, image_size, image_size);
    return rig;
}

bool hidden_rig_surface_point(const HiddenRig& rig, int x, int y, Vec3& point) {
    const Camera& cam = rig.camera;
    const Vec3 origin = cam.position();
    const Vec3 dir = cam.pixel_ray_dir_world(x + 0.5, y + 0.5);
    if (std::abs(dir.z()) < 1e-9) return false;
    const double t = -origin.z() / dir.z();
    if (t <= 0.0) return false;
    point = origin + t * dir;
    return std::abs(point.x()) <= 0.3 && std::abs(point.y()) <= 0.3;
}

namespace {

// Independent microfacet evaluation for the reference integrator, written
// from the factor definitions in tangent form.
Vec3 reference_brdf(double albedo, double rough, double metal, const Vec3& n, const Vec3& wi,
                    const Vec3& wo) {
    const double ni = n.dot(wi), no = n.dot(wo);
    if (ni <= 0.0 || no <= 0.0) return Vec3::Zero();
    const Vec3 diffuse = Vec3::Constant((1.0 - metal) / kPi * albedo);
    const Vec3 h = (wi + wo).normalized();
    const double alpha = rough * rough;
    const double cos_h = n.dot(h);
    const double tan2 = (1.0 - cos_h * cos_h) / (cos_h * cos_h);
    const double d =
        alpha * alpha / (kPi * std::pow(cos_h, 4) * sqr(alpha * alpha + tan2));
    const double f0 = 0.04 * (1.0 - metal) + albedo * metal;
    const double f = f0 + (1.0 - f0) * std::pow(1.0 - h.dot(wo), 5.0);
    auto lam = [&](double c) {
        return 0.5 * (std::sqrt(1.0 + alpha * alpha * (1.0 / (c * c) - 1.0)) - 1.0);
    };
    const double g = 1.0 / (1.0 + lam(ni) + lam(no));
    return diffuse + Vec3::Constant(d * f * g / (4.0 * ni * no));
}

// Ray vs axis-aligned rectangle at height z (the rig's two quads).
bool hits_rect(const Vec3& o, const Vec3& d, double z, const Vec2& center, const Vec2& half) {
    if (std::abs(d.z()) < 1e-12) return false;
    const double t = (z - o.z()) / d.z();
    if (t <= 1e-9) return false;
    const double x = o.x() + t * d.x(), y = o.y() + t * d.y();
    return std::abs(x - center.x()) <= half.x() && std::abs(y - center.y()) <= half.y();
}

} // namespace

Vec3 hidden_rig_reference_shade(const HiddenRig& rig, const Vec3& surface_point) {
    const Envmap& env = *rig.scene.light.envmap;
    const Vec3 n(0, 0, 1);
    const Vec3 wo = (rig.camera.position() - surface_point).normalized();
    Vec3 acc = Vec3::Zero();
    for (int y = 0; y < env.height; ++y) {
        const double omega = env.texel_solid_angle_row[y];
        for (int x = 0; x < env.width; ++x) {
            const Vec3 wi = env.dir_of_texel(y + 0.5, x + 0.5);
            const double cos_i = wi.z();
            if (cos_i <= 0.0) continue;
            // Exact rig visibility: the occluder plate and the shaded plate
            // itself (the latter never occludes upward rays from the top).
            if (hits_rect(surface_point, wi, 3.0, Vec2(3.0, 0.0), Vec2(0.8, 0.7))) continue;
            const Vec3 f = reference_brdf(rig.plate_albedo, 0.09 + 0.91 * sigmoid(8.0), 0.0, n,
                                          wi, wo);
            acc += env.texel(y, x).cwiseProduct(f) * cos_i * omega;
        }
    }
    return acc;
}

GradcheckFixture make_gradcheck_fixture(uint64_t seed, int image_size) {
    Pcg32 rng(mix_u64(seed ^ 0x9e37), 0x1234);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.next_double(); };

    TriangleMesh mesh = make_test_mesh("icosphere", TestMeshParams{0, 1.0});
    for (auto& v : mesh.vertices)
        v += Vec3(uniform(-0.03, 0.03), uniform(-0.03, 0.03), uniform(-0.03, 0.03));

    GradcheckFixture fx;
    fx.scene = bind_gaussians(mesh);
    for (auto& g : fx.scene.gaussians) {
        g.alpha_raw = uniform(0.5, 2.0);
        g.s_raw += Vec3(uniform(0.6, 1.6), uniform(0.6, 1.6), uniform(-0.2, 0.2));
        g.albedo_raw = Vec3(uniform(-0.8, 0.8), uniform(-0.8, 0.8), uniform(-0.8, 0.8));
        g.rough_raw = uniform(-0.5, 0.5);
        g.metal_raw = uniform(-1.5, -0.2);
        // Small normal rotation away from identity.
        g.q_normal = Vec4(1.0, uniform(-0.15, 0.15), uniform(-0.15, 0.15), uniform(-0.15, 0.15));
        g.q_normal /= g.q_normal.norm();
        for (double& v : g.sh_rgb) v = uniform(-0.15, 0.15);
        // Keep the local light strictly positive over the sphere so the
        // clamp inside the estimator stays inactive.
        for (double& v : g.sh_aux) v = uniform(-0.04, 0.04);
        for (int c = 0; c < 3; ++c) g.sh_aux[c] = uniform(0.8, 1.2);
    }
    fx.scene.light.sh_global.fill(0.0);
    for (int c = 0; c < 3; ++c) fx.scene.light.sh_global[c] = uniform(2.0, 2.6);
    for (int j = 1; j < kShAuxCoeffs; ++j)
        for (int c = 0; c < 3; ++c)
            fx.scene.light.sh_global[static_cast<size_t>(j) * 3 + c] = uniform(-0.15, 0.15);
    fx.scene.sync_bound_positions();

    fx.view.camera = look_at_camera(Vec3(2.6, 0.7, 1.2), Vec3(0, 0, 0), Vec3(0, 0, 1), 42.0,
                                    image_size, image_size);

    // Reference image from a parameter-jittered copy so every loss term is
    // active at the base point.
    HybridScene target = fx.scene;
    for (auto& g : target.gaussians) {
        g.albedo_raw += Vec3(uniform(-0.4, 0.4), uniform(-0.4, 0.4), uniform(-0.4, 0.4));
        g.rough_raw += uniform(-0.3, 0.3);
        g.alpha_raw += uniform(-0.3, 0.3);
    }
    Bvh bvh = build_bvh(target.mesh);
    RenderOptions ro;
    ro.spp = 16;
    ro.seed = seed;
    fx.view.image = render_deferred(target, fx.view.camera, &bvh, ro);
    for (double& v : fx.view.image.data) v = std::max(0.0, v);

    fx.view.mask.assign(static_cast<size_t>(image_size) * image_size, 1);
    for (int x = 0; x < image_size; ++x) {
        fx.view.mask[x] = 0;
        fx.view.mask[static_cast<size_t>(image_size - 1) * image_size + x] = 0;
    }
    return fx;
}

RecoveryRig make_recovery_rig(int image_size, int n_views) {
    RecoveryRig rig;
    const TriangleMesh mesh = make_test_mesh("icosphere", TestMeshParams{2, 1.0});
    rig.scene = bind_gaussians(mesh);

    for (auto& g : rig.scene.gaussians) {
        g.alpha_raw = logit(0.97);
        // Wider in-plane footprint than the bind default so the sphere is
        // watertight in screen space.
        const double rc = circumradius(mesh.vertices[mesh.faces[g.tri_id][0]],
                                       mesh.vertices[mesh.faces[g.tri_id][1]],
                                       mesh.vertices[mesh.faces[g.tri_id][2]]);
        g.s_raw = Vec3(std::log(0.5 * rc), std::log(0.5 * rc), std::log(1e-4 * rc));
        const double z = g.mu.z();
        Vec3 albedo(0.25, 0.8, 0.25);
        if (z > 0.33) albedo = Vec3(0.8, 0.25, 0.25);
        if (z < -0.33) albedo = Vec3(0.25, 0.25, 0.8);
        g.albedo_raw = Vec3(logit(albedo.x()), logit(albedo.y()), logit(albedo.z()));
        g.rough_raw = logit((0.6 - kRoughMin) / kRoughSpan);
        g.metal_raw = -6.0;
    }
    // Fixed degree-2 light, strictly positive over the sphere.
    rig.scene.light.sh_global.fill(0.0);
    const double dc[3] = {3.6, 3.4, 3.2};
    for (int c = 0; c < 3; ++c) rig.scene.light.sh_global[c] = dc[c];
    for (int c = 0; c < 3; ++c) rig.scene.light.sh_global[2 * 3 + c] = 1.0; // z band
    for (int c = 0; c < 3; ++c) rig.scene.light.sh_global[3 * 3 + c] = c == 0 ? 0.45 : 0.3;
    for (int c = 0; c < 3; ++c) rig.scene.light.sh_global[6 * 3 + c] = 0.25;
    rig.scene.sync_bound_positions();

    const double radius = 4.0;
    const double elevations[3] = {-30.0, 15.0, 50.0};
    const int per_ring = std::max(1, n_views / 3);
    for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < per_ring; ++k) {
            const double az = kTwoPi * (k + 0.13 * r) / per_ring;
            const double el = elevations[r] * kPi / 180.0;
            const Vec3 eye(radius * std::cos(el) * std::cos(az), radius * std::cos(el) * std::sin(az),
                           radius * std::sin(el));
            rig.train_cameras.push_back(
                look_at_camera(eye, Vec3(0, 0, 0), Vec3(0, 0, 1), 32.0, image_size, image_size));
        }
    }
    rig.heldout_camera = look_at_camera(Vec3(radius * 0.93, 1.1, 0.9), Vec3(0, 0, 0), Vec3(0, 0, 1),
                                        32.0, image_size, image_size);

    // Smooth relighting environment: warm gradient sky.
    Envmap env;
    env.width = 256;
    env.height = 128;
    env.rgb.assign(static_cast<size_t>(env.width) * env.height * 3, 0.0f);
    const Vec3 sun = Vec3(0.4, 0.8, 0.45).normalized();
    for (int y = 0; y < env.height; ++y)
        for (int x = 0; x < env.width; ++x) {
            const Vec3 d = env.dir_of_texel(y + 0.5, x + 0.5);
            const double s = std::max(0.0, d.dot(sun));
            const size_t i = (static_cast<size_t>(y) * env.width + x) * 3;
            env.rgb[i + 0] = static_cast<float>(0.45 + 1.3 * s * s);
            env.rgb[i + 1] = static_cast<float>(0.5 + 1.0 * s * s);
            env.rgb[i + 2] = static_cast<float>(0.62 + 0.6 * s);
        }
    env.finalize();
    rig.relight_envmap = std::move(env);
    return rig;
}

void reset_recovery_parameters(HybridScene& scene) {
    for (auto& g : scene.gaussians) {
        g.albedo_raw = Vec3::Zero();
        g.rough_raw = 0.0;
        g.metal_raw = 0.0;
        g.sh_aux.fill(0.0);
    }
    scene.light.sh_global.fill(0.0);
    for (int c = 0; c < 3; ++c) scene.light.sh_global[c] = 3.545; // DC ~ unit radiance
}

} // namespace dpgs
