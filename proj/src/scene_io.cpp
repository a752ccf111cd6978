// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/scene_io.hpp"

#include "dpgs/errors.hpp"
#include "dpgs/image.hpp"

#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace dpgs {

namespace fs = std::filesystem;

namespace {

constexpr int kPlyFloatProps = 98; // everything except tri_id

// Property names in on-disk order.
std::vector<std::string> ply_property_names() {
    std::vector<std::string> names = {"x",  "y",  "z",  "qw", "qx", "qy",   "qz",
                                      "sx", "sy", "sz", "alpha"};
    for (int i = 0; i < kShRgbFloats; ++i) names.push_back("sh_rgb_" + std::to_string(i));
    names.insert(names.end(), {"albedo_r", "albedo_g", "albedo_b", "rough", "metal", "qnw", "qnx",
                               "qny", "qnz"});
    for (int i = 0; i < kShAuxFloats; ++i) names.push_back("sh_aux_" + std::to_string(i));
    names.push_back("tri_id");
    names.insert(names.end(), {"mux", "muy", "muz"});
    return names;
}

void pack_gaussian(const Gaussian3D& g, float* f, int32_t& tri) {
    int k = 0;
    for (int i = 0; i < 3; ++i) f[k++] = static_cast<float>(g.mu[i]);
    for (int i = 0; i < 4; ++i) f[k++] = static_cast<float>(g.q_shape[i]);
    for (int i = 0; i < 3; ++i) f[k++] = static_cast<float>(g.s_raw[i]);
    f[k++] = static_cast<float>(g.alpha_raw);
    for (double v : g.sh_rgb) f[k++] = static_cast<float>(v);
    for (int i = 0; i < 3; ++i) f[k++] = static_cast<float>(g.albedo_raw[i]);
    f[k++] = static_cast<float>(g.rough_raw);
    f[k++] = static_cast<float>(g.metal_raw);
    for (int i = 0; i < 4; ++i) f[k++] = static_cast<float>(g.q_normal[i]);
    for (double v : g.sh_aux) f[k++] = static_cast<float>(v);
    tri = g.tri_id;
    for (int i = 0; i < 3; ++i) f[k++] = static_cast<float>(g.mu_init[i]);
}

Gaussian3D unpack_gaussian(const float* f, int32_t tri) {
    Gaussian3D g;
    int k = 0;
    for (int i = 0; i < 3; ++i) g.mu[i] = f[k++];
    for (int i = 0; i < 4; ++i) g.q_shape[i] = f[k++];
    for (int i = 0; i < 3; ++i) g.s_raw[i] = f[k++];
    g.alpha_raw = f[k++];
    for (double& v : g.sh_rgb) v = f[k++];
    for (int i = 0; i < 3; ++i) g.albedo_raw[i] = f[k++];
    g.rough_raw = f[k++];
    g.metal_raw = f[k++];
    for (int i = 0; i < 4; ++i) g.q_normal[i] = f[k++];
    for (double& v : g.sh_aux) v = f[k++];
    g.tri_id = tri;
    for (int i = 0; i < 3; ++i) g.mu_init[i] = f[k++];
    return g;
}

} // namespace

void save_gaussian_ply(const std::string& path, const std::vector<Gaussian3D>& gaussians) {
    std::ostringstream out;
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << gaussians.size() << "\n";
    for (const auto& name : ply_property_names())
        out << (name == "tri_id" ? "property int " : "property float ") << name << "\n";
    out << "end_header\n";

    std::string payload;
    const size_t record = kPlyFloatProps * sizeof(float) + sizeof(int32_t);
    payload.resize(gaussians.size() * record);
    // On-disk layout is 11+48+9 floats, the int tri_id, then 3 floats.
    for (size_t i = 0; i < gaussians.size(); ++i) {
        float f[kPlyFloatProps];
        int32_t tri = -1;
        pack_gaussian(gaussians[i], f, tri);
        char* dst = payload.data() + i * record;
        std::memcpy(dst, f, 95 * sizeof(float));
        std::memcpy(dst + 95 * sizeof(float), &tri, sizeof(int32_t));
        std::memcpy(dst + 95 * sizeof(float) + sizeof(int32_t), f + 95, 3 * sizeof(float));
    }
    atomic_write_file(path, out.str() + payload);
}

std::vector<Gaussian3D> load_gaussian_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("scene_model", "missing file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "ply")
        throw Error("scene_model", "malformed header: not a PLY file: " + path);
    if (!std::getline(in, line) || line != "format binary_little_endian 1.0")
        throw Error("scene_model", "malformed header: expected binary little-endian PLY");
    size_t count = 0;
    std::vector<std::string> props;
    while (std::getline(in, line)) {
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "comment") continue;
        if (word == "element") {
            std::string kind;
            ls >> kind >> count;
            if (kind != "vertex") throw Error("scene_model", "malformed header: element " + kind);
        } else if (word == "property") {
            std::string type, name;
            ls >> type >> name;
            props.push_back(name);
        }
    }
    const auto expected = ply_property_names();
    if (props != expected)
        throw Error("scene_model", "malformed header: unexpected property layout in " + path);

    const size_t record = kPlyFloatProps * sizeof(float) + sizeof(int32_t);
    std::vector<char> payload(count * record);
    in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (static_cast<size_t>(in.gcount()) != payload.size())
        throw Error("scene_model", "truncated splat payload in " + path);

    std::vector<Gaussian3D> gaussians;
    gaussians.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        float f[kPlyFloatProps];
        int32_t tri = -1;
        const char* src = payload.data() + i * record;
        std::memcpy(f, src, 95 * sizeof(float));
        std::memcpy(&tri, src + 95 * sizeof(float), sizeof(int32_t));
        std::memcpy(f + 95, src + 95 * sizeof(float) + sizeof(int32_t), 3 * sizeof(float));
        for (float v : f)
            if (!std::isfinite(v))
                throw Error("scene_model", "non-finite value in splat " + std::to_string(i));
        gaussians.push_back(unpack_gaussian(f, tri));
    }
    return gaussians;
}

TriangleMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("scene_model", "missing file: " + path);
    TriangleMesh mesh;
    std::string line;
    while (std::getline(in, line)) {
        if (line.size() < 2) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v;
            ls >> v.x() >> v.y() >> v.z();
            if (!ls) throw Error("scene_model", "malformed vertex line: " + line);
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            int idx[3];
            for (int k = 0; k < 3; ++k) {
                std::string tok;
                ls >> tok;
                if (tok.empty()) throw Error("scene_model", "malformed face line: " + line);
                idx[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
            }
            mesh.faces.emplace_back(idx[0], idx[1], idx[2]);
        }
    }
    return mesh;
}

void save_obj(const std::string& path, const TriangleMesh& mesh) {
    std::ostringstream out;
    char buf[128];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        out << buf;
    }
    for (const auto& f : mesh.faces)
        out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    atomic_write_file(path, out.str());
}

Envmap load_envmap_pfm(const std::string& path) {
    Envmap env;
    int c = 0;
    env.rgb = load_pfm_floats(path, env.height, env.width, c);
    if (c != 3) throw Error("scene_model", "envmap must be a 3-channel PFM: " + path);
    env.finalize();
    return env;
}

void save_envmap_pfm(const std::string& path, const Envmap& envmap) {
    save_pfm_floats(path, envmap.height, envmap.width, 3, envmap.rgb);
}

namespace {

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("scene_model", "missing file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

} // namespace

HybridScene load_scene(const std::string& manifest_path) {
    const auto kv = parse_kv_file(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& rel) { return (base / rel).string(); };

    HybridScene scene;
    if (!kv.count("gaussians") || !kv.count("mesh"))
        throw Error("scene_model", "manifest must name 'gaussians' and 'mesh' assets");
    scene.gaussians = load_gaussian_ply(resolve(kv.at("gaussians")));
    scene.mesh = load_obj(resolve(kv.at("mesh")));
    if (kv.count("envmap") && !kv.at("envmap").empty())
        scene.light.envmap = load_envmap_pfm(resolve(kv.at("envmap")));
    if (kv.count("sh_global")) {
        std::istringstream ss(kv.at("sh_global"));
        for (double& v : scene.light.sh_global) {
            ss >> v;
            if (!ss) throw Error("scene_model", "manifest sh_global needs 27 numbers");
        }
    }
    const bool bound_declared = kv.count("bound") && kv.at("bound") == "1";
    scene.baked = kv.count("baked") && kv.at("baked") == "1";
    if (bound_declared && scene.gaussians.size() != scene.mesh.face_count())
        throw Error("scene_model",
                    "binding mismatch: " + std::to_string(scene.gaussians.size()) + " splats vs " +
                        std::to_string(scene.mesh.face_count()) + " faces");
    validate_scene(scene);
    scene.bvh_dirty = true;
    return scene;
}

void save_scene(const HybridScene& scene, const std::string& manifest_path) {
    const fs::path base = fs::path(manifest_path).parent_path();
    const std::string stem = fs::path(manifest_path).stem().string();
    ensure_parent_dir(manifest_path);

    const std::string ply_rel = stem + ".gaussians.ply";
    const std::string obj_rel = stem + ".mesh.obj";
    const std::string env_rel = stem + ".envmap.pfm";
    save_gaussian_ply((base / ply_rel).string(), scene.gaussians);
    save_obj((base / obj_rel).string(), scene.mesh);

    std::ostringstream out;
    out << "gaussians = " << ply_rel << "\n";
    out << "mesh = " << obj_rel << "\n";
    if (scene.light.envmap) {
        save_envmap_pfm((base / env_rel).string(), *scene.light.envmap);
        out << "envmap = " << env_rel << "\n";
    }
    out << "sh_global =";
    char buf[64];
    for (double v : scene.light.sh_global) {
        std::snprintf(buf, sizeof(buf), " %.17g", v);
        out << buf;
    }
    out << "\n";
    out << "bound = " << (scene.fully_bound() ? 1 : 0) << "\n";
    out << "baked = " << (scene.baked ? 1 : 0) << "\n";
    atomic_write_file(manifest_path, out.str());
}

std::vector<Camera> load_camera_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("scene_model", "missing file: " + path);
    std::vector<Camera> cams;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        Camera cam;
        ls >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> cam.width >> cam.height >> cam.near_clip >>
            cam.far_clip;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) ls >> cam.rot(r, c);
            ls >> cam.trans[r];
        }
        if (!ls) throw Error("scene_model", "malformed camera line: " + line);
        if (!cam.valid()) throw Error("scene_model", "invalid camera in " + path);
        cams.push_back(cam);
    }
    return cams;
}

namespace {
std::string camera_fields(const Camera& cam) {
    std::ostringstream out;
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), " %.17g", v);
        out << buf;
    };
    put(cam.fx);
    put(cam.fy);
    put(cam.cx);
    put(cam.cy);
    out << " " << cam.width << " " << cam.height;
    put(cam.near_clip);
    put(cam.far_clip);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) put(cam.rot(r, c));
        put(cam.trans[r]);
    }
    return out.str();
}
} // namespace

void save_camera_list(const std::string& path, const std::vector<Camera>& cams) {
    std::ostringstream out;
    for (const auto& cam : cams) {
        const std::string fields = camera_fields(cam);
        out << fields.substr(1) << "\n";
    }
    atomic_write_file(path, out.str());
}

std::vector<TrainView> load_views(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("scene_model", "missing file: " + path);
    const fs::path base = fs::path(path).parent_path();
    std::vector<TrainView> views;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string image_rel, mask_rel;
        ls >> image_rel >> mask_rel;
        TrainView view;
        ls >> view.camera.fx >> view.camera.fy >> view.camera.cx >> view.camera.cy >>
            view.camera.width >> view.camera.height >> view.camera.near_clip >>
            view.camera.far_clip;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) ls >> view.camera.rot(r, c);
            ls >> view.camera.trans[r];
        }
        if (!ls) throw Error("scene_model", "malformed view line: " + line);
        view.image = load_pfm((base / image_rel).string());
        const size_t npix = view.image.pixel_count();
        if (mask_rel == "-") {
            view.mask.assign(npix, 1);
        } else {
            const ImageF m = load_pfm((base / mask_rel).string());
            if (m.channels != 1 || m.pixel_count() != npix)
                throw Error("scene_model", "mask does not match image: " + mask_rel);
            view.mask.resize(npix);
            for (size_t i = 0; i < npix; ++i) view.mask[i] = m.data[i] > 0.5 ? 1 : 0;
        }
        validate_view(view);
        views.push_back(std::move(view));
    }
    return views;
}

void save_views(const std::string& path, const std::vector<TrainView>& views) {
    ensure_parent_dir(path);
    const fs::path base = fs::path(path).parent_path();
    const std::string stem = fs::path(path).stem().string();
    std::ostringstream out;
    for (size_t i = 0; i < views.size(); ++i) {
        const std::string img_rel = stem + "_" + std::to_string(i) + ".pfm";
        const std::string mask_rel = stem + "_" + std::to_string(i) + ".mask.pfm";
        save_pfm((base / img_rel).string(), views[i].image);
        ImageF m(views[i].image.height, views[i].image.width, 1);
        for (size_t p = 0; p < m.data.size(); ++p) m.data[p] = views[i].mask[p];
        save_pfm((base / mask_rel).string(), m);
        out << img_rel << " " << mask_rel << camera_fields(views[i].camera) << "\n";
    }
    atomic_write_file(path, out.str());
}

} // namespace dpgs
