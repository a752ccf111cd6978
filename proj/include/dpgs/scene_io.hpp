// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/scene.hpp"

#include <string>

namespace dpgs {

// Scene manifest: UTF-8 "key = value" lines referencing the splat PLY, mesh
// OBJ and optional envmap PFM, plus the global light SH and flags. Paths are
// resolved relative to the manifest location.
HybridScene load_scene(const std::string& manifest_path);
void save_scene(const HybridScene& scene, const std::string& manifest_path);

// Individual asset formats, also used by tools.
std::vector<Gaussian3D> load_gaussian_ply(const std::string& path);
void save_gaussian_ply(const std::string& path, const std::vector<Gaussian3D>& gaussians);

TriangleMesh load_obj(const std::string& path);
void save_obj(const std::string& path, const TriangleMesh& mesh);

Envmap load_envmap_pfm(const std::string& path);
void save_envmap_pfm(const std::string& path, const Envmap& envmap);

// Camera list: one camera per text line,
// fx fy cx cy width height near far r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz
std::vector<Camera> load_camera_list(const std::string& path);
void save_camera_list(const std::string& path, const std::vector<Camera>& cams);

// View list: one view per line, "image.pfm mask.pfm <camera fields>"; mask
// path "-" means all-foreground. Masks are single-channel PFM with 0/1 values.
std::vector<TrainView> load_views(const std::string& path);
void save_views(const std::string& path, const std::vector<TrainView>& views);

} // namespace dpgs
