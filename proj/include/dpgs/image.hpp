// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dpgs {

// Planar-free row-major image, values in double precision. Channel count is
// 1 or 3 everywhere in this codebase.
struct ImageF {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    ImageF() = default;
    ImageF(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
    bool empty() const { return data.empty(); }
};

// PFM: binary portable float map, little-endian (negative scale), rows stored
// bottom-to-top. 1-channel (Pf) and 3-channel (PF) variants.
ImageF load_pfm(const std::string& path);
void save_pfm(const std::string& path, const ImageF& img);

// Raw float grid variants used where bit-exact round trips matter.
void save_pfm_floats(const std::string& path, int height, int width, int channels,
                     const std::vector<float>& values);
std::vector<float> load_pfm_floats(const std::string& path, int& height, int& width,
                                   int& channels);

// 8-bit PNG, values expected in [0, 1] (clamped on write).
void save_png(const std::string& path, const ImageF& img);

// Writes through a temp file in the same directory, then renames.
void atomic_write_file(const std::string& path, const std::string& bytes);

// Creates the parent directory chain of `path` if missing.
void ensure_parent_dir(const std::string& path);

} // namespace dpgs
