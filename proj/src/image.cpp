// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/image.hpp"

#include "dpgs/errors.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dpgs {

namespace fs = std::filesystem;

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
    ensure_parent_dir(path);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("io", "cannot open for writing: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("io", "short write: " + tmp);
    }
    fs::rename(tmp, path);
}

namespace {

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "missing file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Parses "PF\n{w} {h}\n{scale}\n" allowing any whitespace between tokens.
struct PfmHeader {
    int width = 0, height = 0, channels = 0;
    bool little_endian = true;
    size_t data_offset = 0;
};

PfmHeader parse_pfm_header(const std::string& bytes, const std::string& path) {
    PfmHeader h;
    size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        const size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    const std::string magic = token();
    if (magic == "PF")
        h.channels = 3;
    else if (magic == "Pf")
        h.channels = 1;
    else
        throw Error("io", "not a PFM file: " + path);
    try {
        h.width = std::stoi(token());
        h.height = std::stoi(token());
        const double scale = std::stod(token());
        h.little_endian = scale < 0.0;
    } catch (const std::exception&) {
        throw Error("io", "malformed PFM header: " + path);
    }
    if (h.width <= 0 || h.height <= 0) throw Error("io", "bad PFM dimensions: " + path);
    // Exactly one whitespace byte terminates the header.
    if (pos >= bytes.size()) throw Error("io", "truncated PFM: " + path);
    ++pos;
    h.data_offset = pos;
    return h;
}

} // namespace

std::vector<float> load_pfm_floats(const std::string& path, int& height, int& width,
                                   int& channels) {
    const std::string bytes = read_all(path);
    const PfmHeader h = parse_pfm_header(bytes, path);
    if (!h.little_endian) throw Error("io", "big-endian PFM not supported: " + path);
    height = h.height;
    width = h.width;
    channels = h.channels;
    const size_t count = static_cast<size_t>(h.width) * h.height * h.channels;
    if (bytes.size() - h.data_offset < count * sizeof(float))
        throw Error("io", "truncated PFM payload: " + path);
    std::vector<float> vals(count);
    // PFM rows are bottom-to-top; flip into top-down order.
    const size_t row_floats = static_cast<size_t>(h.width) * h.channels;
    for (int y = 0; y < h.height; ++y) {
        const char* src =
            bytes.data() + h.data_offset + static_cast<size_t>(h.height - 1 - y) * row_floats * sizeof(float);
        std::memcpy(vals.data() + static_cast<size_t>(y) * row_floats, src, row_floats * sizeof(float));
    }
    return vals;
}

void save_pfm_floats(const std::string& path, int height, int width, int channels,
                     const std::vector<float>& values) {
    if (channels != 1 && channels != 3) throw Error("io", "PFM supports 1 or 3 channels");
    if (values.size() != static_cast<size_t>(height) * width * channels)
        throw Error("io", "PFM payload size mismatch");
    std::ostringstream out;
    out << (channels == 3 ? "PF" : "Pf") << "\n" << width << " " << height << "\n-1.0\n";
    const size_t row_floats = static_cast<size_t>(width) * channels;
    std::string payload;
    payload.resize(values.size() * sizeof(float));
    for (int y = 0; y < height; ++y) {
        std::memcpy(payload.data() + static_cast<size_t>(y) * row_floats * sizeof(float),
                    values.data() + static_cast<size_t>(height - 1 - y) * row_floats,
                    row_floats * sizeof(float));
    }
    atomic_write_file(path, out.str() + payload);
}

ImageF load_pfm(const std::string& path) {
    int h = 0, w = 0, c = 0;
    const std::vector<float> vals = load_pfm_floats(path, h, w, c);
    ImageF img(h, w, c);
    for (size_t i = 0; i < vals.size(); ++i) img.data[i] = vals[i];
    return img;
}

void save_pfm(const std::string& path, const ImageF& img) {
    std::vector<float> vals(img.data.size());
    for (size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<float>(img.data[i]);
    save_pfm_floats(path, img.height, img.width, img.channels, vals);
}

void save_png(const std::string& path, const ImageF& img) {
    if (img.channels != 1 && img.channels != 3) throw Error("io", "PNG supports 1 or 3 channels");
    ensure_parent_dir(path);
    const std::string tmp = path + ".tmp";
    FILE* fp = std::fopen(tmp.c_str(), "wb");
    if (!fp) throw Error("io", "cannot open for writing: " + tmp);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw Error("io", "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw Error("io", "libpng write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 8, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double v = img.at(y, x, c);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                row[static_cast<size_t>(x) * img.channels + c] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    std::filesystem::rename(tmp, path);
}

} // namespace dpgs
