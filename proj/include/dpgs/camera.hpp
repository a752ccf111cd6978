// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/math.hpp"

namespace dpgs {

// Pinhole camera. rot/trans map world points into camera space
// (x_cam = rot * x_world + trans), +z looking forward.
struct Camera {
    Mat3 rot = Mat3::Identity();
    Vec3 trans = Vec3::Zero();
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    int width = 1, height = 1;
    double near_clip = 0.01, far_clip = 1e4;

    bool valid() const {
        return fx > 0.0 && fy > 0.0 && near_clip < far_clip && width >= 1 && height >= 1;
    }

    Vec3 to_camera(const Vec3& p_world) const { return rot * p_world + trans; }
    Vec3 position() const { return -rot.transpose() * trans; }

    // Pixel (col x, row y) with the +0.5 center convention.
    Vec2 project(const Vec3& p_cam) const {
        return Vec2(fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy);
    }

    // Camera-space point for a pixel at z depth.
    Vec3 unproject(double px, double py, double depth) const {
        return Vec3((px - cx) / fx * depth, (py - cy) / fy * depth, depth);
    }

    Vec3 pixel_ray_dir_world(double px, double py) const {
        const Vec3 d_cam((px - cx) / fx, (py - cy) / fy, 1.0);
        return (rot.transpose() * d_cam).normalized();
    }
};

// Simple orbiting camera helper for tests and toy scenes: positioned at
// `eye`, looking at `target` with `up` hint.
Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_deg,
                      int width, int height);

} // namespace dpgs
