// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/camera.hpp"

#include <cmath>

namespace dpgs {

Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_deg,
                      int width, int height) {
    Camera cam;
    const Vec3 fwd = (target - eye).normalized();
    Vec3 right = fwd.cross(up).normalized();
    if (!right.allFinite() || right.norm() < 0.5) right = fwd.cross(Vec3(1, 0, 0)).normalized();
    const Vec3 down = fwd.cross(right);
    cam.rot.row(0) = right;
    cam.rot.row(1) = down;
    cam.rot.row(2) = fwd;
    cam.trans = -cam.rot * eye;
    cam.width = width;
    cam.height = height;
    const double f = 0.5 * height / std::tan(0.5 * fov_y_deg * kPi / 180.0);
    cam.fx = cam.fy = f;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    return cam;
}

} // namespace dpgs
