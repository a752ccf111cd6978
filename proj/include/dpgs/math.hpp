// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>

namespace dpgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kInvPi = 1.0 / kPi;

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// d sigmoid / dx expressed through the activated value.
inline double sigmoid_grad_from_value(double s) { return s * (1.0 - s); }

inline double logit(double y) { return std::log(y / (1.0 - y)); }

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

inline double sqr(double x) { return x * x; }

// Rotation matrix from a raw (not necessarily unit) quaternion, w-first.
inline Mat3 quat_to_mat(const Vec4& q_raw) {
    const double n = q_raw.norm();
    const Vec4 q = q_raw / n;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 m;
    m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return m;
}

// v rotated by the normalized version of q_raw.
Vec3 quat_rotate(const Vec4& q_raw, const Vec3& v);

// Backward of quat_rotate: given d(out), accumulate d(q_raw) and d(v).
void quat_rotate_backward(const Vec4& q_raw, const Vec3& v, const Vec3& d_out, Vec4& d_q_raw,
                          Vec3& d_v);

// Rotation taking +z to the unit vector n. Smooth everywhere except n = -z.
Mat3 rotation_from_z(const Vec3& n);

// Backward of w = rotation_from_z(n) * s for fixed s: accumulates d_n given d_w.
void rotation_from_z_apply_backward(const Vec3& n, const Vec3& s, const Vec3& d_w, Vec3& d_n);

} // namespace dpgs
