// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/math.hpp"

namespace dpgs {

Vec3 quat_rotate(const Vec4& q_raw, const Vec3& v) {
    const Vec4 q = q_raw / q_raw.norm();
    const double w = q[0];
    const Vec3 u(q[1], q[2], q[3]);
    const Vec3 t = 2.0 * u.cross(v);
    return v + w * t + u.cross(t);
}

void quat_rotate_backward(const Vec4& q_raw, const Vec3& v, const Vec3& d_out, Vec4& d_q_raw,
                          Vec3& d_v) {
    const double norm = q_raw.norm();
    const Vec4 q = q_raw / norm;
    const double w = q[0];
    const Vec3 u(q[1], q[2], q[3]);

    // d_v via the transposed rotation.
    const Mat3 rot = quat_to_mat(q_raw);
    d_v += rot.transpose() * d_out;

    // Gradient wrt the normalized quaternion. With skew S(a)x = a x x and
    // S(a)^T = -S(a), the Jacobian wrt the vector part is
    // J_u = -2w S(v) - 2 S(u x v) - 2 S(u) S(v), so
    // J_u^T d = 2w (v x d) + 2 ((u x v) x d) - 2 (v x (u x d)).
    const Vec3 uxv = u.cross(v);
    Vec4 d_qn;
    d_qn[0] = 2.0 * uxv.dot(d_out);
    const Vec3 jut = 2.0 * w * v.cross(d_out) + 2.0 * uxv.cross(d_out)
                     - 2.0 * v.cross(u.cross(d_out));
    d_qn[1] = jut[0];
    d_qn[2] = jut[1];
    d_qn[3] = jut[2];

    // Through the normalization q = q_raw / |q_raw|.
    d_q_raw += (d_qn - q * q.dot(d_qn)) / norm;
}

Mat3 rotation_from_z(const Vec3& n) {
    const double c = n.z();
    if (c < -1.0 + 1e-12) {
        Mat3 flip;
        flip << 1, 0, 0, 0, -1, 0, 0, 0, -1;
        return flip;
    }
    const Vec3 v(-n.y(), n.x(), 0.0);
    Mat3 vx;
    vx << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return Mat3::Identity() + vx + vx * vx / (1.0 + c);
}

void rotation_from_z_apply_backward(const Vec3& n, const Vec3& s, const Vec3& d_w, Vec3& d_n) {
    const double c = n.z();
    if (c < -1.0 + 1e-9) return; // gradient undefined at the pole
    const Vec3 v(-n.y(), n.x(), 0.0);
    const double denom = 1.0 + c;
    const Vec3 p = v.cross(s);
    const Vec3 g = v.cross(p);

    Vec3 d_v = s.cross(d_w);
    d_v += p.cross(d_w) / denom;
    d_v += s.cross(d_w.cross(v)) / denom;
    const double d_c = -g.dot(d_w) / (denom * denom);

    d_n.x() += d_v.y();
    d_n.y() += -d_v.x();
    d_n.z() += d_c;
}

} // namespace dpgs
