// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/sh.hpp"

#include "dpgs/errors.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace dpgs {

namespace {

// Band constants, graphics sign convention (matches common splatting code).
constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

} // namespace

int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

int sh_degree_of_index(int idx) {
    if (idx < 1) return 0;
    if (idx < 4) return 1;
    if (idx < 9) return 2;
    return 3;
}

void sh_basis(int degree, const Vec3& dir, double* b) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    b[0] = kC0;
    if (degree < 1) return;
    b[1] = -kC1 * y;
    b[2] = kC1 * z;
    b[3] = -kC1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    b[4] = kC2[0] * x * y;
    b[5] = kC2[1] * y * z;
    b[6] = kC2[2] * (3.0 * zz - 1.0);
    b[7] = kC2[3] * x * z;
    b[8] = kC2[4] * (xx - yy);
    if (degree < 3) return;
    b[9] = kC3[0] * y * (3.0 * xx - yy);
    b[10] = kC3[1] * x * y * z;
    b[11] = kC3[2] * y * (5.0 * zz - 1.0);
    b[12] = kC3[3] * z * (5.0 * zz - 3.0);
    b[13] = kC3[4] * x * (5.0 * zz - 1.0);
    b[14] = kC3[5] * z * (xx - yy);
    b[15] = kC3[6] * x * (xx - 3.0 * yy);
}

void sh_basis_grad(int degree, const Vec3& dir, Vec3* g) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    g[0] = Vec3::Zero();
    if (degree < 1) return;
    g[1] = Vec3(0.0, -kC1, 0.0);
    g[2] = Vec3(0.0, 0.0, kC1);
    g[3] = Vec3(-kC1, 0.0, 0.0);
    if (degree < 2) return;
    g[4] = kC2[0] * Vec3(y, x, 0.0);
    g[5] = kC2[1] * Vec3(0.0, z, y);
    g[6] = kC2[2] * Vec3(0.0, 0.0, 6.0 * z);
    g[7] = kC2[3] * Vec3(z, 0.0, x);
    g[8] = kC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    if (degree < 3) return;
    g[9] = kC3[0] * Vec3(6.0 * x * y, 3.0 * x * x - 3.0 * y * y, 0.0);
    g[10] = kC3[1] * Vec3(y * z, x * z, x * y);
    g[11] = kC3[2] * Vec3(0.0, 5.0 * z * z - 1.0, 10.0 * y * z);
    g[12] = kC3[3] * Vec3(0.0, 0.0, 15.0 * z * z - 3.0);
    g[13] = kC3[4] * Vec3(5.0 * z * z - 1.0, 0.0, 10.0 * x * z);
    g[14] = kC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, x * x - y * y);
    g[15] = kC3[6] * Vec3(3.0 * x * x - 3.0 * y * y, -6.0 * x * y, 0.0);
}

double sh_eval(std::span<const double> coeffs, const Vec3& dir) {
    const int n = static_cast<int>(coeffs.size());
    int degree = 0;
    while (sh_coeff_count(degree) < n) ++degree;
    double basis[kShMaxCoeffs];
    sh_basis(degree, dir, basis);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += coeffs[i] * basis[i];
    return acc;
}

Vec3 sh_eval_rgb(std::span<const double> coeffs, int coeff_count, const Vec3& dir) {
    int degree = 0;
    while (sh_coeff_count(degree) < coeff_count) ++degree;
    double basis[kShMaxCoeffs];
    sh_basis(degree, dir, basis);
    Vec3 acc = Vec3::Zero();
    for (int i = 0; i < coeff_count; ++i) {
        const double b = basis[i];
        acc.x() += coeffs[i * 3 + 0] * b;
        acc.y() += coeffs[i * 3 + 1] * b;
        acc.z() += coeffs[i * 3 + 2] * b;
    }
    return acc;
}

ShFit sh_project(std::span<const Vec3> dirs, std::span<const double> values, int channels,
                 int degree) {
    const int k = sh_coeff_count(degree);
    const int n = static_cast<int>(dirs.size());
    if (n < k) throw Error("lighting", "sh_project: need at least " + std::to_string(k) +
                                           " samples, got " + std::to_string(n));
    Eigen::MatrixXd basis(n, k);
    double row[kShMaxCoeffs];
    for (int i = 0; i < n; ++i) {
        sh_basis(degree, dirs[i], row);
        for (int j = 0; j < k; ++j) basis(i, j) = row[j];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
    if (qr.rank() < k) throw Error("lighting", "sh_project: rank-deficient sample set");

    ShFit fit;
    fit.coeffs.assign(static_cast<size_t>(k) * channels, 0.0);
    double sq_sum = 0.0;
    Eigen::VectorXd rhs(n);
    for (int c = 0; c < channels; ++c) {
        for (int i = 0; i < n; ++i) rhs[i] = values[static_cast<size_t>(i) * channels + c];
        const Eigen::VectorXd sol = qr.solve(rhs);
        for (int j = 0; j < k; ++j) fit.coeffs[static_cast<size_t>(j) * channels + c] = sol[j];
        sq_sum += (basis * sol - rhs).squaredNorm();
    }
    fit.residual_rms = std::sqrt(sq_sum / (static_cast<double>(n) * channels));
    return fit;
}

namespace {
// Golden angle in radians.
constexpr double kGolden = 2.399963229728653;
} // namespace

std::vector<Vec3> fibonacci_sphere(int n) {
    std::vector<Vec3> dirs;
    dirs.reserve(n);
    for (int k = 0; k < n; ++k) {
        const double z = 1.0 - (2.0 * k + 1.0) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = kGolden * k;
        dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
    }
    return dirs;
}

Vec3 fibonacci_hemisphere_canonical(int n, int k) {
    const double z = 1.0 - static_cast<double>(k) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = kGolden * k;
    return Vec3(r * std::cos(phi), r * std::sin(phi), z);
}

std::vector<Vec3> fibonacci_hemisphere(int n, const Mat3& frame_rot) {
    std::vector<Vec3> dirs;
    dirs.reserve(n);
    for (int k = 0; k < n; ++k) dirs.push_back(frame_rot * fibonacci_hemisphere_canonical(n, k));
    return dirs;
}

} // namespace dpgs
