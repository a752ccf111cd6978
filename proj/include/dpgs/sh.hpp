// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dpgs/math.hpp"

#include <span>
#include <vector>

namespace dpgs {

// Real spherical harmonics, graphics convention, ordered l ascending with
// m = -l..l inside each band. Degree <= 3 (16 basis functions).
inline constexpr int kShMaxCoeffs = 16;

int sh_coeff_count(int degree);
int sh_degree_of_index(int idx);

// Fills basis[0..count) with Y_lm(dir); dir must be unit length.
void sh_basis(int degree, const Vec3& dir, double* basis);

// d basis_i / d dir as the gradient of the polynomial extension. For unit
// directions perturbed tangentially (the only case used here) this is exact.
void sh_basis_grad(int degree, const Vec3& dir, Vec3* grad);

// Scalar coefficients: sum_i c_i Y_i(dir).
double sh_eval(std::span<const double> coeffs, const Vec3& dir);

// Interleaved 3-channel coefficients c[i*3 + ch].
Vec3 sh_eval_rgb(std::span<const double> coeffs, int coeff_count, const Vec3& dir);

struct ShFit {
    std::vector<double> coeffs; // per input channel, coefficient-major
    double residual_rms = 0.0;
};

// Least-squares fit of sampled directional values. values is sample-major with
// `channels` entries per sample. Throws on a rank-deficient sample set.
ShFit sh_project(std::span<const Vec3> dirs, std::span<const double> values, int channels,
                 int degree);

// Spiral lattice covering the full sphere (n >= 1), deterministic.
std::vector<Vec3> fibonacci_sphere(int n);

// Spiral lattice on the +z hemisphere of `frame_rot` (rotation with third
// column = surface normal). First point is the pole, so n = 1 returns the
// normal itself. Canonical (pre-rotation) z of point k is 1 - k/n.
std::vector<Vec3> fibonacci_hemisphere(int n, const Mat3& frame_rot);

// Canonical lattice point k before rotation into the surface frame.
Vec3 fibonacci_hemisphere_canonical(int n, int k);

} // namespace dpgs
