// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#include "dpgs/errors.hpp"
#include "dpgs/postproc.hpp"
#include "dpgs/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace dpgs;

TEST_CASE("srgb transfer endpoints, boundary and clipping") {
    CHECK(srgb_encode(0.0) == 0.0);
    CHECK(srgb_encode(1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(srgb_encode(0.0031308) == doctest::Approx(0.04045).epsilon(1e-4));
    CHECK(srgb_encode(2.0) == doctest::Approx(1.0));
    CHECK(srgb_encode(-0.5) == 0.0);
}

TEST_CASE("srgb transfer is monotone and continuous on a dense grid") {
    double prev = srgb_encode(0.0);
    for (int i = 1; i <= 10000; ++i) {
        const double x = static_cast<double>(i) / 10000.0;
        const double y = srgb_encode(x);
        CHECK(y >= prev);
        CHECK(y - prev < 1e-3 + 1e-6); // no jumps beyond the local slope
        prev = y;
    }
}

TEST_CASE("psnr spot values, sentinel and symmetry") {
    ImageF a(4, 4, 3), b(4, 4, 3);
    std::vector<uint8_t> mask(16, 1);
    for (double& v : a.data) v = 0.5;
    b = a;
    CHECK(psnr(a, b, mask) == doctest::Approx(99.0));
    for (double& v : b.data) v = 0.6; // uniform error 0.1 -> MSE 0.01
    CHECK(psnr(a, b, mask) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(psnr(a, b, mask) == doctest::Approx(psnr(b, a, mask)));
    std::vector<uint8_t> empty(16, 0);
    CHECK_THROWS_AS(psnr(a, b, empty), Error);
}

TEST_CASE("basecolor rescale: factors and median robustness") {
    ImageF pred(8, 8, 3), gt(8, 8, 3);
    std::vector<uint8_t> mask(64, 1);
    Pcg32 rng(3);
    for (int i = 0; i < 64; ++i)
        for (int c = 0; c < 3; ++c) {
            const double v = 0.2 + 0.6 * rng.next_double();
            gt.data[static_cast<size_t>(i) * 3 + c] = v;
            pred.data[static_cast<size_t>(i) * 3 + c] = 2.0 * v;
        }
    const Vec3 f = basecolor_rescale(pred, gt, mask);
    for (int c = 0; c < 3; ++c) CHECK(f[c] == doctest::Approx(0.5).epsilon(1e-9));

    // Identity case.
    CHECK((basecolor_rescale(gt, gt, mask) - Vec3::Ones()).norm() < 1e-12);

    // 10% outliers at 100x leave the median untouched.
    ImageF noisy = gt;
    for (int i = 0; i < 6; ++i)
        for (int c = 0; c < 3; ++c) noisy.data[static_cast<size_t>(i * 9) * 3 + c] *= 100.0;
    const Vec3 f2 = basecolor_rescale(noisy, gt, mask);
    for (int c = 0; c < 3; ++c) CHECK(f2[c] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("psnr after rescale is invariant to global prediction scale") {
    ImageF pred(8, 8, 3), gt(8, 8, 3);
    std::vector<uint8_t> mask(64, 1);
    Pcg32 rng(7);
    for (size_t i = 0; i < gt.data.size(); ++i) {
        gt.data[i] = 0.1 + 0.7 * rng.next_double();
        pred.data[i] = gt.data[i] * (0.9 + 0.2 * rng.next_double());
    }
    auto rescaled_psnr = [&](double k) {
        ImageF scaled = pred;
        for (double& v : scaled.data) v *= k;
        const Vec3 f = basecolor_rescale(scaled, gt, mask);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                for (int c = 0; c < 3; ++c) scaled.at(y, x, c) *= f[c];
        return psnr(scaled, gt, mask);
    };
    const double base = rescaled_psnr(1.0);
    for (double k : {0.1, 0.5, 2.0, 10.0})
        CHECK(rescaled_psnr(k) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("denoiser is exact on constant input") {
    const int n = 12;
    ImageF img(n, n, 3, 0.37), depth(n, n, 1, 2.0), normal(n, n, 3), albedo(n, n, 3, 0.5);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) normal.at(y, x, 2) = 1.0;
    const ImageF out = bilateral_denoise(img, depth, normal, albedo);
    for (size_t i = 0; i < out.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("denoiser reduces noise on a flat region") {
    const int n = 32;
    Pcg32 rng(9);
    ImageF clean(n, n, 3, 0.5), noisy(n, n, 3), depth(n, n, 1, 2.0), normal(n, n, 3),
        albedo(n, n, 3, 0.6);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) normal.at(y, x, 2) = 1.0;
    for (size_t i = 0; i < noisy.data.size(); ++i)
        noisy.data[i] = clean.data[i] + 0.12 * (rng.next_double() - 0.5);
    const ImageF out = bilateral_denoise(noisy, depth, normal, albedo);
    double mse_before = 0.0, mse_after = 0.0;
    for (size_t i = 0; i < out.data.size(); ++i) {
        mse_before += sqr(noisy.data[i] - clean.data[i]);
        mse_after += sqr(out.data[i] - clean.data[i]);
    }
    CHECK(mse_after < 0.7 * mse_before);
}

TEST_CASE("denoiser preserves albedo edges within one pixel") {
    // Checkerboard albedo with matching color edge, constant irradiance.
    const int n = 24;
    ImageF clean(n, n, 3), noisy(n, n, 3), depth(n, n, 1, 2.0), normal(n, n, 3), albedo(n, n, 3);
    Pcg32 rng(21);
    auto side = [&](int x) { return x < n / 2 ? 0.15 : 0.85; };
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            normal.at(y, x, 2) = 1.0;
            for (int c = 0; c < 3; ++c) {
                albedo.at(y, x, c) = side(x);
                clean.at(y, x, c) = side(x) * 0.8; // constant irradiance 0.8
                noisy.at(y, x, c) = clean.at(y, x, c) + 0.05 * (rng.next_double() - 0.5);
            }
        }
    const ImageF out = bilateral_denoise(noisy, depth, normal, albedo);
    // Two pixels away from the edge the output must stay on its own side.
    for (int y = 2; y < n - 2; ++y) {
        CHECK(std::abs(out.at(y, n / 2 - 3, 0) - 0.15 * 0.8) < 0.03);
        CHECK(std::abs(out.at(y, n / 2 + 2, 0) - 0.85 * 0.8) < 0.03);
    }
}
