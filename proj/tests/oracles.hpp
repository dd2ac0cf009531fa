#pragma once

// Straight-line reference implementations used only by the tests.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;

/// O(n^2) DFT; the inverse is unnormalized like the library's raw transform.
inline std::vector<cplx> naive_dft(const std::vector<cplx>& x, bool inverse) {
    const std::size_t n = x.size();
    std::vector<cplx> out(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        cplx s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(j * k % n) / static_cast<double>(n);
            s += x[j] * cplx(std::cos(ang), std::sin(ang));
        }
        out[k] = s;
    }
    return out;
}

/// Classical RK4 on a scalar ODE.
template <class F>
double rk4(F f, double u, double h) {
    const double k1 = f(u), k2 = f(u + 0.5 * h * k1), k3 = f(u + 0.5 * h * k2), k4 = f(u + h * k3);
    return u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

/// Plain spectral convolution along the last axis of z [B, m] with one
/// channel: keeps modes 0..w.size()-1, multiplies by w, inverts to length m.
inline std::vector<double> fno_kernel_1d(const std::vector<double>& z, std::size_t B, std::size_t m,
                                         const std::vector<cplx>& w) {
    std::vector<double> out(B * m, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        std::vector<cplx> x(z.begin() + b * m, z.begin() + (b + 1) * m);
        const auto X = naive_dft(x, false);
        for (std::size_t n = 0; n < m; ++n) {
            double s = (w[0] * X[0]).real();
            for (std::size_t q = 1; q < w.size(); ++q) {
                const double ang = 2.0 * std::numbers::pi * static_cast<double>(q * n) / static_cast<double>(m);
                s += 2.0 * (w[q] * X[q] * cplx(std::cos(ang), std::sin(ang))).real();
            }
            out[b * m + n] = s / static_cast<double>(m);
        }
    }
    return out;
}

/// Plain spectral convolution on z [B, N, N, C] keeping kx in [0, k) U [N - k, N)
/// and ky in [0, k); w is [P, C, C] over modes ordered kx-block major, ky minor.
inline std::vector<double> fno_kernel_2d(const std::vector<double>& z, std::size_t B, std::size_t N, std::size_t C,
                                         std::size_t k, const std::vector<cplx>& w) {
    std::vector<std::size_t> kxs;
    for (std::size_t a = 0; a < k; ++a) kxs.push_back(a);
    for (std::size_t a = 0; a < k; ++a) kxs.push_back(N - k + a);
    std::vector<double> out(B * N * N * C, 0.0);
    const double two_pi_n = 2.0 * std::numbers::pi / static_cast<double>(N);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t a = 0; a < 2 * k; ++a)
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::size_t p = a * k + ky, kx = kxs[a];
                std::vector<cplx> X(C, 0.0);
                for (std::size_t x = 0; x < N; ++x)
                    for (std::size_t y = 0; y < N; ++y) {
                        const double ang = -two_pi_n * static_cast<double>(kx * x + ky * y);
                        const cplx e(std::cos(ang), std::sin(ang));
                        for (std::size_t c = 0; c < C; ++c) X[c] += z[((b * N + x) * N + y) * C + c] * e;
                    }
                const double weight = ky == 0 ? 1.0 : 2.0;
                for (std::size_t o = 0; o < C; ++o) {
                    cplx Y = 0.0;
                    for (std::size_t i = 0; i < C; ++i) Y += w[(p * C + o) * C + i] * X[i];
                    for (std::size_t x = 0; x < N; ++x)
                        for (std::size_t y = 0; y < N; ++y) {
                            const double ang = two_pi_n * static_cast<double>(kx * x + ky * y);
                            out[((b * N + x) * N + y) * C + o] +=
                                weight * (Y * cplx(std::cos(ang), std::sin(ang))).real() / static_cast<double>(N * N);
                        }
                }
            }
    return out;
}

}  // namespace oracle
