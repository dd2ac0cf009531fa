#include "fnsda/ns_solver.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fnsda/errors.hpp"
#include "fnsda/fft.hpp"

namespace fnsda {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

void dft2(std::span<std::complex<double>> data, std::size_t side, bool inverse) {
    if (data.size() != side * side) throw ShapeError("dft2: expected " + std::to_string(side * side) + " values");
    for (std::size_t i = 0; i < side; ++i) dft::transform(data.subspan(i * side, side), inverse);
    std::vector<std::complex<double>> column(side);
    for (std::size_t j = 0; j < side; ++j) {
        for (std::size_t i = 0; i < side; ++i) column[i] = data[i * side + j];
        dft::transform(column, inverse);
        for (std::size_t i = 0; i < side; ++i) data[i * side + j] = column[i];
    }
    if (inverse) {
        const double s = 1.0 / static_cast<double>(side * side);
        for (auto& v : data) v *= s;
    }
}

std::vector<double> ns_default_forcing(std::size_t side) {
    std::vector<double> f(side * side);
    for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j) {
            const double x = static_cast<double>(i) / static_cast<double>(side);
            const double y = static_cast<double>(j) / static_cast<double>(side);
            f[i * side + j] = 0.1 * (std::sin(kTwoPi * (x + y)) + std::cos(kTwoPi * (x + y)));
        }
    return f;
}

NsSolver::NsSolver(const NsOptions& options, std::vector<double> forcing) : opt_(options) {
    const std::size_t n = opt_.side;
    if (!dft::is_power_of_two(n)) throw ConfigError("NS grid side must be a power of two");
    if (!(opt_.dt_internal > 0.0) || opt_.dt_internal > opt_.max_dt) {
        throw ConfigError("NS dt_internal " + std::to_string(opt_.dt_internal) + " outside (0, " +
                          std::to_string(opt_.max_dt) + "]");
    }
    if (!(opt_.viscosity >= 0.0)) throw ConfigError("NS viscosity must be non-negative");

    forcing_hat_.assign(n * n, cplx(0.0, 0.0));
    if (opt_.forcing) {
        if (forcing.size() != n * n) throw ShapeError("NS forcing must have side*side values");
        for (std::size_t i = 0; i < n * n; ++i) forcing_hat_[i] = forcing[i];
        dft2(forcing_hat_, n, false);
    }

    kx_.resize(n * n);
    ky_.resize(n * n);
    k2_.resize(n * n);
    keep_.resize(n * n);
    const auto wavenumber = [n](std::size_t i) {
        return i <= n / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
    };
    const double cutoff = static_cast<double>(n) / 3.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double a = wavenumber(i), b = wavenumber(j);
            const std::size_t idx = i * n + j;
            kx_[idx] = (2 * i == n) ? 0.0 : kTwoPi * a;
            ky_[idx] = (2 * j == n) ? 0.0 : kTwoPi * b;
            k2_[idx] = kTwoPi * kTwoPi * (a * a + b * b);
            keep_[idx] = std::fabs(a) <= cutoff && std::fabs(b) <= cutoff;
        }
}

void NsSolver::nonlinear(const std::vector<cplx>& w_hat, std::vector<cplx>& out) const {
    const std::size_t n2 = w_hat.size();
    out = forcing_hat_;
    if (!opt_.advection) return;

    const cplx I(0.0, 1.0);
    std::vector<cplx> u(n2), v(n2), wx(n2), wy(n2);
    for (std::size_t idx = 0; idx < n2; ++idx) {
        const cplx psi = k2_[idx] > 0.0 ? w_hat[idx] / k2_[idx] : cplx(0.0, 0.0);
        u[idx] = I * ky_[idx] * psi;
        v[idx] = -I * kx_[idx] * psi;
        wx[idx] = I * kx_[idx] * w_hat[idx];
        wy[idx] = I * ky_[idx] * w_hat[idx];
    }
    dft2(u, opt_.side, true);
    dft2(v, opt_.side, true);
    dft2(wx, opt_.side, true);
    dft2(wy, opt_.side, true);
    std::vector<cplx> adv(n2);
    for (std::size_t idx = 0; idx < n2; ++idx) {
        adv[idx] = u[idx].real() * wx[idx].real() + v[idx].real() * wy[idx].real();
    }
    dft2(adv, opt_.side, false);
    for (std::size_t idx = 1; idx < n2; ++idx) {
        if (keep_[idx]) out[idx] -= adv[idx];
    }
}

void NsSolver::step(std::span<double> w) const {
    const std::size_t n2 = opt_.side * opt_.side;
    if (w.size() != n2) throw ShapeError("NS state must have side*side values");
    const double dt = opt_.dt_internal;

    std::vector<cplx> w_hat(n2);
    for (std::size_t i = 0; i < n2; ++i) w_hat[i] = w[i];
    dft2(w_hat, opt_.side, false);

    std::vector<cplx> n1, n2v, pred(n2);
    nonlinear(w_hat, n1);
    if (opt_.viscous == ViscousScheme::crank_nicolson) {
        for (std::size_t i = 0; i < n2; ++i) {
            const double a = 0.5 * opt_.viscosity * k2_[i] * dt;
            pred[i] = ((1.0 - a) * w_hat[i] + dt * n1[i]) / (1.0 + a);
        }
        nonlinear(pred, n2v);
        for (std::size_t i = 0; i < n2; ++i) {
            const double a = 0.5 * opt_.viscosity * k2_[i] * dt;
            w_hat[i] = ((1.0 - a) * w_hat[i] + 0.5 * dt * (n1[i] + n2v[i])) / (1.0 + a);
        }
    } else {
        for (std::size_t i = 0; i < n2; ++i) {
            pred[i] = std::exp(-opt_.viscosity * k2_[i] * dt) * (w_hat[i] + dt * n1[i]);
        }
        nonlinear(pred, n2v);
        for (std::size_t i = 0; i < n2; ++i) {
            const double e = std::exp(-opt_.viscosity * k2_[i] * dt);
            w_hat[i] = e * (w_hat[i] + 0.5 * dt * n1[i]) + 0.5 * dt * n2v[i];
        }
    }

    dft2(w_hat, opt_.side, true);
    for (std::size_t i = 0; i < n2; ++i) w[i] = w_hat[i].real();
}

void NsSolver::advance(std::span<double> w, std::size_t count) const {
    for (std::size_t s = 0; s < count; ++s) step(w);
}

double NsSolver::divergence_norm(std::span<const double> w) const {
    const std::size_t n2 = opt_.side * opt_.side;
    if (w.size() != n2) throw ShapeError("NS state must have side*side values");
    std::vector<cplx> w_hat(n2);
    for (std::size_t i = 0; i < n2; ++i) w_hat[i] = w[i];
    dft2(w_hat, opt_.side, false);
    const cplx I(0.0, 1.0);
    const double norm = 1.0 / static_cast<double>(n2);
    double acc = 0.0;
    for (std::size_t idx = 0; idx < n2; ++idx) {
        const cplx psi = k2_[idx] > 0.0 ? w_hat[idx] * norm / k2_[idx] : cplx(0.0, 0.0);
        const cplx u = I * ky_[idx] * psi;
        const cplx v = -I * kx_[idx] * psi;
        acc += std::norm(I * kx_[idx] * u + I * ky_[idx] * v);
    }
    return std::sqrt(acc);
}

}  // namespace fnsda
