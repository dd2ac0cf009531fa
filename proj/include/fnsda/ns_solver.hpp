#pragma once

// Pseudo-spectral vorticity solver on the periodic unit square.
//
// Wavenumbers are 2*pi*n. The streamfunction solves -lap(psi) = w, velocity
// is (d psi/dy, -d psi/dx). Advection is evaluated in physical space and
// dealiased with the 2/3 rule; advection and forcing use a Heun
// predictor-corrector, viscosity is Crank-Nicolson or an exact integrating
// factor.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace fnsda {

enum class ViscousScheme { crank_nicolson, exact };

struct NsOptions {
    std::size_t side = 32;
    double viscosity = 1e-3;
    double dt_internal = 1e-2;
    /// Largest accepted dt_internal.
    double max_dt = 5e-2;
    ViscousScheme viscous = ViscousScheme::crank_nicolson;
    bool advection = true;
    bool forcing = true;
};

/// 0.1 (sin(2 pi (x + y)) + cos(2 pi (x + y))) on x, y = i / side.
std::vector<double> ns_default_forcing(std::size_t side);

class NsSolver {
public:
    /// ConfigError when dt_internal exceeds max_dt or side is not a power of two.
    NsSolver(const NsOptions& options, std::vector<double> forcing);

    /// One internal step of a side*side vorticity field, in place.
    void step(std::span<double> w) const;
    /// `count` internal steps.
    void advance(std::span<double> w, std::size_t count) const;

    /// L2 norm of the spectral divergence of the velocity recovered from w,
    /// using normalized coefficients.
    double divergence_norm(std::span<const double> w) const;

    const NsOptions& options() const { return opt_; }

private:
    using cplx = std::complex<double>;
    void nonlinear(const std::vector<cplx>& w_hat, std::vector<cplx>& out) const;

    NsOptions opt_;
    std::vector<cplx> forcing_hat_;
    std::vector<double> kx_, ky_, k2_;
    std::vector<bool> keep_;
};

/// 2-D DFT of a side*side row-major array; the inverse applies 1/side^2.
void dft2(std::span<std::complex<double>> data, std::size_t side, bool inverse);

}  // namespace fnsda
