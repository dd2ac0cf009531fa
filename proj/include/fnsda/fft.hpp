#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace fnsda::dft {

using cplx = std::complex<double>;

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 transform. Forward uses exp(-2*pi*i*k*n/N),
/// inverse uses exp(+2*pi*i*k*n/N). Neither direction is normalized.
/// Throws ConfigError when the length is not a power of two.
void transform(std::span<cplx> data, bool inverse);

}  // namespace fnsda::dft
