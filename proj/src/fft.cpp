#include "fnsda/fft.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "fnsda/errors.hpp"

namespace fnsda::dft {

namespace {

// exp(-2*pi*i*k/n) for k < n/2, one table per length and thread.
const std::vector<cplx>& forward_twiddles(std::size_t n) {
    thread_local std::map<std::size_t, std::vector<cplx>> cache;
    auto [it, inserted] = cache.try_emplace(n);
    if (inserted) {
        it->second.resize(n / 2);
        for (std::size_t k = 0; k < n / 2; ++k) {
            const double theta = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
            it->second[k] = cplx(std::cos(theta), std::sin(theta));
        }
    }
    return it->second;
}

}  // namespace

void transform(std::span<cplx> data, bool inverse) {
    const std::size_t n = data.size();
    if (!is_power_of_two(n)) {
        throw ConfigError("FFT length must be a power of two, got " + std::to_string(n));
    }
    if (n == 1) return;

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }

    const auto& table = forward_twiddles(n);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = n / len;
        for (std::size_t k = 0; k < half; ++k) {
            const cplx w = inverse ? std::conj(table[k * stride]) : table[k * stride];
            for (std::size_t start = 0; start < n; start += len) {
                const cplx u = data[start + k];
                const cplx a = data[start + k + half];
                const cplx v(a.real() * w.real() - a.imag() * w.imag(),
                             a.real() * w.imag() + a.imag() * w.real());
                data[start + k] = u + v;
                data[start + k + half] = u - v;
            }
        }
    }
}

}  // namespace fnsda::dft
