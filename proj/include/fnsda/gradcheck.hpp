#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fnsda/tensor.hpp"

namespace fnsda {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t excluded = 0;
    /// "param[i]: analytic a vs numeric n" for every coordinate above tol.
    std::vector<std::string> failures;
    bool passed() const { return failures.empty(); }
};

/// Returns true to skip coordinate `index` of parameter `param`.
using GradCheckExclude = std::function<bool(std::size_t param, std::size_t index)>;

/// Compares reverse-mode gradients of the scalar f() with central differences
/// for every coordinate of every parameter. Parameters must be leaves.
/// Relative error is |a - n| / max(|a|, |n|, 1e-3).
GradCheckReport finite_diff_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                                  double h = 1e-6, double tol = 1e-4, const GradCheckExclude& exclude = {});

struct NamedCheck {
    std::string name;
    GradCheckReport report;
};

/// Gradient checks over every differentiable engine op on random shapes,
/// plus FFT roundtrip and Parseval checks reported as single-entry reports.
std::vector<NamedCheck> engine_self_test(std::uint64_t seed, double tol = 1e-4);

}  // namespace fnsda
