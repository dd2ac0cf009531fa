#include "fnsda/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "fnsda/fft.hpp"
#include "fnsda/rng.hpp"

namespace fnsda {

GradCheckReport finite_diff_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double h,
                                  double tol, const GradCheckExclude& exclude) {
    std::vector<Tensor> ps = params;
    for (auto& p : ps) p.zero_grad();
    backward(f());
    std::vector<std::vector<double>> analytic;
    for (const auto& p : ps) analytic.emplace_back(p.grad().begin(), p.grad().end());

    GradCheckReport report;
    NoGradGuard no_grad;
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        auto values = ps[pi].mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (exclude && exclude(pi, i)) {
                ++report.excluded;
                continue;
            }
            const double saved = values[i];
            values[i] = saved + h;
            const double fp = f().item();
            values[i] = saved - h;
            const double fm = f().item();
            values[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[pi][i];
            const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-3});
            report.max_rel_error = std::max(report.max_rel_error, rel);
            ++report.checked;
            if (!(rel <= tol)) {
                std::ostringstream os;
                os << "param " << pi << "[" << i << "]: analytic " << a << " vs numeric " << numeric;
                report.failures.push_back(os.str());
            }
        }
    }
    return report;
}

namespace {

std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

Tensor random_param(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    const std::size_t n = shape_numel(shape);
    return Tensor::parameter(std::move(shape), random_values(rng, n, lo, hi));
}

/// Random linear functional so every output coordinate carries weight.
Tensor probe(Rng& rng, const Tensor& out) {
    Tensor w(out.shape(), random_values(rng, out.size()));
    return sum(mul(out, w));
}

Tensor probe(Rng& rng, const ComplexTensor& out) { return add(probe(rng, out.re), probe(rng, out.im)); }

/// Excludes coordinates of parameter 0 within `margin` of any listed kink.
GradCheckExclude near_kinks(const Tensor& x, std::vector<double> kinks, double margin = 1e-3) {
    return [x, kinks = std::move(kinks), margin](std::size_t param, std::size_t i) {
        if (param != 0) return false;
        const double v = x.values()[i];
        return std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::fabs(v - k) < margin; });
    };
}

GradCheckReport scalar_report(double error, double tol, const std::string& what) {
    GradCheckReport r;
    r.max_rel_error = error;
    r.checked = 1;
    if (!(error <= tol)) r.failures.push_back(what + " error " + std::to_string(error));
    return r;
}

}  // namespace

std::vector<NamedCheck> engine_self_test(std::uint64_t seed, double tol) {
    Rng rng(seed);
    std::vector<NamedCheck> out;
    auto check = [&](const std::string& name, const std::vector<Tensor>& params, auto build,
                     const GradCheckExclude& exclude = {}) {
        const std::uint64_t probe_seed = rng.below(1u << 30);
        auto f = [&, probe_seed]() {
            Rng r(probe_seed);
            return build(r);
        };
        out.push_back({name, finite_diff_check(f, params, 1e-6, tol, exclude)});
    };

    {
        Tensor a = random_param(rng, {3, 4}), b = random_param(rng, {3, 4}), s = random_param(rng, {1});
        check("add", {a, b, s}, [&](Rng& r) { return add(probe(r, add(a, b)), probe(r, add(a, s))); });
        check("sub", {a, b, s}, [&](Rng& r) { return add(probe(r, sub(a, b)), probe(r, sub(s, a))); });
        check("mul", {a, b, s}, [&](Rng& r) { return add(probe(r, mul(a, b)), probe(r, mul(a, s))); });
        check("affine", {a}, [&](Rng& r) { return probe(r, affine(a, -1.7, 0.3)); });
        check("square", {a}, [&](Rng& r) { return probe(r, square(a)); });
        check("sum", {a}, [&](Rng& r) { return mul(sum(a), Tensor::scalar(r.uniform())); });
        check("mean", {a}, [&](Rng& r) { return mul(mean(a), Tensor::scalar(r.uniform())); });
    }
    {
        Tensor x = random_param(rng, {5, 3}, -4.0, 4.0);
        check("clamp", {x}, [&](Rng& r) { return probe(r, clamp(x, -1.0, 2.0)); }, near_kinks(x, {-1.0, 2.0}));
        check("abs", {x}, [&](Rng& r) { return probe(r, abs(x)); }, near_kinks(x, {0.0}));
        check("sigmoid", {x}, [&](Rng& r) { return probe(r, sigmoid(x)); });
        check("hard_sigmoid", {x}, [&](Rng& r) { return probe(r, hard_sigmoid(x)); }, near_kinks(x, {-3.0, 3.0}));
        check("relu", {x}, [&](Rng& r) { return probe(r, relu(x)); }, near_kinks(x, {0.0}));
        Tensor beta = Tensor::parameter({1}, {0.8});
        check("swish", {x, beta}, [&](Rng& r) { return probe(r, swish(x, beta)); });
    }
    {
        Tensor a = random_param(rng, {3, 4}), b = random_param(rng, {4, 2});
        check("matmul", {a, b}, [&](Rng& r) { return probe(r, matmul(a, b)); });
        Tensor x = random_param(rng, {2, 3, 4}), w = random_param(rng, {5, 4}), bias = random_param(rng, {5});
        check("linear", {x, w, bias}, [&](Rng& r) { return probe(r, linear(x, w, bias)); });
        Tensor c1 = random_param(rng, {2, 3, 4}), c2 = random_param(rng, {3, 4, 2});
        check("contract", {c1, c2}, [&](Rng& r) { return probe(r, contract(c1, c2, 2)); });
    }
    {
        Tensor x = random_param(rng, {2, 3, 4});
        check("reshape", {x}, [&](Rng& r) { return probe(r, reshape(x, {6, 4})); });
        check("permute", {x}, [&](Rng& r) { return probe(r, permute(x, {2, 0, 1})); });
        check("take", {x}, [&](Rng& r) { return probe(r, take(x, 1, {2, 0, 2})); });
        check("put", {x}, [&](Rng& r) { return probe(r, put(x, 1, {4, 0, 2}, 6)); });
        Tensor y = random_param(rng, {2, 2, 4});
        check("concat", {x, y}, [&](Rng& r) { return probe(r, concat(x, y, 1)); });
        Tensor v = random_param(rng, {3});
        check("mul_axis", {x, v}, [&](Rng& r) { return probe(r, mul_axis(x, v, 1)); });
    }
    {
        Tensor x = random_param(rng, {3, 8, 2});
        check("rfft", {x}, [&](Rng& r) { return probe(r, rfft(x, 1)); });
        Tensor xr = random_param(rng, {3, 5, 2}), xi = random_param(rng, {3, 5, 2});
        check("irfft", {xr, xi}, [&](Rng& r) { return probe(r, irfft({xr, xi}, 1, 8)); });
        Tensor cr = random_param(rng, {4, 3}), ci = random_param(rng, {4, 3});
        check("fft", {cr, ci}, [&](Rng& r) { return probe(r, fft({cr, ci}, 0)); });
        check("ifft", {cr, ci}, [&](Rng& r) { return probe(r, ifft({cr, ci}, 0)); });
        Tensor g = random_param(rng, {2, 4, 8});
        check("fft_2d", {g}, [&](Rng& r) { return probe(r, fft_2d(g, 1, 2)); });
        Tensor hr = random_param(rng, {2, 4, 5}), hi = random_param(rng, {2, 4, 5});
        check("ifft_2d", {hr, hi}, [&](Rng& r) { return probe(r, ifft_2d({hr, hi}, 1, 2, 8)); });
        Tensor wr = random_param(rng, {3, 2, 4}), wi = random_param(rng, {3, 2, 4});
        Tensor mr = random_param(rng, {2, 3, 4}), mi = random_param(rng, {2, 3, 4});
        check("complex_mode_mul", {wr, wi, mr, mi},
              [&](Rng& r) { return probe(r, complex_mode_mul({wr, wi}, {mr, mi})); });
    }

    double roundtrip = 0.0, parseval = 0.0;
    for (std::size_t n = 2; n <= 64; n *= 2) {
        std::vector<dft::cplx> x(n);
        for (auto& v : x) v = dft::cplx(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        auto y = x;
        dft::transform(y, false);
        double ex = 0.0, ey = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ex += std::norm(x[i]);
            ey += std::norm(y[i]);
        }
        parseval = std::max(parseval, std::fabs(ex - ey / static_cast<double>(n)) / ex);
        dft::transform(y, true);
        for (std::size_t i = 0; i < n; ++i) roundtrip = std::max(roundtrip, std::abs(y[i] / static_cast<double>(n) - x[i]));
    }
    out.push_back({"fft_roundtrip", scalar_report(roundtrip, 1e-10, "roundtrip")});
    out.push_back({"fft_parseval", scalar_report(parseval, 1e-10, "parseval")});
    return out;
}

}  // namespace fnsda
