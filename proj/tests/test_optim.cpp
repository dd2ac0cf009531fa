#include <cmath>

#include "doctest.h"
#include "fnsda/errors.hpp"
#include "fnsda/optim.hpp"

using namespace fnsda;

namespace {

Tensor leaf(std::vector<double> v) {
    const std::size_t n = v.size();
    Tensor t({n}, std::move(v));
    t.set_requires_grad(true);
    return t;
}

// Sets the gradient of x to g through a linear loss.
void set_grad(Tensor& x, const std::vector<double>& g) {
    x.zero_grad();
    backward(sum(mul(x, Tensor({g.size()}, g))));
}

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("first Adam step moves each entry by lr against its gradient sign") {
    std::vector<Tensor> params{leaf({1.0, -2.0, 0.5})};
    set_grad(params[0], {0.3, -4.0, 1e-3});
    AdamState s = adam_init(params, {});
    adam_step(s, params, 0.1);
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    const double eps = 1e-8;
    CHECK(params[0].at(0) == doctest::Approx(1.0 - 0.1 * 0.3 / (0.3 + eps)).epsilon(1e-14));
    CHECK(params[0].at(1) == doctest::Approx(-2.0 + 0.1 * 4.0 / (4.0 + eps)).epsilon(1e-14));
    CHECK(params[0].at(2) == doctest::Approx(0.5 - 0.1 * 1e-3 / (1e-3 + eps)).epsilon(1e-14));
    CHECK(s.t == 1);
}

TEST_CASE("second Adam step matches a hand recursion") {
    std::vector<Tensor> params{leaf({0.0})};
    AdamState s = adam_init(params, {});
    double m = 0.0, v = 0.0, x = 0.0;
    const double grads[2] = {1.0, -0.5};
    for (int t = 1; t <= 2; ++t) {
        set_grad(params[0], {grads[t - 1]});
        adam_step(s, params, 0.01);
        m = 0.9 * m + 0.1 * grads[t - 1];
        v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
        x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
    CHECK(params[0].at(0) == doctest::Approx(x).epsilon(1e-14));
}

TEST_CASE("zero gradient leaves parameters unchanged without decay") {
    std::vector<Tensor> params{leaf({1.0, 2.0})};
    set_grad(params[0], {0.0, 0.0});
    AdamState s = adam_init(params, {});
    adam_step(s, params, 1.0);
    CHECK(params[0].at(0) == 1.0);
    CHECK(params[0].at(1) == 2.0);
}

TEST_CASE("decoupled weight decay shrinks before the update") {
    std::vector<Tensor> params{leaf({2.0})};
    set_grad(params[0], {0.0});
    AdamOptions o;
    o.weight_decay = 0.1;
    AdamState s = adam_init(params, o);
    adam_step(s, params, 0.5);
    CHECK(params[0].at(0) == doctest::Approx(2.0 * (1.0 - 0.05)).epsilon(1e-15));
}

TEST_CASE("global clipping rescales the gradient norm") {
    std::vector<Tensor> a{leaf({0.0, 0.0})}, b{leaf({0.0, 0.0})};
    set_grad(a[0], {3.0, 4.0});
    set_grad(b[0], {0.6, 0.8});
    AdamOptions clip;
    clip.clip_norm = 1.0;
    clip.beta2 = 0.5;
    AdamOptions plain;
    plain.beta2 = 0.5;
    AdamState sa = adam_init(a, clip), sb = adam_init(b, plain);
    // Two steps with fixed gradients; the clipped run must match the run fed
    // the unit-norm gradient directly.
    for (int i = 0; i < 2; ++i) {
        adam_step(sa, a, 0.1);
        adam_step(sb, b, 0.1);
    }
    CHECK(a[0].at(0) == doctest::Approx(b[0].at(0)).epsilon(1e-14));
    CHECK(a[0].at(1) == doctest::Approx(b[0].at(1)).epsilon(1e-14));
}

TEST_CASE("mismatched state is rejected") {
    std::vector<Tensor> params{leaf({1.0})};
    AdamState s = adam_init(params, {});
    std::vector<Tensor> other{leaf({1.0, 2.0})};
    CHECK_THROWS_AS(adam_step(s, other, 0.1), ShapeError);
    other.push_back(leaf({0.0}));
    CHECK_THROWS_AS(adam_step(s, other, 0.1), ShapeError);
}

TEST_CASE("schedule endpoints and midpoint") {
    const LrSchedule s{1e-2, 10, 110, 1e-4};
    CHECK(lr_at(s, 0) == 0.0);
    CHECK(lr_at(s, 5) == doctest::Approx(5e-3));
    CHECK(lr_at(s, 10) == doctest::Approx(1e-2).epsilon(1e-15));
    CHECK(lr_at(s, 60) == doctest::Approx(0.5 * (1e-2 + 1e-4)).epsilon(1e-14));
    CHECK(lr_at(s, 110) == doctest::Approx(1e-4).epsilon(1e-14));
    const LrSchedule flat{3e-3, 0, 5, 0.0};
    CHECK(lr_at(flat, 0) == 3e-3);
}

TEST_CASE("schedule is continuous and non-increasing after warmup") {
    const LrSchedule s{1.0, 50, 1000, 0.0};
    double prev = lr_at(s, 50);
    for (std::size_t k = 51; k <= 1000; ++k) {
        const double cur = lr_at(s, k);
        CHECK(cur <= prev);
        CHECK(prev - cur < 0.01);
        prev = cur;
    }
    CHECK(std::fabs(lr_at(s, 49) - lr_at(s, 50)) < 0.03);
}

TEST_CASE("schedule errors") {
    CHECK_THROWS_AS(lr_at({1.0, 10, 5, 0.0}, 0), ConfigError);
    CHECK_THROWS_AS(lr_at({1.0, 0, 5, 0.0}, 6), UsageError);
    CHECK(lr_at({1.0, 5, 5, 0.0}, 5) == 1.0);
}

}  // TEST_SUITE
