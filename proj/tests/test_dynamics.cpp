#include <cmath>
#include <complex>
#include <numbers>
#include <set>

#include "doctest.h"
#include "fnsda/binary_io.hpp"
#include "fnsda/dataset_io.hpp"
#include "fnsda/dynamics.hpp"
#include "fnsda/errors.hpp"
#include "fnsda/ns_solver.hpp"
#include "oracles.hpp"

using namespace fnsda;

namespace {

constexpr double kPi = std::numbers::pi;

DynamicsSettings small_settings(Family f, std::size_t n_tr = 2, std::size_t n_ev = 2) {
    DynamicsSettings d = default_dynamics_settings(f);
    d.n_tr = n_tr;
    d.n_ev = n_ev;
    return d;
}

/// Empirical order from errors at h and h/2.
template <class Step>
double empirical_order(Step step, double h) {
    auto err = [&](double dt) {
        double u = 1.0;
        const int n = static_cast<int>(std::lround(1.0 / dt));
        for (int i = 0; i < n; ++i) u = step(u, dt);
        return std::fabs(u - std::exp(1.0));
    };
    return std::log2(err(h) / err(h / 2.0));
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("Lotka-Volterra right-hand side") {
    const LvParams p{0.5, 0.75, 0.5, 1.0};
    std::vector<double> out(2);
    lv_rhs(std::vector<double>{2.0, 3.0}, p, out);
    CHECK(out[0] == doctest::Approx(0.5 * 2.0 - 0.75 * 6.0));
    CHECK(out[1] == doctest::Approx(1.0 * 6.0 - 0.5 * 3.0));
    LvParams printed = p;
    printed.printed_variant = true;
    lv_rhs(std::vector<double>{2.0, 3.0}, printed, out);
    CHECK(out[1] == doctest::Approx(1.0 * 2.0 - 0.5 * 6.0));
}

TEST_CASE("glycolytic right-hand side against the written-out system") {
    const GoParams p{2.5, 100.0, 6.0, 16.0, 100.0, 1.28, 12.0, 0.75, 4.0, 1.0, 4.0, 13.0, 0.1, 1.8};
    const std::vector<double> s{1.1, 0.9, 0.1, 0.2, 0.15, 1.3, 0.07};
    std::vector<double> out(7);
    go_rhs(s, p, out);
    const double inh = 100.0 * 1.1 * 1.3 / (1.0 + std::pow(1.0 / 0.75, 4.0) * std::pow(1.3, 4.0));
    const double r2 = 6.0 * 0.9 * (1.0 - 0.15), r3 = 16.0 * 0.1 * (4.0 - 1.3), r4 = 100.0 * 0.2 * 0.15;
    const double r6 = 12.0 * 0.9 * 0.15, ex = 13.0 * (0.2 - 0.07);
    const std::vector<double> ref{2.5 - inh,          2.0 * inh - r2 - r6, r2 - r3, r3 - r4 - ex, r2 - r4 - r6,
                                  -2.0 * inh + 2.0 * r3 - 1.28 * 1.3, 0.1 * ex - 1.8 * 0.07};
    for (std::size_t i = 0; i < 7; ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-13));
}

TEST_CASE("Gray-Scott Laplacian is exact on a discrete Fourier mode") {
    const std::size_t n = 32;
    const GsParams p{0.0, 0.0, 1.0, 0.0, n, 2.0};
    std::vector<double> s(2 * n * n, 0.0), out(2 * n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) s[i * n + j] = std::cos(2.0 * kPi * 3.0 * static_cast<double>(j) / n);
    gs_rhs(s, p, out);
    const double eig = (2.0 * std::cos(2.0 * kPi * 3.0 / n) - 2.0) / 4.0;
    for (std::size_t c = 0; c < n * n; ++c) CHECK(out[c] == doctest::Approx(eig * s[c]).epsilon(1e-12));
}

TEST_CASE("Gray-Scott reaction terms at a uniform state") {
    const std::size_t n = 32;
    const GsParams p{0.03, 0.06, 0.2, 0.1, n, 2.0};
    std::vector<double> s(2 * n * n), out(2 * n * n);
    std::fill(s.begin(), s.begin() + n * n, 0.6);
    std::fill(s.begin() + n * n, s.end(), 0.3);
    gs_rhs(s, p, out);
    CHECK(out[5] == doctest::Approx(-0.6 * 0.09 + 0.03 * 0.4));
    CHECK(out[n * n + 5] == doctest::Approx(0.6 * 0.09 - 0.09 * 0.3));
}

TEST_CASE("right-hand sides reject non-finite input") {
    std::vector<double> out(2);
    CHECK_THROWS_AS(lv_rhs(std::vector<double>{NAN, 1.0}, LvParams{1, 1, 1, 1}, out), DomainError);
}

TEST_CASE("RK4 is fourth and Euler first order on u' = u") {
    const Rhs f = [](std::span<const double> u, std::span<double> out) { out[0] = u[0]; };
    auto rk4 = [&](double u, double h) { return rk4_step(f, std::vector<double>{u}, h)[0]; };
    auto euler = [&](double u, double h) { return euler_step(f, std::vector<double>{u}, h)[0]; };
    CHECK(empirical_order(rk4, 0.1) >= 3.8);
    CHECK(empirical_order(euler, 0.01) >= 0.9);
    CHECK(rk4(1.0, 0.1) == doctest::Approx(oracle::rk4([](double u) { return u; }, 1.0, 0.1)).epsilon(1e-15));
}

TEST_CASE("integration failures carry the time") {
    const Rhs f = [](std::span<const double> u, std::span<double> out) { out[0] = u[0] * u[0]; };
    std::vector<double> u{1e200};
    try {
        rk4_step(f, u, 1.0, 7.5);
        FAIL("expected an IntegrationError");
    } catch (const IntegrationError& e) {
        CHECK(e.time >= 7.5);
    }
}

TEST_CASE("NS pure diffusion decays a single mode at exp(-nu |k|^2 t)") {
    for (auto scheme : {ViscousScheme::crank_nicolson, ViscousScheme::exact}) {
        NsOptions opt;
        opt.viscosity = 1e-3;
        opt.dt_internal = 0.01;
        opt.viscous = scheme;
        opt.forcing = false;
        const NsSolver solver(opt, std::vector<double>(32 * 32, 0.0));
        std::vector<double> w(32 * 32);
        for (std::size_t i = 0; i < 32; ++i)
            for (std::size_t j = 0; j < 32; ++j) w[i * 32 + j] = std::sin(2.0 * kPi * 2.0 * static_cast<double>(i) / 32.0);
        const auto w0 = w;
        solver.advance(w, 100);  // one recorded frame at dt = 1
        const double decay = std::exp(-1e-3 * 4.0 * kPi * kPi * 4.0 * 1.0);
        double err = 0.0;
        for (std::size_t c = 0; c < w.size(); ++c) err = std::max(err, std::fabs(w[c] - decay * w0[c]));
        CHECK(err < 1e-6);
    }
}

TEST_CASE("NS velocity is divergence-free") {
    Rng rng(4);
    const auto w = sample_initial_condition(Family::NS, rng, InitialConditionSettings{}, 32);
    const NsSolver solver(NsOptions{}, ns_default_forcing(32));
    CHECK(solver.divergence_norm(w) < 1e-12);
}

TEST_CASE("NS solver enforces its stability bound") {
    NsOptions opt;
    opt.dt_internal = 0.1;
    CHECK_THROWS_AS(NsSolver(opt, ns_default_forcing(32)), ConfigError);
}

TEST_CASE("NS initial condition has zero mean") {
    Rng rng(9);
    const auto w = sample_initial_condition(Family::NS, rng, InitialConditionSettings{}, 32);
    double mean = 0.0;
    for (double v : w) mean += v;
    CHECK(std::fabs(mean / w.size()) < 1e-12);
}

TEST_CASE("initial conditions respect their ranges") {
    Rng rng(1);
    const InitialConditionSettings ic;
    for (int t = 0; t < 50; ++t) {
        const auto lv = sample_initial_condition(Family::LV, rng, ic);
        for (double v : lv) CHECK((v >= 1.0 && v <= 3.0));
        const auto go = sample_initial_condition(Family::GO, rng, ic);
        for (std::size_t i = 0; i < 7; ++i) CHECK((go[i] >= ic.go_ranges[i].first && go[i] <= ic.go_ranges[i].second));
    }
}

TEST_CASE("environment grids") {
    const auto lv = default_environment_set(Family::LV);
    CHECK(lv.train_envs.size() == 9);
    CHECK(lv.eval_envs.size() == 4);
    CHECK(default_environment_set(Family::GO).train_envs.size() == 9);
    CHECK(default_environment_set(Family::GS).train_envs.size() == 4);
    CHECK(default_environment_set(Family::NS).train_envs.size() == 5);
    CHECK(default_environment_set(Family::NS).eval_envs.size() == 4);
    std::set<std::pair<double, double>> test;
    for (const auto& e : lv.eval_envs) test.insert({e.param("beta"), e.param("delta")});
    CHECK(test == std::set<std::pair<double, double>>{{0.625, 0.625}, {0.625, 1.125}, {1.125, 0.625}, {1.125, 1.125}});
}

TEST_CASE("horizons in frames") {
    const auto lv = default_environment_set(Family::LV).eval_envs[0];
    CHECK(lv.n_steps() == 40);
    CHECK(lv.n_steps() - lv.adapt_steps() == 30);
    const auto gs = default_environment_set(Family::GS).eval_envs[0];
    CHECK(gs.n_steps() - gs.adapt_steps() == 8);
    const auto go = default_environment_set(Family::GO).eval_envs[0];
    CHECK(go.n_steps() == 40);
    CHECK(go.adapt_steps() == 10);
    const auto ns = default_environment_set(Family::NS).eval_envs[0];
    CHECK(ns.n_steps() == 10);
    CHECK(ns.adapt_steps() == 2);
}

TEST_CASE("overlapping train and eval environments are rejected") {
    DynamicsSettings d = small_settings(Family::LV);
    d.eval_values = {{0.5}, {0.5}};
    CHECK_THROWS_AS(make_environment_set(d), ConfigError);
}

TEST_CASE("dataset generation is deterministic across thread counts") {
    const auto envs = make_environment_set(small_settings(Family::LV));
    const auto a = encode_dataset(generate_dataset(envs, 5, 1));
    const auto b = encode_dataset(generate_dataset(envs, 5, 3));
    CHECK(a == b);
    const auto c = encode_dataset(generate_dataset(envs, 6, 1));
    CHECK(a != c);
}

TEST_CASE("dataset layout") {
    const auto envs = make_environment_set(small_settings(Family::LV, 3, 2));
    const auto d = generate_dataset(envs, 2, 1);
    REQUIRE(d.train.size() == 9);
    REQUIRE(d.eval.size() == 4);
    CHECK(d.train[0].size() == 3);
    CHECK(d.eval[0].size() == 3);  // 1 + n_ev
    CHECK(d.train[0][0].n_frames() == 41);
    std::set<std::uint64_t> seeds;
    for (const auto& env : d.train)
        for (const auto& t : env) seeds.insert(t.seed);
    CHECK(seeds.size() == 27);
}

TEST_CASE("recorded frames follow the generator") {
    const auto envs = make_environment_set(small_settings(Family::LV, 1, 1));
    const auto d = generate_dataset(envs, 3, 1);
    const Trajectory& t = d.train[4][0];
    const SystemSpec& spec = envs.train_envs[4];
    const Rhs f = make_rhs(spec);
    std::vector<double> u(t.frame(0).begin(), t.frame(0).end());
    for (std::size_t s = 0; s < spec.substeps; ++s) u = rk4_step(f, u, spec.dt / spec.substeps);
    CHECK(u[0] == doctest::Approx(t.frame(1)[0]).epsilon(1e-14));
    CHECK(u[1] == doctest::Approx(t.frame(1)[1]).epsilon(1e-14));
}

TEST_CASE("dataset files round-trip and detect corruption") {
    const auto envs = make_environment_set(small_settings(Family::GS, 1, 1));
    const auto d = generate_dataset(envs, 1, 1);
    auto bytes = encode_dataset(d);
    const auto back = decode_dataset(bytes);
    CHECK(encode_dataset(back) == bytes);
    CHECK(back.environments.eval_envs.size() == envs.eval_envs.size());
    CHECK(back.train[1][0].states == d.train[1][0].states);
    bytes[bytes.size() / 2] ^= 0x01;
    CHECK_THROWS_AS(decode_dataset(bytes), FormatError);
    bytes.resize(10);
    CHECK_THROWS_AS(decode_dataset(bytes), FormatError);
}

}  // TEST_SUITE
