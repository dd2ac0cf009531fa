#include "fnsda/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <complex>
#include <exception>
#include <numbers>
#include <thread>

#include "fnsda/errors.hpp"
#include "fnsda/ns_solver.hpp"

namespace fnsda {

std::string family_name(Family f) {
    switch (f) {
        case Family::LV: return "lv";
        case Family::GO: return "go";
        case Family::GS: return "gs";
        case Family::NS: return "ns";
    }
    return "?";
}

Family parse_family(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "lv") return Family::LV;
    if (s == "go") return Family::GO;
    if (s == "gs") return Family::GS;
    if (s == "ns") return Family::NS;
    throw ConfigError("unknown family '" + name + "' (expected lv, go, gs or ns)");
}

bool is_spatial(Family f) { return f == Family::GS || f == Family::NS; }

double SystemSpec::param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("missing parameter '" + name + "' for family " + family_name(family));
    return it->second;
}

std::size_t SystemSpec::n_steps() const { return static_cast<std::size_t>(std::llround(horizon_T / dt)); }
std::size_t SystemSpec::adapt_steps() const { return static_cast<std::size_t>(std::llround(adapt_horizon_Tad / dt)); }

void SystemSpec::validate() const {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(adapt_horizon_Tad < horizon_T)) throw ConfigError("adapt horizon must be shorter than the horizon");
    const double ratio = horizon_T / dt;
    if (std::fabs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio)) {
        throw ConfigError("horizon_T must be an integer multiple of dt");
    }
    const double ad = adapt_horizon_Tad / dt;
    if (std::fabs(ad - std::round(ad)) > 1e-9 * std::max(1.0, ad)) {
        throw ConfigError("adapt_horizon_Tad must be an integer multiple of dt");
    }
    if (substeps == 0) throw ConfigError("substeps must be positive");
    if (is_spatial(family)) {
        if (!grid || grid->side != 32) throw ConfigError(family_name(family) + " requires a 32x32 grid");
        if (!(grid->spacing > 0.0)) throw ConfigError("grid spacing must be positive");
    } else if (grid) {
        throw ConfigError(family_name(family) + " takes no spatial grid");
    }
}

Shape state_shape(Family f, std::size_t side) {
    switch (f) {
        case Family::LV: return {2};
        case Family::GO: return {7};
        case Family::GS: return {2, side, side};
        case Family::NS: return {1, side, side};
    }
    return {};
}

Shape state_shape(const SystemSpec& spec) { return state_shape(spec.family, spec.grid ? spec.grid->side : 32); }

// ---------------------------------------------------------------------------

namespace {

void require_finite(std::span<const double> x, const char* what) {
    for (double v : x)
        if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite state");
}

void require_size(std::span<const double> x, std::span<double> out, std::size_t n, const char* what) {
    if (x.size() != n || out.size() != n) {
        throw ShapeError(std::string(what) + ": expected state of size " + std::to_string(n) + ", got " +
                         std::to_string(x.size()));
    }
}

double get(const ParamMap& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw ConfigError("missing parameter '" + name + "'");
    return it->second;
}

double get_or(const ParamMap& p, const std::string& name, double fallback) {
    auto it = p.find(name);
    return it == p.end() ? fallback : it->second;
}

bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

LvParams lv_params(const ParamMap& p) {
    return {get(p, "alpha"), get(p, "beta"), get(p, "gamma"), get(p, "delta"), get_or(p, "lv_variant", 0.0) != 0.0};
}

GoParams go_params(const ParamMap& p) {
    return {get(p, "J0"), get(p, "k1"), get(p, "k2"), get(p, "k3"),    get(p, "k4"),  get(p, "k5"), get(p, "k6"),
            get(p, "K1"), get(p, "q"),  get(p, "N"),  get(p, "A"),     get(p, "kappa"), get(p, "psi"), get(p, "k")};
}

GsParams gs_params(const ParamMap& p, const Grid& grid) {
    return {get(p, "F"), get(p, "k"), get(p, "Du"), get(p, "Dv"), grid.side, grid.spacing};
}

void lv_rhs(std::span<const double> s, const LvParams& p, std::span<double> out) {
    require_size(s, out, 2, "lv_rhs");
    require_finite(s, "lv_rhs");
    const double x = s[0], y = s[1];
    out[0] = p.alpha * x - p.beta * x * y;
    out[1] = p.printed_variant ? p.delta * x - p.gamma * x * y : p.delta * x * y - p.gamma * y;
}

void go_rhs(std::span<const double> s, const GoParams& p, std::span<double> out) {
    require_size(s, out, 7, "go_rhs");
    require_finite(s, "go_rhs");
    const double S1 = s[0], S2 = s[1], S3 = s[2], S4 = s[3], S5 = s[4], S6 = s[5], S7 = s[6];
    const double inhibition = p.k1 * S1 * S6 / (1.0 + std::pow(S6 / p.K1, p.q));
    const double r2 = p.k2 * S2 * (p.N - S5);
    const double r3 = p.k3 * S3 * (p.A - S6);
    const double r4 = p.k4 * S4 * S5;
    const double r6 = p.k6 * S2 * S5;
    const double exchange = p.kappa * (S4 - S7);
    out[0] = p.J0 - inhibition;
    out[1] = 2.0 * inhibition - r2 - r6;
    out[2] = r2 - r3;
    out[3] = r3 - r4 - exchange;
    out[4] = r2 - r4 - r6;
    out[5] = -2.0 * inhibition + 2.0 * r3 - p.k5 * S6;
    out[6] = p.psi * exchange - p.k * S7;
}

void gs_rhs(std::span<const double> s, const GsParams& p, std::span<double> out) {
    const std::size_t n = p.side;
    const std::size_t plane = n * n;
    require_size(s, out, 2 * plane, "gs_rhs");
    require_finite(s, "gs_rhs");
    const double inv_h2 = 1.0 / (p.spacing * p.spacing);
    const double* u = s.data();
    const double* v = s.data() + plane;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t up = ((i + n - 1) % n) * n, down = ((i + 1) % n) * n, row = i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t left = (j + n - 1) % n, right = (j + 1) % n;
            const std::size_t c = row + j;
            const double lap_u = (u[up + j] + u[down + j] + u[row + left] + u[row + right] - 4.0 * u[c]) * inv_h2;
            const double lap_v = (v[up + j] + v[down + j] + v[row + left] + v[row + right] - 4.0 * v[c]) * inv_h2;
            const double uvv = u[c] * v[c] * v[c];
            out[c] = p.Du * lap_u - uvv + p.F * (1.0 - u[c]);
            out[plane + c] = p.Dv * lap_v + uvv - (p.F + p.k) * v[c];
        }
    }
}

Rhs make_rhs(const SystemSpec& spec) {
    switch (spec.family) {
        case Family::LV: {
            const LvParams p = lv_params(spec.params);
            return [p](std::span<const double> s, std::span<double> out) { lv_rhs(s, p, out); };
        }
        case Family::GO: {
            const GoParams p = go_params(spec.params);
            return [p](std::span<const double> s, std::span<double> out) { go_rhs(s, p, out); };
        }
        case Family::GS: {
            if (!spec.grid) throw ConfigError("gs requires a grid");
            const GsParams p = gs_params(spec.params, *spec.grid);
            return [p](std::span<const double> s, std::span<double> out) { gs_rhs(s, p, out); };
        }
        case Family::NS: break;
    }
    throw UsageError("ns has no pointwise right-hand side; use NsSolver");
}

// ---------------------------------------------------------------------------

namespace {

void eval_stage(const Rhs& f, std::span<const double> u, std::span<double> k, double t) {
    if (!all_finite(u)) throw IntegrationError("non-finite solver stage", t);
    f(u, k);
    if (!all_finite(k)) throw IntegrationError("non-finite right-hand side", t);
}

}  // namespace

std::vector<double> rk4_step(const Rhs& f, std::span<const double> u, double dt, double t) {
    const std::size_t n = u.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    eval_stage(f, u, k1, t);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * dt * k1[i];
    eval_stage(f, tmp, k2, t + 0.5 * dt);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * dt * k2[i];
    eval_stage(f, tmp, k3, t + 0.5 * dt);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + dt * k3[i];
    eval_stage(f, tmp, k4, t + dt);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (!all_finite(tmp)) throw IntegrationError("non-finite state", t + dt);
    return tmp;
}

std::vector<double> euler_step(const Rhs& f, std::span<const double> u, double dt, double t) {
    const std::size_t n = u.size();
    std::vector<double> k(n), out(n);
    eval_stage(f, u, k, t);
    for (std::size_t i = 0; i < n; ++i) out[i] = u[i] + dt * k[i];
    if (!all_finite(out)) throw IntegrationError("non-finite state", t + dt);
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> sample_initial_condition(Family f, Rng& rng, const InitialConditionSettings& settings,
                                             std::size_t side) {
    switch (f) {
        case Family::LV:
        case Family::GO: {
            const auto& ranges = f == Family::LV ? settings.lv_range : settings.go_ranges;
            const std::size_t n = f == Family::LV ? 2 : 7;
            if (ranges.size() != n) throw ConfigError("initial-condition ranges must list " + std::to_string(n) + " species");
            std::vector<double> s(n);
            for (std::size_t i = 0; i < n; ++i) s[i] = rng.uniform(ranges[i].first, ranges[i].second);
            return s;
        }
        case Family::GS: {
            const std::size_t plane = side * side;
            std::vector<double> s(2 * plane, 0.0);
            std::fill(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(plane), 1.0);
            for (std::size_t q = 0; q < settings.gs_squares; ++q) {
                const std::size_t r0 = rng.below(side), c0 = rng.below(side);
                for (std::size_t dr = 0; dr < settings.gs_square_size; ++dr)
                    for (std::size_t dc = 0; dc < settings.gs_square_size; ++dc) {
                        const std::size_t c = ((r0 + dr) % side) * side + (c0 + dc) % side;
                        s[c] = settings.gs_square_u;
                        s[plane + c] = settings.gs_square_v;
                    }
            }
            return s;
        }
        case Family::NS: {
            const double alpha = settings.ns_alpha, tau = settings.ns_tau;
            const double sigma = settings.ns_sigma < 0.0 ? std::pow(tau, alpha - 1.0) : settings.ns_sigma;
            const std::size_t n2 = side * side;
            std::vector<std::complex<double>> coeff(n2);
            const auto wavenumber = [side](std::size_t i) {
                return i <= side / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(side);
            };
            for (std::size_t i = 0; i < side; ++i)
                for (std::size_t j = 0; j < side; ++j) {
                    const double a = wavenumber(i), b = wavenumber(j);
                    const double k2 = 4.0 * std::numbers::pi * std::numbers::pi * (a * a + b * b);
                    const double amp = static_cast<double>(n2) * std::sqrt(2.0) * sigma *
                                       std::pow(k2 + tau * tau, -alpha / 2.0);
                    const double re = rng.normal(), im = rng.normal();
                    coeff[i * side + j] = std::complex<double>(amp * re, amp * im);
                }
            coeff[0] = 0.0;
            dft2(coeff, side, true);
            std::vector<double> s(n2);
            for (std::size_t i = 0; i < n2; ++i) s[i] = coeff[i].real();
            return s;
        }
    }
    return {};
}

// ---------------------------------------------------------------------------

DynamicsSettings default_dynamics_settings(Family f) {
    DynamicsSettings d;
    d.family = f;
    switch (f) {
        case Family::LV:
            d.fixed = {{"alpha", 0.5}, {"gamma", 0.5}, {"lv_variant", 0.0}};
            d.varied = {"beta", "delta"};
            d.train_values = {{0.5, 0.75, 1.0}, {0.5, 0.75, 1.0}};
            d.eval_values = {{0.625, 1.125}, {0.625, 1.125}};
            d.dt = 0.5;
            d.horizon_T = 20.0;
            d.adapt_horizon_Tad = 5.0;
            d.substeps = 10;
            d.n_tr = 100;
            d.n_ev = 50;
            break;
        case Family::GO:
            d.fixed = {{"J0", 2.5}, {"k2", 6.0}, {"k3", 16.0}, {"k4", 100.0}, {"k5", 1.28}, {"k6", 12.0}, {"q", 4.0},
                       {"N", 1.0},  {"A", 4.0},  {"kappa", 13.0}, {"psi", 0.1}, {"k", 1.8}};
            d.varied = {"k1", "K1"};
            d.train_values = {{100.0, 90.0, 80.0}, {1.0, 0.75, 0.5}};
            d.eval_values = {{85.0, 95.0}, {0.625, 0.875}};
            d.dt = 0.05;
            d.horizon_T = 2.0;
            d.adapt_horizon_Tad = 0.5;
            d.substeps = 20;
            d.n_tr = 100;
            d.n_ev = 50;
            break;
        case Family::GS:
            d.fixed = {{"Du", 0.2097}, {"Dv", 0.105}};
            d.varied = {"F", "k"};
            d.train_values = {{0.30, 0.39}, {0.058, 0.062}};
            d.eval_values = {{0.33, 0.36}, {0.059, 0.061}};
            d.dt = 40.0;
            d.horizon_T = 400.0;
            d.adapt_horizon_Tad = 80.0;
            d.substeps = 40;
            d.n_tr = 50;
            d.n_ev = 50;
            d.grid = Grid{32, 2.0};
            break;
        case Family::NS:
            d.fixed = {{"ns_max_dt", 0.05}, {"ns_viscous", 0.0}};
            d.varied = {"nu"};
            d.train_values = {{8e-4, 9e-4, 1.0e-3, 1.1e-3, 1.2e-3}};
            d.eval_values = {{8.5e-4, 9.5e-4, 1.05e-3, 1.15e-3}};
            d.dt = 1.0;
            d.horizon_T = 10.0;
            d.adapt_horizon_Tad = 2.0;
            d.substeps = 100;
            d.n_tr = 50;
            d.n_ev = 50;
            d.grid = Grid{32, 1.0 / 32.0};
            break;
    }
    return d;
}

namespace {

std::vector<std::vector<double>> cartesian(const std::vector<std::vector<double>>& lists) {
    std::vector<std::vector<double>> out{{}};
    for (const auto& list : lists) {
        std::vector<std::vector<double>> next;
        for (const auto& prefix : out)
            for (double v : list) {
                auto t = prefix;
                t.push_back(v);
                next.push_back(std::move(t));
            }
        out = std::move(next);
    }
    return out;
}

std::vector<SystemSpec> expand(const DynamicsSettings& d, const std::vector<std::vector<double>>& values) {
    if (values.size() != d.varied.size()) throw ConfigError("varied parameter lists do not match names");
    std::vector<SystemSpec> envs;
    for (const auto& tuple : cartesian(values)) {
        SystemSpec s;
        s.family = d.family;
        s.params = d.fixed;
        for (std::size_t i = 0; i < tuple.size(); ++i) s.params[d.varied[i]] = tuple[i];
        s.grid = d.grid;
        s.dt = d.dt;
        s.horizon_T = d.horizon_T;
        s.adapt_horizon_Tad = d.adapt_horizon_Tad;
        s.substeps = d.substeps;
        s.validate();
        envs.push_back(std::move(s));
    }
    return envs;
}

}  // namespace

EnvironmentSet make_environment_set(const DynamicsSettings& d) {
    EnvironmentSet set;
    set.family = d.family;
    set.train_envs = expand(d, d.train_values);
    set.eval_envs = expand(d, d.eval_values);
    set.n_tr = d.n_tr;
    set.n_ev = d.n_ev;
    set.ic = d.ic;
    for (const auto& e : set.eval_envs)
        for (const auto& t : set.train_envs) {
            const bool same = std::all_of(d.varied.begin(), d.varied.end(),
                                          [&](const std::string& n) { return e.param(n) == t.param(n); });
            if (same) throw ConfigError("evaluation environment duplicates a training environment");
        }
    return set;
}

EnvironmentSet default_environment_set(Family f) { return make_environment_set(default_dynamics_settings(f)); }

std::uint64_t trajectory_seed(std::uint64_t dataset_seed, Split split, std::size_t env, std::size_t traj) {
    std::uint64_t s = mix_seed(dataset_seed, static_cast<std::uint64_t>(split) + 1);
    s = mix_seed(s, env);
    return mix_seed(s, traj);
}

Trajectory integrate_trajectory(const SystemSpec& spec, std::span<const double> initial, std::size_t env_index,
                                std::uint64_t seed) {
    Trajectory tr;
    tr.env_index = env_index;
    tr.state_shape = state_shape(spec);
    tr.dt = spec.dt;
    tr.seed = seed;
    const std::size_t fs = tr.frame_size();
    if (initial.size() != fs) throw ShapeError("initial condition size does not match " + shape_str(tr.state_shape));
    const std::size_t n = spec.n_steps();
    tr.states.reserve((n + 1) * fs);
    tr.states.insert(tr.states.end(), initial.begin(), initial.end());
    std::vector<double> u(initial.begin(), initial.end());
    const double h = spec.dt / static_cast<double>(spec.substeps);

    if (spec.family == Family::NS) {
        NsOptions opt;
        opt.side = spec.grid->side;
        opt.viscosity = spec.param("nu");
        opt.dt_internal = h;
        opt.max_dt = spec.param("ns_max_dt");
        opt.viscous = spec.param("ns_viscous") != 0.0 ? ViscousScheme::exact : ViscousScheme::crank_nicolson;
        const NsSolver solver(opt, ns_default_forcing(opt.side));
        for (std::size_t k = 0; k < n; ++k) {
            solver.advance(u, spec.substeps);
            if (!all_finite(u)) throw IntegrationError("non-finite vorticity", static_cast<double>(k + 1) * spec.dt);
            tr.states.insert(tr.states.end(), u.begin(), u.end());
        }
        return tr;
    }

    const Rhs f = make_rhs(spec);
    double t = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t s = 0; s < spec.substeps; ++s) {
            u = rk4_step(f, u, h, t);
            t += h;
        }
        tr.states.insert(tr.states.end(), u.begin(), u.end());
    }
    return tr;
}

DatasetBundle generate_dataset(const EnvironmentSet& environments, std::uint64_t seed, unsigned threads) {
    struct Job {
        Split split;
        std::size_t env, traj;
    };
    DatasetBundle bundle;
    bundle.environments = environments;
    bundle.train.resize(environments.train_envs.size());
    bundle.eval.resize(environments.eval_envs.size());
    std::vector<Job> jobs;
    for (std::size_t e = 0; e < environments.train_envs.size(); ++e) {
        bundle.train[e].resize(environments.n_tr);
        for (std::size_t j = 0; j < environments.n_tr; ++j) jobs.push_back({Split::train, e, j});
    }
    for (std::size_t e = 0; e < environments.eval_envs.size(); ++e) {
        bundle.eval[e].resize(environments.n_ev + 1);
        for (std::size_t j = 0; j <= environments.n_ev; ++j) jobs.push_back({Split::eval, e, j});
    }

    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const Job& job = jobs[i];
            const auto& spec =
                job.split == Split::train ? environments.train_envs[job.env] : environments.eval_envs[job.env];
            auto& slot = job.split == Split::train ? bundle.train[job.env][job.traj] : bundle.eval[job.env][job.traj];
            const std::uint64_t s = trajectory_seed(seed, job.split, job.env, job.traj);
            try {
                Rng rng(s);
                const auto ic = sample_initial_condition(spec.family, rng, environments.ic,
                                                         spec.grid ? spec.grid->side : 32);
                slot = integrate_trajectory(spec, ic, job.env, s);
            } catch (const IntegrationError& err) {
                errors[i] = std::make_exception_ptr(IntegrationError(
                    std::string(job.split == Split::train ? "train" : "eval") + " env " + std::to_string(job.env) +
                        " trajectory " + std::to_string(job.traj) + ": integration diverged",
                    err.time));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned n_threads = std::max(1u, threads);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return bundle;
}

}  // namespace fnsda
