#pragma once

// Ground-truth systems, integrators, initial conditions and dataset generation.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fnsda/rng.hpp"
#include "fnsda/tensor.hpp"

namespace fnsda {

enum class Family : std::uint8_t { LV = 0, GO = 1, GS = 2, NS = 3 };

std::string family_name(Family f);
/// Accepts lv/go/gs/ns in any case; ConfigError otherwise.
Family parse_family(const std::string& name);
bool is_spatial(Family f);

using ParamMap = std::map<std::string, double>;

struct Grid {
    std::size_t side = 32;
    double spacing = 1.0;
};

struct SystemSpec {
    Family family = Family::LV;
    ParamMap params;
    std::optional<Grid> grid;
    double dt = 0.0;
    double horizon_T = 0.0;
    double adapt_horizon_Tad = 0.0;
    /// Integrator steps per recorded frame.
    std::size_t substeps = 1;

    double param(const std::string& name) const;
    std::size_t n_steps() const;
    std::size_t adapt_steps() const;
    /// ConfigError on a broken invariant.
    void validate() const;
};

/// Per-frame state shape: {2}, {7}, {2, side, side} or {1, side, side}.
Shape state_shape(Family f, std::size_t side = 32);
Shape state_shape(const SystemSpec& spec);

// ---------------------------------------------------------------------------
// Right-hand sides. Each throws DomainError on non-finite input and
// ShapeError on a wrong state size.

struct LvParams {
    double alpha, beta, gamma, delta;
    bool printed_variant = false;
};
struct GoParams {
    double J0, k1, k2, k3, k4, k5, k6, K1, q, N, A, kappa, psi, k;
};
struct GsParams {
    double F, k, Du, Dv;
    std::size_t side;
    double spacing;
};

LvParams lv_params(const ParamMap& p);
GoParams go_params(const ParamMap& p);
GsParams gs_params(const ParamMap& p, const Grid& grid);

void lv_rhs(std::span<const double> state, const LvParams& p, std::span<double> out);
void go_rhs(std::span<const double> state, const GoParams& p, std::span<double> out);
/// State is [u-plane, v-plane], each side*side row-major.
void gs_rhs(std::span<const double> state, const GsParams& p, std::span<double> out);

using Rhs = std::function<void(std::span<const double>, std::span<double>)>;

/// RHS closure for LV/GO/GS. NS is stepped by NsSolver instead.
Rhs make_rhs(const SystemSpec& spec);

// ---------------------------------------------------------------------------
// Integrators. `t` is only used to report the failing time.

std::vector<double> rk4_step(const Rhs& f, std::span<const double> u, double dt, double t = 0.0);
std::vector<double> euler_step(const Rhs& f, std::span<const double> u, double dt, double t = 0.0);

// ---------------------------------------------------------------------------
// Initial conditions

struct InitialConditionSettings {
    std::vector<std::pair<double, double>> lv_range{{1.0, 3.0}, {1.0, 3.0}};
    std::vector<std::pair<double, double>> go_ranges{{0.15, 1.60}, {0.19, 2.16}, {0.04, 0.20}, {0.10, 0.35},
                                                     {0.08, 0.30}, {0.14, 2.67}, {0.05, 0.10}};
    std::size_t gs_squares = 3;
    std::size_t gs_square_size = 2;
    double gs_square_u = 0.5;
    double gs_square_v = 0.25;
    double ns_alpha = 2.5;
    double ns_tau = 7.0;
    /// Negative means tau^(alpha - 1).
    double ns_sigma = -1.0;
};

std::vector<double> sample_initial_condition(Family f, Rng& rng, const InitialConditionSettings& settings,
                                             std::size_t side = 32);

// ---------------------------------------------------------------------------
// Environments and datasets

struct EnvironmentSet {
    Family family = Family::LV;
    std::vector<SystemSpec> train_envs;
    std::vector<SystemSpec> eval_envs;
    std::size_t n_tr = 0;
    std::size_t n_ev = 0;
    InitialConditionSettings ic;
};

/// Generation settings before expansion into environments. Varied parameters
/// form a cartesian product, first name outermost.
struct DynamicsSettings {
    Family family = Family::LV;
    ParamMap fixed;
    std::vector<std::string> varied;
    std::vector<std::vector<double>> train_values;
    std::vector<std::vector<double>> eval_values;
    double dt = 0.5;
    double horizon_T = 20.0;
    double adapt_horizon_Tad = 5.0;
    std::size_t substeps = 10;
    std::size_t n_tr = 100;
    std::size_t n_ev = 50;
    std::optional<Grid> grid;
    InitialConditionSettings ic;
};

DynamicsSettings default_dynamics_settings(Family f);
EnvironmentSet make_environment_set(const DynamicsSettings& settings);
EnvironmentSet default_environment_set(Family f);

struct Trajectory {
    std::size_t env_index = 0;
    Shape state_shape;
    /// [n_frames, state...] row-major.
    std::vector<double> states;
    double dt = 0.0;
    std::uint64_t seed = 0;

    std::size_t frame_size() const { return shape_numel(state_shape); }
    std::size_t n_frames() const { return frame_size() ? states.size() / frame_size() : 0; }
    std::span<const double> frame(std::size_t k) const {
        return std::span<const double>(states).subspan(k * frame_size(), frame_size());
    }
};

enum class Split : std::uint8_t { train = 0, eval = 1 };

struct DatasetBundle {
    static constexpr std::uint32_t kVersion = 1;
    EnvironmentSet environments;
    std::vector<std::vector<Trajectory>> train;
    /// n_ev + 1 per environment: index 0 serves inter-trajectory adaptation.
    std::vector<std::vector<Trajectory>> eval;
};

std::uint64_t trajectory_seed(std::uint64_t dataset_seed, Split split, std::size_t env, std::size_t traj);

/// Integrates one trajectory on the system's recording grid.
Trajectory integrate_trajectory(const SystemSpec& spec, std::span<const double> initial, std::size_t env_index,
                                std::uint64_t seed);

/// Deterministic in (environments, seed) for any thread count.
DatasetBundle generate_dataset(const EnvironmentSet& environments, std::uint64_t seed, unsigned threads = 1);

}  // namespace fnsda
