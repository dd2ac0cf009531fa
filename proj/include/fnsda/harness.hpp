#pragma once

// Inter- and extra-trajectory evaluation tasks and diagnostics.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fnsda/dynamics.hpp"
#include "fnsda/metrics.hpp"
#include "fnsda/pipelines.hpp"

namespace fnsda {

/// Predicts `n` frames after `initial` (initial excluded), flattened.
using Predictor = std::function<std::vector<double>(std::span<const double> initial, std::size_t n)>;
/// Builds a predictor for one evaluation environment from its adaptation data.
using AdaptHook = std::function<Predictor(std::size_t env, const std::vector<Trajectory>& adapt_data)>;

enum class EvalMethod {
    /// Adapt (c, beta) from the mean context.
    fnsda,
    /// Mean training context, no adaptation.
    mean_context,
    /// The checkpoint as is (ERM without fine-tuning).
    frozen,
    /// Fine-tune every parameter (ERM-adp).
    full,
};

EvalMethod parse_eval_method(const std::string& s);
std::string eval_method_name(EvalMethod m);

struct EvalOptions {
    EvalMethod method = EvalMethod::fnsda;
    AdaptOptions adapt;
    double mape_eps = 1e-8;
    unsigned threads = 1;
    std::string run_id = "run";
};

/// Model-driven hook for a checkpoint.
AdaptHook model_hook(const Checkpoint& checkpoint, const std::vector<SystemSpec>& envs, AdaptTask task,
                     const EvalOptions& options);
/// Ground-truth generator as the predictor; adaptation data is ignored.
AdaptHook oracle_hook(const std::vector<SystemSpec>& envs);

/// eval_data[e] holds 1 + n_ev trajectories; index 0 adapts, the rest are
/// rolled out over [0, T] from their initial states.
MetricsReport run_inter_trajectory(const std::vector<std::vector<Trajectory>>& eval_data,
                                   const std::vector<SystemSpec>& envs, const AdaptHook& hook,
                                   const EvalOptions& options);
/// Adapts on the [0, T_ad] prefixes of trajectories 1..n_ev, then rolls each
/// out from its T_ad state; scores (T_ad, T] only.
MetricsReport run_extra_trajectory(const std::vector<std::vector<Trajectory>>& eval_data,
                                   const std::vector<SystemSpec>& envs, const AdaptHook& hook,
                                   const EvalOptions& options);

MetricsReport run_inter_trajectory(const Checkpoint& checkpoint, const std::vector<std::vector<Trajectory>>& eval_data,
                                   const std::vector<SystemSpec>& envs, const EvalOptions& options);
MetricsReport run_extra_trajectory(const Checkpoint& checkpoint, const std::vector<std::vector<Trajectory>>& eval_data,
                                   const std::vector<SystemSpec>& envs, const EvalOptions& options);

struct SpectrumRow {
    std::size_t layer = 0;
    std::size_t mode = 0;
    double magnitude = 0.0;
    double gate = 0.0;
    /// Sum of |R_shared|^2 over channel pairs.
    double shared_energy = 0.0;
    /// Sum of |W_env c|^2 at the given context.
    double env_energy = 0.0;
};

std::vector<SpectrumRow> spectrum(const ModelParams& params, const EnvContext& ctx);
std::string spectrum_csv(const std::vector<SpectrumRow>& rows);

}  // namespace fnsda
