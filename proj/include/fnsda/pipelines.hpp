#pragma once

// Trajectory loss, training, adaptation and the ERM baselines.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fnsda/dynamics.hpp"
#include "fnsda/model.hpp"
#include "fnsda/optim.hpp"

namespace fnsda {

enum class Regularizer { l2, l1 };
enum class Integrator { rk4, euler };

Regularizer parse_regularizer(const std::string& s);
std::string regularizer_name(Regularizer r);
/// RK4 for LV/GO/GS, Euler for NS.
Integrator integrator_for(Family f);

/// Differentiable vector field on a batch [B, state...].
using VectorField = std::function<Tensor(const Tensor&)>;

Tensor solver_step(Integrator integrator, const VectorField& g, const Tensor& u, double dt);

struct LossOptions {
    double lambda = 1e-4;
    Regularizer reg = Regularizer::l2;
    std::size_t horizon_steps = 1;
    Integrator integrator = Integrator::rk4;
};

/// Teacher-forced rollout MSE: from every observed frame with at least
/// `horizon_steps` successors, integrates g forward and averages the squared
/// error over all steps, starts and state entries; adds lambda * ||c||^2 (or
/// ||c||_1) when c is defined. LossError on a non-finite rollout.
Tensor trajectory_loss(const VectorField& g, const Tensor& c, const std::vector<const Trajectory*>& trajs,
                       const LossOptions& options);
Tensor trajectory_loss(const ModelParams& params, const EnvContext& ctx, const std::vector<const Trajectory*>& trajs,
                       const LossOptions& options);

/// Free rollout from the frames of `initial` ([B, state...]) for n steps;
/// returns [n, B, state...] without the initial frame. Runs without a graph.
std::vector<double> rollout(Integrator integrator, const VectorField& g, const Tensor& initial, std::size_t n,
                            double dt);

// ---------------------------------------------------------------------------

struct TrainMeta {
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    bool interrupted = false;
};

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;
    ModelParams params;
    std::vector<EnvContext> contexts;
    /// Means over training contexts; undefined tensors for ERM.
    EnvContext mean_context;
    std::string config_text;
    TrainMeta meta;
    std::vector<double> loss_history;
};

struct TrainOptions {
    /// Optimizer steps on theta. One epoch visits every environment once.
    std::size_t steps = 5000;
    double lr = 5e-4;
    /// Step size for contexts; <= 0 means equal to lr.
    double context_lr = -1.0;
    double weight_decay = 1e-4;
    std::size_t warmup = 500;
    double min_lr = 0.0;
    double clip_norm = 0.0;
    LossOptions loss;
    std::size_t batch_trajectories = 16;
    /// Accumulate theta gradients over a full pass before stepping.
    bool accumulate_envs = false;
    std::function<void(std::size_t step, double loss)> progress;
    /// Polled once per step; training stops early when set.
    const std::atomic<bool>* stop = nullptr;
};

/// Cycles environments; per visit takes a minibatch,
/// updates that environment's context (c, beta) and theta.
Checkpoint train(const std::vector<std::vector<Trajectory>>& data, const ModelConfig& config,
                 const TrainOptions& options, std::uint64_t seed);

/// ERM: one plain FNO (all-shared partition, no contexts) on the same loop.
Checkpoint baseline_train_erm(const std::vector<std::vector<Trajectory>>& data, ModelConfig config,
                              const TrainOptions& options, std::uint64_t seed);

enum class AdaptTask { inter, extra };

struct AdaptOptions {
    std::size_t steps = 2000;
    double lr = 5e-4;
    double weight_decay = 1e-4;
    /// Cosine decay without warmup; constant lr otherwise.
    bool cosine = true;
    LossOptions loss;
    /// Stop after this many steps without improvement; 0 disables.
    std::size_t patience = 0;
};

struct AdaptResult {
    EnvContext context;
    std::vector<double> loss_history;
    std::uint64_t frozen_digest_before = 0;
    std::uint64_t frozen_digest_after = 0;
    std::size_t adapted_params = 0;
    std::size_t steps_run = 0;
};

/// Trajectories prepared for a task: inter takes exactly one full trajectory,
/// extra takes [0, T_ad] prefixes. UsageError otherwise.
void check_adaptation_data(const std::vector<Trajectory>& data, AdaptTask task, const SystemSpec& env);
/// Frames [0, frames) of a trajectory.
Trajectory prefix(const Trajectory& t, std::size_t frames);

/// Starts from the mean training context and optimizes
/// only (c, beta).
AdaptResult adapt(const Checkpoint& checkpoint, const std::vector<Trajectory>& data, AdaptTask task,
                  const SystemSpec& env, const AdaptOptions& options);

struct FullAdaptResult {
    ModelParams params;
    std::vector<double> loss_history;
    std::size_t adapted_params = 0;
};

/// ERM-adp: fine-tunes every trainable parameter of an ERM checkpoint.
FullAdaptResult baseline_adapt_full(const Checkpoint& checkpoint, const std::vector<Trajectory>& data,
                                    AdaptTask task, const SystemSpec& env, const AdaptOptions& options);

/// Deep copy with the given trainability.
ModelParams clone_params(const ModelParams& params, bool trainable);
EnvContext clone_context(const EnvContext& ctx, bool trainable);

/// FNV-1a over names and raw bytes of every model tensor.
std::uint64_t params_digest(const ModelParams& params);
std::uint64_t context_digest(const EnvContext& ctx);

// ---------------------------------------------------------------------------
// Checkpoint files ("FNSC"): magic, u32 version, u64 config digest, str config
// text, u32 blob count, blobs (str name, u8 rank, u32 dims, f64 data), u64
// FNV-1a trailer. Written through a temp file and an atomic rename.

std::vector<unsigned char> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fnsda
