#pragma once

#include <cstdint>
#include <vector>

#include "fnsda/tensor.hpp"

namespace fnsda {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Decoupled: param -= lr * weight_decay * param before the Adam delta.
    double weight_decay = 0.0;
    /// Global gradient-norm clip; 0 disables.
    double clip_norm = 0.0;
};

struct AdamState {
    AdamOptions options;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t t = 0;
};

AdamState adam_init(const std::vector<Tensor>& params, const AdamOptions& options);

/// One bias-corrected Adam update from the gradients stored on `params`
/// (leaf tensors). ShapeError when params do not match the state.
void adam_step(AdamState& state, std::vector<Tensor>& params, double lr);

struct LrSchedule {
    double base_lr = 1e-3;
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 1;
    double min_lr = 0.0;
};

/// Linear warmup from 0, then cosine decay to min_lr at total_steps.
/// UsageError for steps outside [0, total_steps]; ConfigError when the
/// warmup exceeds the total.
double lr_at(const LrSchedule& schedule, std::size_t step);

}  // namespace fnsda
