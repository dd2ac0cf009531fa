#include "fnsda/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fnsda/errors.hpp"

namespace fnsda {

AdamState adam_init(const std::vector<Tensor>& params, const AdamOptions& options) {
    AdamState s;
    s.options = options;
    for (const auto& p : params) {
        s.m.emplace_back(p.size(), 0.0);
        s.v.emplace_back(p.size(), 0.0);
    }
    return s;
}

void adam_step(AdamState& s, std::vector<Tensor>& params, double lr) {
    if (params.size() != s.m.size()) throw ShapeError("adam_step: parameter count does not match optimizer state");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != s.m[i].size()) {
            throw ShapeError("adam_step: parameter " + std::to_string(i) + " has shape " +
                             shape_str(params[i].shape()) + " but state holds " + std::to_string(s.m[i].size()));
        }
    }
    const AdamOptions& o = s.options;
    double clip = 1.0;
    if (o.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& p : params)
            for (double g : p.grad()) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > o.clip_norm) clip = o.clip_norm / norm;
    }
    ++s.t;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto g = params[i].grad();
        auto x = params[i].mutable_values();
        auto& m = s.m[i];
        auto& v = s.v[i];
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double gj = g[j] * clip;
            if (o.weight_decay != 0.0) x[j] -= lr * o.weight_decay * x[j];
            m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * gj;
            v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * gj * gj;
            x[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + o.eps);
        }
    }
}

double lr_at(const LrSchedule& s, std::size_t step) {
    if (s.warmup_steps > s.total_steps) throw ConfigError("warmup steps exceed total steps");
    if (step > s.total_steps) {
        throw UsageError("schedule step " + std::to_string(step) + " beyond total " + std::to_string(s.total_steps));
    }
    if (step < s.warmup_steps) {
        return s.base_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    }
    if (s.total_steps == s.warmup_steps) return s.base_lr;
    const double progress =
        static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.total_steps - s.warmup_steps);
    return s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace fnsda
