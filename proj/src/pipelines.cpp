#include "fnsda/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fnsda/binary_io.hpp"
#include "fnsda/errors.hpp"
#include "fnsda/rng.hpp"

namespace fnsda {

Regularizer parse_regularizer(const std::string& s) {
    if (s == "l2" || s == "L2") return Regularizer::l2;
    if (s == "l1" || s == "L1") return Regularizer::l1;
    throw ConfigError("unknown regularizer '" + s + "' (expected l2 or l1)");
}

std::string regularizer_name(Regularizer r) { return r == Regularizer::l2 ? "l2" : "l1"; }

Integrator integrator_for(Family f) { return f == Family::NS ? Integrator::euler : Integrator::rk4; }

Tensor solver_step(Integrator integrator, const VectorField& g, const Tensor& u, double dt) {
    if (integrator == Integrator::euler) return add(u, scale(g(u), dt));
    Tensor k1 = g(u);
    Tensor k2 = g(add(u, scale(k1, 0.5 * dt)));
    Tensor k3 = g(add(u, scale(k2, 0.5 * dt)));
    Tensor k4 = g(add(u, scale(k3, dt)));
    Tensor incr = add(add(k1, k4), scale(add(k2, k3), 2.0));
    return add(u, scale(incr, dt / 6.0));
}

namespace {

bool finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

VectorField model_field(const ModelParams& params, const EnvContext& ctx) {
    return [&params, &ctx](const Tensor& u) { return model_forward(params, ctx, u); };
}

}  // namespace

Tensor trajectory_loss(const VectorField& g, const Tensor& c, const std::vector<const Trajectory*>& trajs,
                       const LossOptions& options) {
    const std::size_t h = options.horizon_steps;
    if (h < 1) throw UsageError("horizon_steps must be at least 1");
    if (trajs.empty()) throw UsageError("trajectory_loss needs at least one trajectory");
    const Shape& fshape = trajs.front()->state_shape;
    const double dt = trajs.front()->dt;
    const std::size_t fs = shape_numel(fshape);

    std::vector<std::pair<const Trajectory*, std::size_t>> starts;
    for (const Trajectory* t : trajs) {
        if (t->state_shape != fshape || t->dt != dt) throw ShapeError("trajectory_loss: heterogeneous trajectories");
        for (std::size_t k = 0; k + h < t->n_frames(); ++k) starts.emplace_back(t, k);
    }
    if (starts.empty()) throw UsageError("trajectories are shorter than the loss horizon");

    Shape batch_shape{starts.size()};
    batch_shape.insert(batch_shape.end(), fshape.begin(), fshape.end());
    auto gather = [&](std::size_t offset) {
        std::vector<double> v;
        v.reserve(starts.size() * fs);
        for (const auto& [t, k] : starts) {
            const auto f = t->frame(k + offset);
            v.insert(v.end(), f.begin(), f.end());
        }
        return Tensor(batch_shape, std::move(v));
    };

    Tensor u = gather(0);
    Tensor total;
    for (std::size_t i = 1; i <= h; ++i) {
        u = solver_step(options.integrator, g, u, dt);
        if (!finite(u.values())) throw LossError("non-finite rollout", i);
        Tensor err = mean(square(sub(u, gather(i))));
        total = total.defined() ? add(total, err) : err;
    }
    Tensor loss = h == 1 ? total : scale(total, 1.0 / static_cast<double>(h));
    if (c.defined() && options.lambda != 0.0) {
        Tensor reg = options.reg == Regularizer::l2 ? sum(square(c)) : sum(abs(c));
        loss = add(loss, scale(reg, options.lambda));
    }
    if (!std::isfinite(loss.item())) throw LossError("non-finite loss", h);
    return loss;
}

Tensor trajectory_loss(const ModelParams& params, const EnvContext& ctx, const std::vector<const Trajectory*>& trajs,
                       const LossOptions& options) {
    return trajectory_loss(model_field(params, ctx), params.config.use_context ? ctx.c : Tensor(), trajs, options);
}

std::vector<double> rollout(Integrator integrator, const VectorField& g, const Tensor& initial, std::size_t n,
                            double dt) {
    NoGradGuard no_grad;
    std::vector<double> out;
    out.reserve(n * initial.size());
    Tensor u = initial;
    for (std::size_t k = 0; k < n; ++k) {
        if (!finite(u.values())) {
            out.resize(n * initial.size(), std::numeric_limits<double>::quiet_NaN());
            break;
        }
        try {
            u = solver_step(integrator, g, u, dt);
        } catch (const DomainError&) {
            out.resize(n * initial.size(), std::numeric_limits<double>::quiet_NaN());
            break;
        }
        out.insert(out.end(), u.values().begin(), u.values().end());
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

Tensor copy_tensor(const Tensor& t, bool trainable) {
    if (!t.defined()) return t;
    Tensor c(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
    c.set_requires_grad(trainable);
    return c;
}

void zero(std::vector<Tensor>& ts) {
    for (auto& t : ts) t.zero_grad();
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named) {
    std::vector<Tensor> out;
    for (const auto& nt : named) out.push_back(nt.second);
    return out;
}

/// Cycles through a shuffled order of trajectory indices.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(batch), rng_(seed) {
        order_.resize(n);
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
        shuffle();
    }

    std::vector<std::size_t> next() {
        std::vector<std::size_t> out;
        if (batch_ >= n_) {
            out = order_;
        } else {
            for (std::size_t i = 0; i < batch_; ++i) {
                if (cursor_ == n_) {
                    shuffle();
                    cursor_ = 0;
                }
                out.push_back(order_[cursor_++]);
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    void shuffle() {
        for (std::size_t i = n_; i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    }
    std::size_t n_, batch_, cursor_ = 0;
    Rng rng_;
    std::vector<std::size_t> order_;
};

EnvContext mean_of(const std::vector<EnvContext>& contexts) {
    EnvContext m;
    m.tag = "mean";
    if (contexts.empty()) return m;
    std::vector<double> c(contexts.front().c.size(), 0.0), b(contexts.front().beta.size(), 0.0);
    for (const auto& ctx : contexts) {
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += ctx.c.values()[i];
        for (std::size_t i = 0; i < b.size(); ++i) b[i] += ctx.beta.values()[i];
    }
    const double inv = 1.0 / static_cast<double>(contexts.size());
    for (auto& v : c) v *= inv;
    for (auto& v : b) v *= inv;
    const Shape c_shape{c.size()}, b_shape{b.size()};
    m.c = Tensor(c_shape, std::move(c));
    m.beta = Tensor(b_shape, std::move(b));
    return m;
}

double mean_range(const std::vector<double>& v, std::size_t first, std::size_t count) {
    if (v.empty()) return 0.0;
    first = std::min(first, v.size() - 1);
    count = std::max<std::size_t>(1, std::min(count, v.size() - first));
    double s = 0.0;
    for (std::size_t i = first; i < first + count; ++i) s += v[i];
    return s / static_cast<double>(count);
}

}  // namespace

Checkpoint train(const std::vector<std::vector<Trajectory>>& data, const ModelConfig& config,
                 const TrainOptions& options, std::uint64_t seed) {
    config.validate();
    if (data.empty()) throw UsageError("training needs at least one environment");
    for (const auto& env : data)
        if (env.empty()) throw UsageError("every training environment needs trajectories");

    Checkpoint ck;
    ck.params = init_model(config, mix_seed(seed, 1));
    ck.meta.seed = seed;
    const std::size_t n_env = data.size();
    if (config.use_context) {
        for (std::size_t e = 0; e < n_env; ++e) ck.contexts.push_back(make_context(config, "train" + std::to_string(e)));
    }

    std::vector<Tensor> theta = tensors_of(trainable_tensors(ck.params));
    AdamState theta_state = adam_init(theta, {0.9, 0.999, 1e-8, options.weight_decay, options.clip_norm});
    std::vector<std::vector<Tensor>> ctx_params;
    std::vector<AdamState> ctx_states;
    for (auto& ctx : ck.contexts) {
        ctx_params.push_back({ctx.c, ctx.beta});
        ctx_states.push_back(adam_init(ctx_params.back(), {0.9, 0.999, 1e-8, options.weight_decay, 0.0}));
    }
    std::vector<BatchSampler> samplers;
    for (std::size_t e = 0; e < n_env; ++e) {
        samplers.emplace_back(data[e].size(), std::max<std::size_t>(1, options.batch_trajectories),
                              mix_seed(seed, 100 + e));
    }

    const LrSchedule schedule{options.lr, std::min(options.warmup, options.steps), std::max<std::size_t>(options.steps, 1),
                              options.min_lr};
    const double ctx_ratio = options.context_lr > 0.0 ? options.context_lr / options.lr : 1.0;
    const EnvContext no_context;

    std::size_t step = 0;
    auto visit = [&](std::size_t e) {
        std::vector<const Trajectory*> batch;
        for (std::size_t j : samplers[e].next()) batch.push_back(&data[e][j]);
        const EnvContext& ctx = config.use_context ? ck.contexts[e] : no_context;
        if (config.use_context) zero(ctx_params[e]);
        Tensor loss;
        try {
            loss = trajectory_loss(ck.params, ctx, batch, options.loss);
        } catch (const LossError& err) {
            throw LossError("training diverged in environment " + std::to_string(e) + ": " + err.what(), step);
        }
        backward(loss);
        if (config.use_context) adam_step(ctx_states[e], ctx_params[e], lr_at(schedule, step) * ctx_ratio);
        return loss.item();
    };

    while (step < options.steps) {
        if (options.stop && options.stop->load()) {
            ck.meta.interrupted = true;
            break;
        }
        if (options.accumulate_envs) {
            zero(theta);
            double total = 0.0;
            for (std::size_t e = 0; e < n_env; ++e) total += visit(e);
            adam_step(theta_state, theta, lr_at(schedule, step));
            ck.loss_history.push_back(total / static_cast<double>(n_env));
            if (options.progress) options.progress(step, ck.loss_history.back());
            ++step;
            continue;
        }
        for (std::size_t e = 0; e < n_env && step < options.steps; ++e) {
            zero(theta);
            const double l = visit(e);
            adam_step(theta_state, theta, lr_at(schedule, step));
            ck.loss_history.push_back(l);
            if (options.progress) options.progress(step, l);
            ++step;
        }
    }

    ck.meta.steps = step;
    const std::size_t window = options.accumulate_envs ? 1 : n_env;
    ck.meta.initial_loss = mean_range(ck.loss_history, 0, window);
    ck.meta.final_loss = ck.loss_history.size() >= window
                             ? mean_range(ck.loss_history, ck.loss_history.size() - window, window)
                             : mean_range(ck.loss_history, 0, window);
    ck.mean_context = mean_of(ck.contexts);
    for (auto& ctx : ck.contexts) ctx = clone_context(ctx, false);
    ck.params = clone_params(ck.params, true);
    return ck;
}

Checkpoint baseline_train_erm(const std::vector<std::vector<Trajectory>>& data, ModelConfig config,
                              const TrainOptions& options, std::uint64_t seed) {
    config.partition = Partition{};
    config.partition.kind = Partition::Kind::all_shared;
    config.use_context = false;
    return train(data, config, options, seed);
}

// ---------------------------------------------------------------------------

Trajectory prefix(const Trajectory& t, std::size_t frames) {
    if (frames > t.n_frames()) throw UsageError("prefix longer than trajectory");
    Trajectory p = t;
    p.states.resize(frames * t.frame_size());
    return p;
}

void check_adaptation_data(const std::vector<Trajectory>& data, AdaptTask task, const SystemSpec& env) {
    const Shape expect = state_shape(env);
    if (task == AdaptTask::inter && data.size() != 1) {
        throw UsageError("inter-trajectory adaptation takes exactly one trajectory, got " + std::to_string(data.size()));
    }
    if (data.empty()) throw UsageError("adaptation needs at least one trajectory");
    const std::size_t frames = task == AdaptTask::inter ? env.n_steps() + 1 : env.adapt_steps() + 1;
    for (const auto& t : data) {
        if (t.state_shape != expect) throw UsageError("adaptation trajectory has state shape " + shape_str(t.state_shape));
        if (t.n_frames() != frames) {
            throw UsageError(std::string(task == AdaptTask::inter ? "inter" : "extra") +
                             "-trajectory adaptation expects " + std::to_string(frames) + " frames, got " +
                             std::to_string(t.n_frames()));
        }
    }
}

namespace {

template <class StepFn>
std::vector<double> optimize(std::vector<Tensor>& params, const AdaptOptions& options, StepFn loss_fn,
                             std::size_t& steps_run) {
    AdamState state = adam_init(params, {0.9, 0.999, 1e-8, options.weight_decay, 0.0});
    const LrSchedule schedule{options.lr, 0, std::max<std::size_t>(options.steps, 1), 0.0};
    std::vector<double> history;
    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (steps_run = 0; steps_run < options.steps; ++steps_run) {
        zero(params);
        Tensor loss = loss_fn();
        backward(loss);
        adam_step(state, params, options.cosine ? lr_at(schedule, steps_run) : options.lr);
        history.push_back(loss.item());
        if (options.patience > 0) {
            if (history.back() < best) {
                best = history.back();
                since_best = 0;
            } else if (++since_best >= options.patience) {
                ++steps_run;
                break;
            }
        }
    }
    return history;
}

}  // namespace

AdaptResult adapt(const Checkpoint& checkpoint, const std::vector<Trajectory>& data, AdaptTask task,
                  const SystemSpec& env, const AdaptOptions& options) {
    check_adaptation_data(data, task, env);
    if (!checkpoint.params.config.use_context || !checkpoint.mean_context.c.defined()) {
        throw UsageError("checkpoint has no environment contexts to adapt");
    }
    AdaptResult r;
    const ModelParams frozen = clone_params(checkpoint.params, false);
    r.frozen_digest_before = params_digest(frozen);
    r.context = clone_context(checkpoint.mean_context, true);
    r.context.tag = "adapted";
    r.adapted_params = count_adapted_params(frozen.config);

    std::vector<const Trajectory*> ptrs;
    for (const auto& t : data) ptrs.push_back(&t);
    std::vector<Tensor> params{r.context.c, r.context.beta};
    r.loss_history = optimize(
        params, options, [&]() { return trajectory_loss(frozen, r.context, ptrs, options.loss); }, r.steps_run);
    r.frozen_digest_after = params_digest(frozen);
    r.context = clone_context(r.context, false);
    return r;
}

FullAdaptResult baseline_adapt_full(const Checkpoint& checkpoint, const std::vector<Trajectory>& data,
                                    AdaptTask task, const SystemSpec& env, const AdaptOptions& options) {
    check_adaptation_data(data, task, env);
    FullAdaptResult r;
    r.params = clone_params(checkpoint.params, true);
    std::vector<Tensor> params = tensors_of(trainable_tensors(r.params));
    for (const auto& t : params) r.adapted_params += t.size();
    const EnvContext ctx = clone_context(checkpoint.mean_context, false);
    std::vector<const Trajectory*> ptrs;
    for (const auto& t : data) ptrs.push_back(&t);
    std::size_t steps_run = 0;
    r.loss_history = optimize(
        params, options, [&]() { return trajectory_loss(r.params, ctx, ptrs, options.loss); }, steps_run);
    r.params = clone_params(r.params, true);
    return r;
}

ModelParams clone_params(const ModelParams& p, bool trainable) {
    auto cp = [trainable](const Tensor& t) { return copy_tensor(t, trainable && t.requires_grad()); };
    ModelParams out;
    out.config = p.config;
    out.lift_w = cp(p.lift_w);
    out.lift_b = cp(p.lift_b);
    for (const auto& l : p.layers) {
        out.layers.push_back({cp(l.w_res), cp(l.b), cp(l.r_shared_re), cp(l.r_shared_im), cp(l.w_env),
                              cp(l.gate_logits)});
    }
    out.proj1_w = cp(p.proj1_w);
    out.proj1_b = cp(p.proj1_b);
    out.proj2_w = cp(p.proj2_w);
    out.proj2_b = cp(p.proj2_b);
    out.shared_beta = cp(p.shared_beta);
    return out;
}

EnvContext clone_context(const EnvContext& ctx, bool trainable) {
    return {copy_tensor(ctx.c, trainable), copy_tensor(ctx.beta, trainable), ctx.tag};
}

namespace {

std::uint64_t digest_tensor(std::uint64_t h, const std::string& name, const Tensor& t) {
    h = fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(name.data()), name.size()), h);
    if (!t.defined()) return h;
    const auto v = t.values();
    return fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(v.data()), v.size() * 8), h);
}

}  // namespace

std::uint64_t params_digest(const ModelParams& params) {
    std::uint64_t h = kFnvOffset;
    for (const auto& [name, t] : all_tensors(params)) h = digest_tensor(h, name, t);
    return h;
}

std::uint64_t context_digest(const EnvContext& ctx) {
    return digest_tensor(digest_tensor(kFnvOffset, "c", ctx.c), "beta", ctx.beta);
}

}  // namespace fnsda
