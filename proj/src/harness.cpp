#include "fnsda/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <sstream>
#include <thread>

#include "fnsda/binary_io.hpp"
#include "fnsda/config.hpp"
#include "fnsda/errors.hpp"

namespace fnsda {

EvalMethod parse_eval_method(const std::string& s) {
    if (s == "fnsda") return EvalMethod::fnsda;
    if (s == "mean") return EvalMethod::mean_context;
    if (s == "frozen") return EvalMethod::frozen;
    if (s == "full") return EvalMethod::full;
    throw ConfigError("unknown evaluation method '" + s + "' (expected fnsda, mean, frozen or full)");
}

std::string eval_method_name(EvalMethod m) {
    switch (m) {
        case EvalMethod::fnsda: return "fnsda";
        case EvalMethod::mean_context: return "mean";
        case EvalMethod::frozen: return "frozen";
        case EvalMethod::full: return "full";
    }
    return "?";
}

namespace {

Predictor model_predictor(std::shared_ptr<const ModelParams> params, std::shared_ptr<const EnvContext> ctx,
                          const Shape& state, double dt) {
    const Integrator integrator = integrator_for(params->config.family);
    return [=](std::span<const double> initial, std::size_t n) {
        Shape shape{1};
        shape.insert(shape.end(), state.begin(), state.end());
        const Tensor u0(shape, std::vector<double>(initial.begin(), initial.end()));
        const VectorField g = [&](const Tensor& u) { return model_forward(*params, *ctx, u); };
        return rollout(integrator, g, u0, n, dt);
    };
}

/// Runs fn(e) for every environment on up to `threads` workers; rethrows the
/// first failure.
template <class Fn>
void for_each_env(std::size_t n, unsigned threads, Fn fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (threads == 1) {
        for (std::size_t e = 0; e < n; ++e) fn(e);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t e; (e = next.fetch_add(1)) < n;) {
                try {
                    fn(e);
                } catch (...) {
                    errors[e] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

MetricsReport run_task(AdaptTask task, const std::vector<std::vector<Trajectory>>& eval_data,
                       const std::vector<SystemSpec>& envs, const AdaptHook& hook, const EvalOptions& options) {
    if (eval_data.size() != envs.size()) throw UsageError("evaluation data and environment lists differ in size");
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::vector<TrajectoryRow>> rows(envs.size());

    for_each_env(envs.size(), options.threads, [&](std::size_t e) {
        const auto& trajs = eval_data[e];
        const SystemSpec& env = envs[e];
        if (trajs.size() < 2) throw UsageError("evaluation environment " + std::to_string(e) + " needs 1 + n_ev trajectories");
        const std::size_t n = env.n_steps();
        const std::size_t s = task == AdaptTask::inter ? 0 : env.adapt_steps();

        std::vector<Trajectory> adapt_data;
        if (task == AdaptTask::inter) {
            adapt_data.push_back(trajs[0]);
        } else {
            for (std::size_t j = 1; j < trajs.size(); ++j) adapt_data.push_back(prefix(trajs[j], s + 1));
        }
        const Predictor predict = hook(e, adapt_data);

        for (std::size_t j = 1; j < trajs.size(); ++j) {
            const Trajectory& t = trajs[j];
            if (t.n_frames() != n + 1) throw UsageError("evaluation trajectory has the wrong length");
            const std::size_t fs = t.frame_size();
            const std::vector<double> pred = predict(t.frame(s), n - s);
            const std::span<const double> truth = std::span<const double>(t.states).subspan((s + 1) * fs);
            TrajectoryRow row{e, j, 0.0, 0.0, false};
            if (pred.size() != truth.size()) throw ShapeError("predictor returned the wrong number of values");
            if (!all_finite(pred)) {
                row.diverged = true;
                row.rmse = row.mape = std::numeric_limits<double>::quiet_NaN();
            } else {
                row.rmse = rmse(pred, truth);
                row.mape = mape(pred, truth, options.mape_eps);
            }
            rows[e].push_back(row);
        }
    });

    MetricsReport rep;
    rep.run_id = options.run_id;
    rep.family = envs.empty() ? "" : family_name(envs.front().family);
    rep.task = task == AdaptTask::inter ? "inter" : "extra";
    for (auto& r : rows) rep.rows.insert(rep.rows.end(), r.begin(), r.end());
    rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

std::size_t adapted_count(const Checkpoint& ck, EvalMethod m) {
    switch (m) {
        case EvalMethod::fnsda: return count_adapted_params(ck.params.config);
        case EvalMethod::full: return count_params(ck.params);
        default: return 0;
    }
}

}  // namespace

AdaptHook model_hook(const Checkpoint& checkpoint, const std::vector<SystemSpec>& envs, AdaptTask task,
                     const EvalOptions& options) {
    return [&checkpoint, &envs, task, options](std::size_t e, const std::vector<Trajectory>& data) -> Predictor {
        const SystemSpec& env = envs[e];
        const Shape state = state_shape(env);
        switch (options.method) {
            case EvalMethod::fnsda: {
                AdaptResult r = adapt(checkpoint, data, task, env, options.adapt);
                if (r.frozen_digest_before != r.frozen_digest_after) throw UsageError("adaptation modified frozen parameters");
                return model_predictor(std::make_shared<const ModelParams>(clone_params(checkpoint.params, false)),
                                       std::make_shared<const EnvContext>(std::move(r.context)), state, env.dt);
            }
            case EvalMethod::full: {
                FullAdaptResult r = baseline_adapt_full(checkpoint, data, task, env, options.adapt);
                return model_predictor(std::make_shared<const ModelParams>(std::move(r.params)),
                                       std::make_shared<const EnvContext>(clone_context(checkpoint.mean_context, false)),
                                       state, env.dt);
            }
            case EvalMethod::mean_context:
                if (checkpoint.params.config.use_context && !checkpoint.mean_context.c.defined()) {
                    throw UsageError("checkpoint has no mean context");
                }
                [[fallthrough]];
            case EvalMethod::frozen:
                return model_predictor(std::make_shared<const ModelParams>(clone_params(checkpoint.params, false)),
                                       std::make_shared<const EnvContext>(clone_context(checkpoint.mean_context, false)),
                                       state, env.dt);
        }
        throw UsageError("unknown evaluation method");
    };
}

AdaptHook oracle_hook(const std::vector<SystemSpec>& envs) {
    return [&envs](std::size_t e, const std::vector<Trajectory>&) -> Predictor {
        const SystemSpec spec = envs[e];
        return [spec](std::span<const double> initial, std::size_t n) {
            SystemSpec s = spec;
            s.horizon_T = static_cast<double>(n) * s.dt;
            s.adapt_horizon_Tad = std::min(s.adapt_horizon_Tad, 0.0);
            const Trajectory t = integrate_trajectory(s, initial, 0, 0);
            return std::vector<double>(t.states.begin() + static_cast<std::ptrdiff_t>(t.frame_size()), t.states.end());
        };
    };
}

MetricsReport run_inter_trajectory(const std::vector<std::vector<Trajectory>>& eval_data,
                                   const std::vector<SystemSpec>& envs, const AdaptHook& hook,
                                   const EvalOptions& options) {
    return run_task(AdaptTask::inter, eval_data, envs, hook, options);
}

MetricsReport run_extra_trajectory(const std::vector<std::vector<Trajectory>>& eval_data,
                                   const std::vector<SystemSpec>& envs, const AdaptHook& hook,
                                   const EvalOptions& options) {
    return run_task(AdaptTask::extra, eval_data, envs, hook, options);
}

MetricsReport run_inter_trajectory(const Checkpoint& checkpoint, const std::vector<std::vector<Trajectory>>& eval_data,
                                   const std::vector<SystemSpec>& envs, const EvalOptions& options) {
    MetricsReport rep = run_task(AdaptTask::inter, eval_data, envs, model_hook(checkpoint, envs, AdaptTask::inter, options),
                                 options);
    rep.adapted_params = adapted_count(checkpoint, options.method);
    rep.config_digest = fnv1a64(checkpoint.config_text);
    return rep;
}

MetricsReport run_extra_trajectory(const Checkpoint& checkpoint, const std::vector<std::vector<Trajectory>>& eval_data,
                                   const std::vector<SystemSpec>& envs, const EvalOptions& options) {
    MetricsReport rep = run_task(AdaptTask::extra, eval_data, envs, model_hook(checkpoint, envs, AdaptTask::extra, options),
                                 options);
    rep.adapted_params = adapted_count(checkpoint, options.method);
    rep.config_digest = fnv1a64(checkpoint.config_text);
    return rep;
}

// ---------------------------------------------------------------------------

std::vector<SpectrumRow> spectrum(const ModelParams& params, const EnvContext& ctx) {
    NoGradGuard no_grad;
    const ModelConfig& cfg = params.config;
    const auto mag = mode_magnitudes(cfg);
    const std::size_t P = cfg.mode_count(), C = cfg.spectral_channels();
    std::vector<SpectrumRow> rows;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        const Tensor gate = hard_sigmoid(layer.gate_logits);
        ComplexTensor env;
        if (cfg.has_env_branch() && ctx.c.defined()) env = condition_weights(layer.w_env, ctx.c);
        for (std::size_t p = 0; p < P; ++p) {
            SpectrumRow r{l, p, mag[p], gate.at(p), 0.0, 0.0};
            for (std::size_t i = 0; i < C * C; ++i) {
                const double re = layer.r_shared_re.at(p * C * C + i), im = layer.r_shared_im.at(p * C * C + i);
                r.shared_energy += re * re + im * im;
                if (env.re.defined()) {
                    const double er = env.re.at(p * C * C + i), ei = env.im.at(p * C * C + i);
                    r.env_energy += er * er + ei * ei;
                }
            }
            rows.push_back(r);
        }
    }
    return rows;
}

std::string spectrum_csv(const std::vector<SpectrumRow>& rows) {
    std::ostringstream o;
    o << "layer,mode,magnitude,gate,shared_energy,env_energy\n";
    for (const auto& r : rows) {
        o << r.layer << "," << r.mode << "," << format_double(r.magnitude) << "," << format_double(r.gate) << ","
          << format_double(r.shared_energy) << "," << format_double(r.env_energy) << "\n";
    }
    return o.str();
}

}  // namespace fnsda
