// Acceptance runner: one PASS/FAIL line per criterion.
//
//   fnsda_acceptance [--criterion N] [--work DIR] [--cli PATH]
//
// Trained checkpoints are cached in the work directory under a digest of
// their settings, so criteria 5 and 6 reuse the criterion 4 runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fnsda/binary_io.hpp"
#include "fnsda/config.hpp"
#include "fnsda/dataset_io.hpp"
#include "fnsda/errors.hpp"
#include "fnsda/fft.hpp"
#include "fnsda/gradcheck.hpp"
#include "fnsda/harness.hpp"
#include "fnsda/ns_solver.hpp"
#include "fnsda/rng.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace fnsda;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        if (!ok) pass = false;
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor random_tensor(Rng& rng, Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.normal();
    return Tensor(std::move(shape), std::move(v));
}

// ---------------------------------------------------------------------------
// Criterion 1

Outcome engine_correctness() {
    Outcome out;
    Rng rng(1);
    double roundtrip = 0.0, parseval = 0.0;
    for (std::size_t n = 2; n <= 64; n *= 2) {
        const Tensor x = random_tensor(rng, {4, n});
        roundtrip = std::max(roundtrip, oracle::max_abs_diff(vec(x), vec(irfft(rfft(x, 1), 1, n))));
        const ComplexTensor X = fft(ComplexTensor{x, Tensor({4, n}, std::vector<double>(4 * n, 0.0))}, 1);
        double et = 0.0, ef = 0.0;
        for (double v : x.values()) et += v * v;
        for (std::size_t i = 0; i < X.re.size(); ++i) ef += X.re.at(i) * X.re.at(i) + X.im.at(i) * X.im.at(i);
        parseval = std::max(parseval, std::fabs(ef / static_cast<double>(n) - et) / et);
    }
    out.check(roundtrip < 1e-10, "fft roundtrip max-abs " + fmt(roundtrip) + " (sizes 2..64)");
    out.check(parseval < 1e-10, "Parseval relative error " + fmt(parseval));

    std::size_t ops = 0;
    for (const auto& c : engine_self_test(42, 1e-4)) {
        ++ops;
        if (!c.report.passed()) out.check(false, "op gradient " + c.name + ": max rel " + fmt(c.report.max_rel_error));
    }
    out.check(true, std::to_string(ops) + " engine checks run");

    for (Family f : {Family::LV, Family::GS}) {
        ModelConfig cfg = default_model_config(f);
        cfg.layers = 1, cfg.width = 4, cfg.modes = 2, cfg.context_dim = 3;
        ModelParams p = init_model(cfg, 9);
        EnvContext ctx = make_context(cfg);
        Rng r(17);
        for (auto& v : ctx.c.mutable_values()) v = r.normal();
        for (auto& v : p.layers[0].gate_logits.mutable_values()) v = r.uniform(-2.0, 2.0);
        Shape in = state_shape(f);
        in.insert(in.begin(), 2);
        const Tensor u = random_tensor(r, in), w = random_tensor(r, in);
        std::vector<Tensor> params;
        for (const auto& nt : trainable_tensors(p)) params.push_back(nt.second);
        params.push_back(ctx.c);
        params.push_back(ctx.beta);
        const auto rep = finite_diff_check([&] { return sum(mul(model_forward(p, ctx, u), w)); }, params, 1e-5, 1e-4);
        out.check(rep.passed(), "tiny " + family_name(f) + " model gradient over " + std::to_string(rep.checked) +
                                    " coordinates, max rel " + fmt(rep.max_rel_error));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 2

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

Outcome solver_correctness() {
    Outcome out;
    const Rhs f = [](std::span<const double> u, std::span<double> o) { o[0] = u[0]; };
    const double p_rk4 = empirical_order([&](double u, double h) { return rk4_step(f, std::vector<double>{u}, h)[0]; }, 0.1);
    const double p_eul = empirical_order([&](double u, double h) { return euler_step(f, std::vector<double>{u}, h)[0]; }, 0.01);
    out.check(p_rk4 >= 3.8, "RK4 order " + fmt(p_rk4));
    out.check(p_eul >= 0.9, "Euler order " + fmt(p_eul));

    const double pi = std::numbers::pi;
    for (auto scheme : {ViscousScheme::crank_nicolson, ViscousScheme::exact}) {
        NsOptions opt;
        opt.viscous = scheme;
        opt.forcing = false;
        const NsSolver solver(opt, std::vector<double>(32 * 32, 0.0));
        std::vector<double> w(32 * 32);
        for (std::size_t i = 0; i < 32; ++i)
            for (std::size_t j = 0; j < 32; ++j) w[i * 32 + j] = std::cos(2.0 * pi * (static_cast<double>(i) + 3.0 * j) / 32.0);
        const auto w0 = w;
        const double t = 1.0;
        solver.advance(w, static_cast<std::size_t>(std::lround(t / opt.dt_internal)));
        const double decay = std::exp(-opt.viscosity * 4.0 * pi * pi * 10.0 * t);
        double err = 0.0;
        for (std::size_t c = 0; c < w.size(); ++c) err = std::max(err, std::fabs(w[c] - decay * w0[c]));
        out.check(err < 1e-6, std::string(scheme == ViscousScheme::exact ? "exact" : "Crank-Nicolson") +
                                  " single-mode decay error " + fmt(err));
    }
    Rng rng(4);
    const NsSolver solver(NsOptions{}, ns_default_forcing(32));
    double div = 0.0;
    for (int i = 0; i < 5; ++i) div = std::max(div, solver.divergence_norm(sample_initial_condition(Family::NS, rng, {}, 32)));
    out.check(div < 1e-12, "velocity divergence " + fmt(div));
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 3

Outcome structural_invariants() {
    Outcome out;
    Rng rng(3);
    const ComplexTensor modes{random_tensor(rng, {3, 8, 4}), random_tensor(rng, {3, 8, 4})};
    const Tensor logits = random_tensor(rng, {8});
    const SplitModes s = split_modes(modes, logits);
    double split = 0.0;
    for (std::size_t i = 0; i < modes.re.size(); ++i) {
        split = std::max(split, std::fabs(s.env.re.at(i) + s.shared.re.at(i) - modes.re.at(i)));
        split = std::max(split, std::fabs(s.env.im.at(i) + s.shared.im.at(i) - modes.im.at(i)));
    }
    out.check(split <= 1e-12, "mode split completeness " + fmt(split));

    for (Family f : {Family::LV, Family::GS}) {
        ModelConfig cfg = default_model_config(f);
        cfg.partition.kind = Partition::Kind::all_shared;
        if (f == Family::GS) cfg.width = 3, cfg.modes = 3;
        const ModelParams p = init_model(cfg, 5);
        const auto& layer = p.layers[0];
        const Tensor z = random_tensor(rng, cfg.axis == SpectralAxis::latent_1d ? Shape{2, cfg.width}
                                                                                : Shape{2, cfg.grid_side, cfg.grid_side, cfg.width});
        std::vector<std::complex<double>> w(layer.r_shared_re.size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = {layer.r_shared_re.at(i), layer.r_shared_im.at(i)};
        const auto ref = f == Family::LV ? oracle::fno_kernel_1d(vec(z), 2, cfg.width, w)
                                         : oracle::fno_kernel_2d(vec(z), 2, cfg.grid_side, cfg.width, cfg.modes, w);
        const double d = oracle::max_abs_diff(vec(spectral_kernel(cfg, layer, Tensor(), z)), ref);
        out.check(d <= 1e-12, "all-shared " + family_name(f) + " kernel vs plain spectral convolution " + fmt(d));
    }

    const Tensor w_env = random_tensor(rng, {6, 2, 2, 2, 5});
    const Tensor c1 = random_tensor(rng, {5}), c2 = random_tensor(rng, {5});
    const ComplexTensor lhs = condition_weights(w_env, add(scale(c1, -0.3), scale(c2, 2.5)));
    const ComplexTensor a = condition_weights(w_env, c1), b = condition_weights(w_env, c2);
    double lin = 0.0;
    for (std::size_t i = 0; i < lhs.re.size(); ++i) {
        lin = std::max(lin, std::fabs(lhs.re.at(i) - (-0.3 * a.re.at(i) + 2.5 * b.re.at(i))));
        lin = std::max(lin, std::fabs(lhs.im.at(i) - (-0.3 * a.im.at(i) + 2.5 * b.im.at(i))));
    }
    out.check(lin <= 1e-12, "conditioning linearity " + fmt(lin));

    DynamicsSettings d = default_dynamics_settings(Family::LV);
    d.n_tr = 3, d.n_ev = 1, d.horizon_T = 5.0, d.adapt_horizon_Tad = 2.0;
    const DatasetBundle data = generate_dataset(make_environment_set(d), 2);
    const ModelConfig cfg = default_model_config(Family::LV);
    TrainOptions to;
    to.steps = 30;
    to.warmup = 0;
    to.lr = 1e-2;
    const Checkpoint ck = train(data.train, cfg, to, 3);
    AdaptOptions ao;
    ao.steps = 20;
    ao.lr = 1e-2;
    const AdaptResult r = adapt(ck, {data.eval[0][0]}, AdaptTask::inter, data.environments.eval_envs[0], ao);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < cfg.context_dim; ++i) changed += r.context.c.at(i) != ck.mean_context.c.at(i);
    for (std::size_t l = 0; l < cfg.layers; ++l) changed += r.context.beta.at(l) != ck.mean_context.beta.at(l);
    const std::size_t expect = cfg.context_dim + cfg.layers;
    out.check(changed == expect && r.adapted_params == expect,
              "adaptation changed " + std::to_string(changed) + " of d_c + L = " + std::to_string(expect) + " scalars");
    out.check(r.frozen_digest_before == r.frozen_digest_after && r.frozen_digest_before == params_digest(ck.params),
              "frozen digest " + hex64(r.frozen_digest_before) + " unchanged");
    return out;
}

// ---------------------------------------------------------------------------
// Desk-scale LV runs (criteria 4-6)

struct DeskScale {
    ExperimentConfig config;
    EnvironmentSet envs;
    DatasetBundle data;
    EvalOptions eval;
};

constexpr std::uint64_t kDataSeed = 1;
constexpr std::uint64_t kTrainSeeds[3] = {7, 8, 9};

DeskScale desk_scale() {
    DeskScale d;
    ExperimentConfig& c = d.config;
    c = default_experiment(Family::LV);
    c.dynamics.n_tr = 10;
    c.dynamics.n_ev = 10;
    c.train.steps = 5000;
    c.train.lr = 1e-2;
    c.train.clip_norm = 1.0;
    c.train.warmup = 500;
    c.adapt.steps = 2000;
    c.adapt.lr = 1e-2;
    c.adapt.loss.horizon_steps = 10;
    d.envs = make_environment_set(c.dynamics);
    d.data = generate_dataset(d.envs, kDataSeed);
    d.eval.adapt = c.adapt;
    return d;
}

Checkpoint trained(const DeskScale& d, const fs::path& work, const Partition& partition, std::uint64_t seed, bool erm) {
    ExperimentConfig c = d.config;
    c.model.partition = partition;
    c.seed = seed;
    const std::string text = to_text(c) + (erm ? "erm\n" : "");
    std::string name = (erm ? "erm-" : "fnsda-") + partition_name(partition) + "-" + std::to_string(seed) + "-" +
                       hex64(fnv1a64(text)).substr(0, 12) + ".fnsc";
    std::replace(name.begin(), name.end(), ':', '_');
    const fs::path file = work / name;
    if (fs::exists(file)) return load_checkpoint(file);
    const auto t0 = std::chrono::steady_clock::now();
    Checkpoint ck = erm ? baseline_train_erm(d.data.train, c.model, c.train, seed) : train(d.data.train, c.model, c.train, seed);
    ck.config_text = text;
    std::printf("  trained %s in %.0f s (loss %.3e -> %.3e)\n", file.filename().c_str(),
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), ck.meta.initial_loss,
                ck.meta.final_loss);
    std::fflush(stdout);
    fs::create_directories(work);
    save_checkpoint(ck, file);
    return ck;
}

double inter_rmse(const DeskScale& d, const Checkpoint& ck, EvalMethod m) {
    EvalOptions o = d.eval;
    o.method = m;
    return run_inter_trajectory(ck, d.data.eval, d.envs.eval_envs, o).aggregate_rmse();
}

Outcome lv_generalization(const fs::path& work) {
    Outcome out;
    const DeskScale d = desk_scale();
    const Checkpoint ck = trained(d, work, Partition{}, kTrainSeeds[0], false);
    const Checkpoint erm = trained(d, work, Partition{}, kTrainSeeds[0], true);
    const double mean = inter_rmse(d, ck, EvalMethod::mean_context);
    const double adapted = inter_rmse(d, ck, EvalMethod::fnsda);
    const double erm_frozen = inter_rmse(d, erm, EvalMethod::frozen);
    const double erm_full = inter_rmse(d, erm, EvalMethod::full);
    out.check(adapted < 0.5 * mean, "(a) adapted RMSE " + fmt(adapted) + " < 0.5 x mean-context RMSE " + fmt(mean) +
                                        " (ratio " + fmt(adapted / mean) + ")");
    out.check(adapted < std::min(erm_frozen, erm_full),
              "(b) adapted RMSE " + fmt(adapted) + " < ERM " + fmt(erm_frozen) + " and ERM-adp " + fmt(erm_full));
    return out;
}

Outcome lv_extrapolation(const fs::path& work) {
    Outcome out;
    const DeskScale d = desk_scale();
    const Checkpoint ck = trained(d, work, Partition{}, kTrainSeeds[0], false);
    EvalOptions o = d.eval;
    o.method = EvalMethod::fnsda;
    const MetricsReport adapted = run_extra_trajectory(ck, d.data.eval, d.envs.eval_envs, o);
    o.method = EvalMethod::mean_context;
    const MetricsReport mean = run_extra_trajectory(ck, d.data.eval, d.envs.eval_envs, o);
    const double finite = 1.0 - static_cast<double>(adapted.diverged_count()) / static_cast<double>(adapted.rows.size());
    out.check(finite >= 0.95, "finite rollouts " + fmt(100.0 * finite) + "% of " + std::to_string(adapted.rows.size()));
    out.check(adapted.aggregate_rmse() < mean.aggregate_rmse(),
              "adapted RMSE on (T_ad, T] " + fmt(adapted.aggregate_rmse()) + " < mean-context " + fmt(mean.aggregate_rmse()));
    return out;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
}

Outcome partition_ablation(const fs::path& work) {
    Outcome out;
    const DeskScale d = desk_scale();
    std::map<std::string, std::vector<double>> runs;
    for (const char* name : {"auto", "low", "high", "cross:1:1"}) {
        for (std::uint64_t seed : kTrainSeeds) {
            const Checkpoint ck = trained(d, work, parse_partition(name), seed, false);
            runs[name].push_back(inter_rmse(d, ck, EvalMethod::fnsda));
        }
    }
    const auto& a = runs["auto"];
    // Measurement noise: half the seed range of the automatic runs.
    const double noise = 0.5 * (*std::max_element(a.begin(), a.end()) - *std::min_element(a.begin(), a.end()));
    const double med_auto = median3(a);
    out.notes.push_back("auto median " + fmt(med_auto) + ", noise " + fmt(noise) + " (seeds " + fmt(a[0]) + " " +
                        fmt(a[1]) + " " + fmt(a[2]) + ")");
    for (const char* name : {"low", "high", "cross:1:1"}) {
        const double med = median3(runs[name]);
        out.check(med_auto <= med + noise, std::string("auto ") + fmt(med_auto) + " <= " + name + " " + fmt(med) + " + noise");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 7

int run(const std::string& cmd) {
    const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
    return rc;
}

/// Relative path -> bytes for every regular file under root.
std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        files[fs::relative(e.path(), root).string()] = s.str();
    }
    return files;
}

Outcome cli_determinism(const fs::path& work, const std::string& cli) {
    Outcome out;
    if (cli.empty() || !fs::exists(cli)) {
        out.check(false, "CLI binary not found: '" + cli + "'");
        return out;
    }
    const fs::path root = work / "determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    {
        std::ofstream cfg(root / "lv.cfg");
        cfg << "[run]\nfamily = lv\nseed = 11\n[dynamics]\nn_train = 3\nn_eval = 2\nhorizon = 5\nadapt_horizon = 2\n"
               "[optim]\nwarmup = 0\n[model]\nwidth = 16\nmodes = 4\ncontext_dim = 4\n[train]\nsteps = 40\n[adapt]\nsteps = 15\n";
    }
    for (const char* rep : {"a", "b"}) {
        const fs::path r = root / rep;
        const std::string base = "\"" + cli + "\" ";
        const std::string cfg = " --config \"" + (root / "lv.cfg").string() + "\"";
        int rc = run(base + "generate" + cfg + " --out \"" + (r / "data").string() + "\"");
        rc |= run(base + "train --quiet" + cfg + " --data \"" + (r / "data").string() + "\" --out \"" + (r / "train").string() + "\"");
        rc |= run(base + "train --quiet --erm" + cfg + " --data \"" + (r / "data").string() + "\" --out \"" +
                  (r / "erm").string() + "\"");
        rc |= run(base + "adapt" + cfg + " --checkpoint \"" + (r / "train").string() + "\" --data \"" +
                  (r / "data").string() + "\" --task extra --out \"" + (r / "adapt").string() + "\"");
        for (const char* task : {"eval-inter", "eval-extra"}) {
            rc |= run(base + task + cfg + " --checkpoint \"" + (r / "train").string() + "\" --data \"" +
                      (r / "data").string() + "\" --out \"" + (r / (std::string(task) + "-fnsda")).string() + "\"");
            rc |= run(base + task + cfg + " --method full --checkpoint \"" + (r / "erm").string() + "\" --data \"" +
                      (r / "data").string() + "\" --out \"" + (r / (std::string(task) + "-erm")).string() + "\"");
        }
        rc |= run(base + "report \"" + (r / "eval-inter-fnsda").string() + "\" \"" + (r / "eval-extra-erm").string() +
                  "\" --out \"" + (r / "summary.csv").string() + "\"");
        out.check(rc == 0, std::string("pipeline run ") + rep + " exit status");
    }
    const auto a = snapshot(root / "a"), b = snapshot(root / "b");
    std::size_t differing = 0;
    for (const auto& [name, bytes] : a) {
        const auto it = b.find(name);
        if (it == b.end() || it->second != bytes) {
            ++differing;
            out.notes.push_back("     differs: " + name);
        }
    }
    out.check(a.size() == b.size() && differing == 0 && a.size() >= 10,
              std::to_string(a.size()) + " files compared, " + std::to_string(differing) + " differ");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    int only = 0;
    std::string work = "acceptance_work", cli;
    app.add_option("--criterion", only, "Run one criterion (1-7); all when omitted")->check(CLI::Range(0, 7));
    app.add_option("--work", work, "Directory for cached checkpoints and scratch runs");
    app.add_option("--cli", cli, "Path to the fnsda command-line tool");
    CLI11_PARSE(app, argc, argv);
    setvbuf(stdout, nullptr, _IOLBF, 0);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"engine correctness", engine_correctness},
        {"solver correctness", solver_correctness},
        {"structural invariants", structural_invariants},
        {"desk-scale LV inter-trajectory generalization", [&] { return lv_generalization(work); }},
        {"LV extra-trajectory sanity", [&] { return lv_extrapolation(work); }},
        {"partition ablation direction", [&] { return partition_ablation(work); }},
        {"CLI determinism", [&] { return cli_determinism(work, cli); }},
    };
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
        std::printf("criterion %zu (%s): %s [%.1f s]\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL", secs);
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
