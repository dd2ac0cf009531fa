// fnsda command-line interface.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>

#include "CLI11.hpp"
#include "fnsda/binary_io.hpp"
#include "fnsda/config.hpp"
#include "fnsda/dataset_io.hpp"
#include "fnsda/errors.hpp"
#include "fnsda/gradcheck.hpp"
#include "fnsda/harness.hpp"

namespace fs = std::filesystem;
using namespace fnsda;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct Common {
    std::string config;
    std::string family;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    std::string partition;
    std::string reg;
    double lambda = -1.0;
    std::size_t epochs = 0;
    std::size_t steps = 0;
    std::size_t adapt_steps = 0;
    std::string activation;
    unsigned threads = 1;
};

/// Stages files in a sibling temp directory and renames it into place on
/// commit, so a failed command leaves no partial output.
class OutputDir {
public:
    explicit OutputDir(const std::string& out) : final_(out) {
        if (out.empty()) throw UsageError("--out is required");
        if (fs::exists(final_) && !fs::is_empty(final_) && !fs::exists(final_ / "manifest.txt")) {
            throw UsageError("refusing to replace non-run directory '" + out + "'");
        }
        tmp_ = fs::path(final_.string() + ".partial-" + std::to_string(::getpid()));
        fs::remove_all(tmp_);
        fs::create_directories(tmp_);
    }
    ~OutputDir() {
        std::error_code ec;
        if (!committed_) fs::remove_all(tmp_, ec);
    }

    fs::path path(const std::string& name) const { return tmp_ / name; }

    void add(const std::string& name) { files_.push_back(name); }
    void write_text(const std::string& name, const std::string& text) {
        write_text_atomic(path(name), text);
        add(name);
    }

    void commit() {
        std::string manifest;
        for (const auto& f : files_) {
            manifest += f + " " + hex64(file_digest(path(f))) + " " + std::to_string(fs::file_size(path(f))) + "\n";
        }
        write_text_atomic(path("manifest.txt"), manifest);
        fs::remove_all(final_);
        fs::rename(tmp_, final_);
        committed_ = true;
    }

private:
    fs::path final_, tmp_;
    std::vector<std::string> files_;
    bool committed_ = false;
};

void add_common(CLI::App* app, Common& c, bool model_flags) {
    app->add_option("--config", c.config, "Experiment config file");
    app->add_option("--family", c.family, "System family")->check(CLI::IsMember({"lv", "go", "gs", "ns", "LV", "GO", "GS", "NS"}));
    app->add_option_function<std::uint64_t>("--seed", [&c](std::uint64_t s) { c.seed = s, c.seed_set = true; }, "Seed");
    app->add_option("--out", c.out, "Output directory");
    app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
    if (!model_flags) return;
    app->add_option("--partition", c.partition, "auto, low, high, cross:P:Q or all-shared");
    app->add_option("--reg", c.reg, "Context regularizer")->check(CLI::IsMember({"l2", "l1"}));
    app->add_option("--lambda", c.lambda, "Context regularization weight")->check(CLI::NonNegativeNumber);
    app->add_option("--epochs", c.epochs, "Training epochs (one step per environment each)");
    app->add_option("--steps", c.steps, "Training steps on the shared parameters");
    app->add_option("--adapt-steps", c.adapt_steps, "Adaptation steps");
    app->add_option("--activation", c.activation, "Activation")->check(CLI::IsMember({"swish", "relu"}));
}

ExperimentConfig resolve(const Common& c, std::optional<Family> known = std::nullopt) {
    Family fallback = known.value_or(c.family.empty() ? Family::LV : parse_family(c.family));
    if (!c.family.empty() && parse_family(c.family) != fallback) throw ConfigError("--family does not match the data");
    ExperimentConfig cfg = c.config.empty() ? default_experiment(fallback) : load_experiment(c.config, fallback);
    if (known && cfg.family != *known) throw ConfigError("config family does not match the data");
    if (!c.family.empty() && cfg.family != parse_family(c.family)) throw ConfigError("--family contradicts the config");
    if (c.seed_set) cfg.seed = c.seed;
    if (c.threads > 1) cfg.threads = c.threads;
    if (!c.partition.empty()) cfg.model.partition = parse_partition(c.partition);
    if (!c.reg.empty()) cfg.train.loss.reg = cfg.adapt.loss.reg = parse_regularizer(c.reg);
    if (c.lambda >= 0.0) cfg.train.loss.lambda = cfg.adapt.loss.lambda = c.lambda;
    if (!c.activation.empty()) cfg.model.activation = parse_activation(c.activation);
    if (c.steps) cfg.train.steps = c.steps;
    if (c.adapt_steps) cfg.adapt.steps = c.adapt_steps;
    if (c.epochs) cfg.train.steps = c.epochs * make_environment_set(cfg.dynamics).train_envs.size();
    cfg.train.warmup = std::min(cfg.train.warmup, cfg.train.steps);
    validate(cfg);
    return cfg;
}

fs::path dataset_file(const std::string& p) {
    fs::path path(p);
    return fs::is_directory(path) ? path / "dataset.fnsd" : path;
}

fs::path checkpoint_file(const std::string& p) {
    fs::path path(p);
    return fs::is_directory(path) ? path / "checkpoint.fnsc" : path;
}

int cmd_generate(const Common& c) {
    const ExperimentConfig cfg = resolve(c);
    const EnvironmentSet envs = make_environment_set(cfg.dynamics);
    const DatasetBundle bundle = generate_dataset(envs, cfg.seed, cfg.threads);
    OutputDir out(c.out);
    write_dataset(bundle, out.path("dataset.fnsd"));
    out.add("dataset.fnsd");
    out.write_text("config.txt", to_text(cfg));
    out.commit();
    std::printf("generated %zu train and %zu eval environments into %s\n", envs.train_envs.size(),
                envs.eval_envs.size(), c.out.c_str());
    return 0;
}

int cmd_verify(const std::string& data) {
    const DatasetCheck check = verify_dataset(dataset_file(data));
    for (const auto& p : check.problems) std::printf("problem: %s\n", p.c_str());
    std::printf("%s: %zu trajectories, digest %s\n", check.ok ? "ok" : "FAILED", check.trajectories,
                hex64(check.digest).c_str());
    return check.ok ? 0 : 1;
}

int cmd_train(const Common& c, const std::string& data, bool erm, bool quiet) {
    const DatasetBundle bundle = read_dataset(dataset_file(data));
    ExperimentConfig cfg = resolve(c, bundle.environments.family);
    if (erm) {
        cfg.model.partition = Partition{};
        cfg.model.partition.kind = Partition::Kind::all_shared;
        cfg.model.use_context = false;
    }
    OutputDir out(c.out);
    TrainOptions opts = cfg.train;
    opts.stop = &g_stop;
    if (!quiet) {
        opts.progress = [](std::size_t step, double loss) {
            if (step % 500 == 0) std::fprintf(stderr, "step %zu loss %.6e\n", step, loss);
        };
    }
    std::signal(SIGINT, on_sigint);
    Checkpoint ck = train(bundle.train, cfg.model, opts, cfg.seed);
    std::signal(SIGINT, SIG_DFL);
    ck.config_text = to_text(cfg);
    save_checkpoint(ck, out.path("checkpoint.fnsc"));
    out.add("checkpoint.fnsc");
    out.write_text("config.txt", ck.config_text);
    std::string loss = "step,loss\n";
    for (std::size_t i = 0; i < ck.loss_history.size(); ++i) loss += std::to_string(i) + "," + format_double(ck.loss_history[i]) + "\n";
    out.write_text("loss.csv", loss);
    out.write_text("dataset_digest.txt", hex64(file_digest(dataset_file(data))) + "\n");
    out.commit();
    std::printf("trained %zu steps: loss %.6e -> %.6e%s\n", ck.meta.steps, ck.meta.initial_loss, ck.meta.final_loss,
                ck.meta.interrupted ? " (interrupted)" : "");
    return ck.meta.interrupted ? 130 : 0;
}

ExperimentConfig checkpoint_config(const Checkpoint& ck, const Common& c) {
    ExperimentConfig cfg = parse_experiment(ck.config_text, ck.params.config.family);
    if (!c.config.empty()) cfg = load_experiment(c.config, cfg.family);
    if (c.adapt_steps) cfg.adapt.steps = c.adapt_steps;
    if (c.lambda >= 0.0) cfg.adapt.loss.lambda = c.lambda;
    if (!c.reg.empty()) cfg.adapt.loss.reg = parse_regularizer(c.reg);
    if (c.threads > 1) cfg.threads = c.threads;
    return cfg;
}

int cmd_adapt(const Common& c, const std::string& ckpt, const std::string& data, const std::string& task_name) {
    const Checkpoint ck = load_checkpoint(checkpoint_file(ckpt));
    const DatasetBundle bundle = read_dataset(dataset_file(data));
    const ExperimentConfig cfg = checkpoint_config(ck, c);
    const AdaptTask task = task_name == "inter" ? AdaptTask::inter : AdaptTask::extra;
    const auto& envs = bundle.environments.eval_envs;
    OutputDir out(c.out);
    std::ostringstream text;
    text << "env,task,steps,final_loss,frozen_digest,kind,index,value\n";
    for (std::size_t e = 0; e < envs.size(); ++e) {
        std::vector<Trajectory> adapt_data;
        if (task == AdaptTask::inter) {
            adapt_data.push_back(bundle.eval[e].at(0));
        } else {
            for (std::size_t j = 1; j < bundle.eval[e].size(); ++j)
                adapt_data.push_back(prefix(bundle.eval[e][j], envs[e].adapt_steps() + 1));
        }
        const AdaptResult r = adapt(ck, adapt_data, task, envs[e], cfg.adapt);
        if (r.frozen_digest_before != r.frozen_digest_after) throw UsageError("frozen parameters changed");
        const std::string head = std::to_string(e) + "," + task_name + "," + std::to_string(r.steps_run) + "," +
                                 format_double(r.loss_history.empty() ? 0.0 : r.loss_history.back()) + "," +
                                 hex64(r.frozen_digest_after) + ",";
        for (std::size_t i = 0; i < r.context.c.size(); ++i)
            text << head << "c," << i << "," << format_double(r.context.c.at(i)) << "\n";
        for (std::size_t i = 0; i < r.context.beta.size(); ++i)
            text << head << "beta," << i << "," << format_double(r.context.beta.at(i)) << "\n";
    }
    out.write_text("contexts.csv", text.str());
    out.commit();
    std::printf("adapted %zu environments (%s)\n", envs.size(), task_name.c_str());
    return 0;
}

int cmd_eval(const Common& c, const std::string& ckpt, const std::string& data, AdaptTask task,
             const std::string& method, const std::string& run_id, bool timing) {
    const Checkpoint ck = load_checkpoint(checkpoint_file(ckpt));
    const DatasetBundle bundle = read_dataset(dataset_file(data));
    const ExperimentConfig cfg = checkpoint_config(ck, c);
    EvalOptions opts;
    opts.method = parse_eval_method(method);
    opts.adapt = cfg.adapt;
    opts.mape_eps = cfg.mape_eps;
    opts.threads = cfg.threads;
    opts.run_id = run_id;
    OutputDir out(c.out);
    MetricsReport rep = task == AdaptTask::inter
                            ? run_inter_trajectory(ck, bundle.eval, bundle.environments.eval_envs, opts)
                            : run_extra_trajectory(ck, bundle.eval, bundle.environments.eval_envs, opts);
    if (!timing) rep.wall_ms = 0.0;
    out.write_text("report.csv", to_csv(rep));
    out.write_text("summary.txt", format_report(rep));
    out.write_text("provenance.txt", "checkpoint " + hex64(file_digest(checkpoint_file(ckpt))) + "\ndataset " +
                                         hex64(file_digest(dataset_file(data))) + "\nconfig " +
                                         hex64(rep.config_digest) + "\nmethod " + method + "\n");
    out.commit();
    std::cout << format_report(rep);
    return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_file) {
    std::vector<MetricsReport> reports;
    for (const auto& r : runs) {
        fs::path p(r);
        if (fs::is_directory(p)) p /= "report.csv";
        const auto bytes = read_file(p);
        for (auto& rep : parse_csv(std::string(bytes.begin(), bytes.end()))) reports.push_back(std::move(rep));
    }
    const std::string csv = summary_csv(reports);
    if (out_file.empty()) std::cout << csv;
    else write_text_atomic(out_file, csv);
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    bool ok = true;
    for (const auto& check : engine_self_test(seed, 1e-4)) {
        std::printf("%-24s %s  max_rel=%.3e  checked=%zu\n", check.name.c_str(), check.report.passed() ? "ok  " : "FAIL",
                    check.report.max_rel_error, check.report.checked);
        for (const auto& f : check.report.failures) std::printf("    %s\n", f.c_str());
        ok = ok && check.report.passed();
    }
    return ok ? 0 : 1;
}

int cmd_spectrum(const std::string& ckpt, const std::string& out_file, int env) {
    const Checkpoint ck = load_checkpoint(checkpoint_file(ckpt));
    EnvContext ctx = ck.mean_context;
    if (env >= 0) ctx = ck.contexts.at(static_cast<std::size_t>(env));
    const std::string csv = spectrum_csv(spectrum(ck.params, ctx));
    if (out_file.empty()) std::cout << csv;
    else write_text_atomic(out_file, csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fourier neural simulators with domain adaptation"};
    app.require_subcommand(1);
    Common c;
    std::string data, ckpt, task = "inter", method = "fnsda", run_id = "run", out_file;
    std::vector<std::string> runs;
    bool erm = false, quiet = false, timing = false;
    std::uint64_t gc_seed = 1;
    int env = -1;

    auto* gen = app.add_subcommand("generate", "Generate a dataset");
    add_common(gen, c, false);
    auto* ver = app.add_subcommand("verify", "Check dataset integrity");
    ver->add_option("data", data, "Dataset file or directory")->required();
    auto* tr = app.add_subcommand("train", "Train a model");
    add_common(tr, c, true);
    tr->add_option("--data", data, "Dataset file or directory")->required();
    tr->add_flag("--erm", erm, "Train the ERM baseline");
    tr->add_flag("--quiet", quiet, "No progress output");
    auto* ad = app.add_subcommand("adapt", "Adapt contexts to the evaluation environments");
    add_common(ad, c, true);
    ad->add_option("--checkpoint", ckpt, "Checkpoint file or run directory")->required();
    ad->add_option("--data", data, "Dataset file or directory")->required();
    ad->add_option("--task", task, "inter or extra")->check(CLI::IsMember({"inter", "extra"}));
    CLI::App* evals[2];
    const char* names[2] = {"eval-inter", "eval-extra"};
    for (int i = 0; i < 2; ++i) {
        evals[i] = app.add_subcommand(names[i], i == 0 ? "Inter-trajectory evaluation" : "Extra-trajectory evaluation");
        add_common(evals[i], c, true);
        evals[i]->add_option("--checkpoint", ckpt, "Checkpoint file or run directory")->required();
        evals[i]->add_option("--data", data, "Dataset file or directory")->required();
        evals[i]->add_option("--method", method, "fnsda, mean, frozen or full")
            ->check(CLI::IsMember({"fnsda", "mean", "frozen", "full"}));
        evals[i]->add_option("--run-id", run_id, "Run identifier in the report");
        evals[i]->add_flag("--timing", timing, "Record wall-clock time in the report");
    }
    auto* rep = app.add_subcommand("report", "Merge run reports into one CSV row per run and environment");
    rep->add_option("runs", runs, "Run directories or report.csv files")->required();
    rep->add_option("--out", out_file, "Output CSV (stdout when omitted)");
    auto* gc = app.add_subcommand("gradcheck", "Engine self-test");
    gc->add_option("--seed", gc_seed, "Seed");
    auto* sp = app.add_subcommand("spectrum", "Per-mode gate values and spectral energy");
    sp->add_option("--checkpoint", ckpt, "Checkpoint file or run directory")->required();
    sp->add_option("--out", out_file, "Output CSV (stdout when omitted)");
    sp->add_option("--env", env, "Training environment context (mean context when omitted)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (gen->parsed()) return cmd_generate(c);
        if (ver->parsed()) return cmd_verify(data);
        if (tr->parsed()) return cmd_train(c, data, erm, quiet);
        if (ad->parsed()) return cmd_adapt(c, ckpt, data, task);
        if (evals[0]->parsed()) return cmd_eval(c, ckpt, data, AdaptTask::inter, method, run_id, timing);
        if (evals[1]->parsed()) return cmd_eval(c, ckpt, data, AdaptTask::extra, method, run_id, timing);
        if (rep->parsed()) return cmd_report(runs, out_file);
        if (gc->parsed()) return cmd_gradcheck(gc_seed);
        if (sp->parsed()) return cmd_spectrum(ckpt, out_file, env);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
