#include "fnsda/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fnsda/errors.hpp"

namespace fnsda {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

ExperimentConfig default_experiment(Family f) {
    ExperimentConfig c;
    c.family = f;
    c.dynamics = default_dynamics_settings(f);
    c.model = default_model_config(f);
    if (is_spatial(f)) c.model.grid_side = c.dynamics.grid->side;
    const bool fast = f == Family::LV || f == Family::NS;
    const std::size_t n_env = c.dynamics.train_values.empty() ? 1 : make_environment_set(c.dynamics).train_envs.size();
    c.train.lr = fast ? 5e-4 : 1e-3;
    c.train.weight_decay = fast ? 1e-4 : 5e-4;
    c.train.steps = 50000 * n_env;
    c.train.warmup = 500;
    c.train.batch_trajectories = is_spatial(f) ? 4 : 16;
    c.train.loss.lambda = 1e-4;
    c.train.loss.integrator = integrator_for(f);
    c.adapt.lr = c.train.lr;
    c.adapt.weight_decay = c.train.weight_decay;
    c.adapt.steps = 20000;
    c.adapt.loss = c.train.loss;
    return c;
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    }
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& s : split_list(v)) out.push_back(to_double(key, s));
    if (out.empty()) throw ConfigError("'" + key + "' expects a non-empty list");
    return out;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
    return s;
}

struct Entry {
    std::string section, key, value;
    std::size_t line;
};

std::vector<Entry> tokenize(const std::string& text) {
    std::vector<Entry> out;
    std::istringstream in(text);
    std::string raw, section = "run";
    std::size_t line = 0;
    const std::vector<std::string> sections{"run", "dynamics", "model", "optim", "train", "adapt", "eval"};
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (s.empty()) continue;
        const std::string where = "line " + std::to_string(line) + ": ";
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError(where + "malformed section header");
            section = trim(s.substr(1, s.size() - 2));
            if (std::find(sections.begin(), sections.end(), section) == sections.end()) {
                throw ConfigError(where + "unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        Entry e{section, trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line};
        if (e.key.empty()) throw ConfigError(where + "empty key");
        out.push_back(std::move(e));
    }
    return out;
}

void apply_dynamics(ExperimentConfig& c, const std::string& key, const std::string& v) {
    DynamicsSettings& d = c.dynamics;
    auto& ic = d.ic;
    if (key == "dt") d.dt = to_double(key, v);
    else if (key == "horizon") d.horizon_T = to_double(key, v);
    else if (key == "adapt_horizon") d.adapt_horizon_Tad = to_double(key, v);
    else if (key == "substeps") d.substeps = to_u64(key, v);
    else if (key == "n_train") d.n_tr = to_u64(key, v);
    else if (key == "n_eval") d.n_ev = to_u64(key, v);
    else if (key == "grid_spacing") {
        if (!d.grid) throw ConfigError("grid_spacing applies only to spatial families");
        d.grid->spacing = to_double(key, v);
    } else if (key == "grid_side") {
        if (!d.grid) throw ConfigError("grid_side applies only to spatial families");
        d.grid->side = to_u64(key, v);
    } else if (key == "vary") {
        const auto names = split_list(v);
        if (names.empty()) throw ConfigError("'vary' expects at least one parameter name");
        std::vector<std::vector<double>> tr(names.size()), ev(names.size());
        for (std::size_t i = 0; i < names.size(); ++i) {
            auto it = std::find(d.varied.begin(), d.varied.end(), names[i]);
            if (it != d.varied.end()) {
                tr[i] = d.train_values[it - d.varied.begin()];
                ev[i] = d.eval_values[it - d.varied.begin()];
            }
            d.fixed.erase(names[i]);
        }
        d.varied = names;
        d.train_values = tr;
        d.eval_values = ev;
    } else if (key.rfind("train_", 0) == 0 || key.rfind("eval_", 0) == 0) {
        const bool train = key[0] == 't';
        const std::string name = key.substr(train ? 6 : 5);
        auto it = std::find(d.varied.begin(), d.varied.end(), name);
        if (it == d.varied.end()) throw ConfigError("'" + key + "': '" + name + "' is not a varied parameter");
        (train ? d.train_values : d.eval_values)[it - d.varied.begin()] = to_doubles(key, v);
    } else if (key == "lv_rhs_variant") {
        if (v != "standard" && v != "printed") throw ConfigError("lv_rhs_variant expects standard or printed");
        d.fixed["lv_variant"] = v == "printed" ? 1.0 : 0.0;
    } else if (key == "ns_viscous") {
        if (v != "cn" && v != "exact") throw ConfigError("ns_viscous expects cn or exact");
        d.fixed["ns_viscous"] = v == "exact" ? 1.0 : 0.0;
    } else if (key == "ic_lv") {
        const auto r = to_doubles(key, v);
        if (r.size() != 2) throw ConfigError("ic_lv expects lo, hi");
        ic.lv_range = {{r[0], r[1]}, {r[0], r[1]}};
    } else if (key == "ic_go") {
        const auto r = to_doubles(key, v);
        if (r.size() != 14) throw ConfigError("ic_go expects 7 lo, hi pairs");
        for (std::size_t i = 0; i < 7; ++i) ic.go_ranges[i] = {r[2 * i], r[2 * i + 1]};
    } else if (key == "ic_gs_squares") ic.gs_squares = to_u64(key, v);
    else if (key == "ic_gs_square_size") ic.gs_square_size = to_u64(key, v);
    else if (key == "ic_gs_u") ic.gs_square_u = to_double(key, v);
    else if (key == "ic_gs_v") ic.gs_square_v = to_double(key, v);
    else if (key == "ic_ns_alpha") ic.ns_alpha = to_double(key, v);
    else if (key == "ic_ns_tau") ic.ns_tau = to_double(key, v);
    else if (key == "ic_ns_sigma") ic.ns_sigma = to_double(key, v);
    else if (d.fixed.count(key)) d.fixed[key] = to_double(key, v);
    else throw ConfigError("unknown [dynamics] key '" + key + "'");
}

void apply(ExperimentConfig& c, const Entry& e) {
    const std::string& k = e.key;
    const std::string& v = e.value;
    ModelConfig& m = c.model;
    TrainOptions& t = c.train;
    AdaptOptions& a = c.adapt;
    if (e.section == "run") {
        if (k == "family") return;  // consumed before defaults are built
        if (k == "seed") c.seed = to_u64(k, v);
        else if (k == "threads") c.threads = static_cast<unsigned>(std::max<std::uint64_t>(1, to_u64(k, v)));
        else throw ConfigError("unknown [run] key '" + k + "'");
    } else if (e.section == "dynamics") {
        apply_dynamics(c, k, v);
    } else if (e.section == "model") {
        if (k == "layers") m.layers = to_u64(k, v);
        else if (k == "width") m.width = to_u64(k, v);
        else if (k == "modes") m.modes = to_u64(k, v);
        else if (k == "context_dim") m.context_dim = to_u64(k, v);
        else if (k == "activation") m.activation = parse_activation(v);
        else if (k == "partition") m.partition = parse_partition(v);
        else if (k == "partition_count") m.partition.count = to_u64(k, v);
        else if (k == "partition_pad") m.partition.pad_final_group = to_bool(k, v);
        else if (k == "use_context") m.use_context = to_bool(k, v);
        else throw ConfigError("unknown [model] key '" + k + "'");
    } else if (e.section == "optim") {
        if (k == "lr") t.lr = to_double(k, v);
        else if (k == "context_lr") t.context_lr = to_double(k, v);
        else if (k == "weight_decay") t.weight_decay = to_double(k, v);
        else if (k == "warmup") t.warmup = to_u64(k, v);
        else if (k == "min_lr") t.min_lr = to_double(k, v);
        else if (k == "clip_norm") t.clip_norm = to_double(k, v);
        else throw ConfigError("unknown [optim] key '" + k + "'");
    } else if (e.section == "train") {
        if (k == "steps") t.steps = to_u64(k, v);
        else if (k == "batch") t.batch_trajectories = to_u64(k, v);
        else if (k == "accumulate_envs") t.accumulate_envs = to_bool(k, v);
        else if (k == "lambda") t.loss.lambda = to_double(k, v);
        else if (k == "reg") t.loss.reg = parse_regularizer(v);
        else if (k == "horizon_steps") t.loss.horizon_steps = to_u64(k, v);
        else throw ConfigError("unknown [train] key '" + k + "'");
    } else if (e.section == "adapt") {
        if (k == "steps") a.steps = to_u64(k, v);
        else if (k == "lr") a.lr = to_double(k, v);
        else if (k == "weight_decay") a.weight_decay = to_double(k, v);
        else if (k == "cosine") a.cosine = to_bool(k, v);
        else if (k == "patience") a.patience = to_u64(k, v);
        else if (k == "lambda") a.loss.lambda = to_double(k, v);
        else if (k == "reg") a.loss.reg = parse_regularizer(v);
        else if (k == "horizon_steps") a.loss.horizon_steps = to_u64(k, v);
        else throw ConfigError("unknown [adapt] key '" + k + "'");
    } else if (e.section == "eval") {
        if (k == "mape_eps") c.mape_eps = to_double(k, v);
        else throw ConfigError("unknown [eval] key '" + k + "'");
    }
}

}  // namespace

void validate(const ExperimentConfig& c) {
    if (c.dynamics.family != c.family || c.model.family != c.family) throw ConfigError("family mismatch in config");
    for (std::size_t i = 0; i < c.dynamics.varied.size(); ++i) {
        if (c.dynamics.train_values[i].empty() || c.dynamics.eval_values[i].empty()) {
            throw ConfigError("varied parameter '" + c.dynamics.varied[i] + "' needs train_ and eval_ values");
        }
    }
    make_environment_set(c.dynamics);
    c.model.validate();
    if (is_spatial(c.family) && c.model.grid_side != c.dynamics.grid->side) {
        throw ConfigError("model grid side differs from the dynamics grid");
    }
    if (!(c.train.lr > 0.0) || !(c.adapt.lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (c.train.warmup > c.train.steps && c.train.steps > 0) throw ConfigError("warmup exceeds training steps");
    if (c.train.batch_trajectories == 0) throw ConfigError("batch must be positive");
    if (c.train.loss.horizon_steps == 0 || c.adapt.loss.horizon_steps == 0) {
        throw ConfigError("horizon_steps must be positive");
    }
    if (!(c.mape_eps > 0.0)) throw ConfigError("mape_eps must be positive");
}

ExperimentConfig parse_experiment(const std::string& text, Family fallback) {
    const auto entries = tokenize(text);
    Family family = fallback;
    for (const auto& e : entries)
        if (e.section == "run" && e.key == "family") family = parse_family(e.value);
    ExperimentConfig c = default_experiment(family);
    for (const auto& e : entries) {
        try {
            apply(c, e);
        } catch (const ConfigError& err) {
            throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
        }
    }
    c.model.family = family;
    validate(c);
    return c;
}

ExperimentConfig load_experiment(const std::string& path, Family fallback) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment(ss.str(), fallback);
}

std::string to_text(const ExperimentConfig& c) {
    std::ostringstream o;
    const auto& d = c.dynamics;
    const auto& m = c.model;
    const auto& t = c.train;
    const auto& a = c.adapt;
    auto b = [](bool x) { return x ? "true" : "false"; };
    o << "[run]\nfamily = " << family_name(c.family) << "\nseed = " << c.seed << "\nthreads = " << c.threads << "\n";
    o << "\n[dynamics]\ndt = " << format_double(d.dt) << "\nhorizon = " << format_double(d.horizon_T)
      << "\nadapt_horizon = " << format_double(d.adapt_horizon_Tad) << "\nsubsteps = " << d.substeps
      << "\nn_train = " << d.n_tr << "\nn_eval = " << d.n_ev << "\n";
    if (d.grid) o << "grid_side = " << d.grid->side << "\ngrid_spacing = " << format_double(d.grid->spacing) << "\n";
    for (const auto& [name, v] : d.fixed) {
        if (name == "lv_variant") o << "lv_rhs_variant = " << (v != 0.0 ? "printed" : "standard") << "\n";
        else if (name == "ns_viscous") o << "ns_viscous = " << (v != 0.0 ? "exact" : "cn") << "\n";
        else o << name << " = " << format_double(v) << "\n";
    }
    o << "vary = ";
    for (std::size_t i = 0; i < d.varied.size(); ++i) o << (i ? ", " : "") << d.varied[i];
    o << "\n";
    for (std::size_t i = 0; i < d.varied.size(); ++i) {
        o << "train_" << d.varied[i] << " = " << join(d.train_values[i]) << "\n";
        o << "eval_" << d.varied[i] << " = " << join(d.eval_values[i]) << "\n";
    }
    switch (c.family) {
        case Family::LV:
            o << "ic_lv = " << format_double(d.ic.lv_range[0].first) << ", " << format_double(d.ic.lv_range[0].second)
              << "\n";
            break;
        case Family::GO: {
            std::vector<double> r;
            for (const auto& [lo, hi] : d.ic.go_ranges) r.insert(r.end(), {lo, hi});
            o << "ic_go = " << join(r) << "\n";
            break;
        }
        case Family::GS:
            o << "ic_gs_squares = " << d.ic.gs_squares << "\nic_gs_square_size = " << d.ic.gs_square_size
              << "\nic_gs_u = " << format_double(d.ic.gs_square_u) << "\nic_gs_v = " << format_double(d.ic.gs_square_v)
              << "\n";
            break;
        case Family::NS:
            o << "ic_ns_alpha = " << format_double(d.ic.ns_alpha) << "\nic_ns_tau = " << format_double(d.ic.ns_tau)
              << "\nic_ns_sigma = " << format_double(d.ic.ns_sigma) << "\n";
            break;
    }
    std::string part = partition_name(m.partition);
    o << "\n[model]\nlayers = " << m.layers << "\nwidth = " << m.width << "\nmodes = " << m.modes
      << "\ncontext_dim = " << m.context_dim << "\nactivation = " << activation_name(m.activation)
      << "\npartition = " << part << "\npartition_count = " << m.partition.count
      << "\npartition_pad = " << b(m.partition.pad_final_group) << "\nuse_context = " << b(m.use_context) << "\n";
    o << "\n[optim]\nlr = " << format_double(t.lr) << "\ncontext_lr = " << format_double(t.context_lr)
      << "\nweight_decay = " << format_double(t.weight_decay) << "\nwarmup = " << t.warmup
      << "\nmin_lr = " << format_double(t.min_lr) << "\nclip_norm = " << format_double(t.clip_norm) << "\n";
    o << "\n[train]\nsteps = " << t.steps << "\nbatch = " << t.batch_trajectories
      << "\naccumulate_envs = " << b(t.accumulate_envs) << "\nlambda = " << format_double(t.loss.lambda)
      << "\nreg = " << regularizer_name(t.loss.reg) << "\nhorizon_steps = " << t.loss.horizon_steps << "\n";
    o << "\n[adapt]\nsteps = " << a.steps << "\nlr = " << format_double(a.lr)
      << "\nweight_decay = " << format_double(a.weight_decay) << "\ncosine = " << b(a.cosine)
      << "\npatience = " << a.patience << "\nlambda = " << format_double(a.loss.lambda)
      << "\nreg = " << regularizer_name(a.loss.reg) << "\nhorizon_steps = " << a.loss.horizon_steps << "\n";
    o << "\n[eval]\nmape_eps = " << format_double(c.mape_eps) << "\n";
    return o.str();
}

}  // namespace fnsda
