#pragma once

// Experiment configuration files.
//
// Line-oriented `key = value` text with `[section]` headers and `#` comments.
// Sections: run, dynamics, model, optim, train, adapt, eval. In [dynamics],
// `<param> = x` fixes a system parameter, `train_<param> = a, b, ...` and
// `eval_<param> = ...` list the varied values (varied parameters follow the
// order of `vary`). Unknown keys are ConfigErrors.

#include <cstdint>
#include <string>

#include "fnsda/dynamics.hpp"
#include "fnsda/model.hpp"
#include "fnsda/pipelines.hpp"

namespace fnsda {

struct ExperimentConfig {
    Family family = Family::LV;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    DynamicsSettings dynamics;
    ModelConfig model;
    TrainOptions train;
    AdaptOptions adapt;
    double mape_eps = 1e-8;
};

/// Every default for one family filled in.
ExperimentConfig default_experiment(Family f);

/// Parses config text on top of the family defaults. The family comes from
/// `[run] family` when present, otherwise `fallback`.
ExperimentConfig parse_experiment(const std::string& text, Family fallback = Family::LV);
ExperimentConfig load_experiment(const std::string& path, Family fallback = Family::LV);

/// Canonical text; parse_experiment(to_text(c)) reproduces c exactly.
std::string to_text(const ExperimentConfig& config);

/// ConfigError on inconsistent settings.
void validate(const ExperimentConfig& config);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace fnsda
