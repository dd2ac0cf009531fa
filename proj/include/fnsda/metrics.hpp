#pragma once

// Per-trajectory error metrics and CSV reports.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fnsda {

/// sqrt(mean((pred - truth)^2)). ShapeError on a size mismatch.
double rmse(std::span<const double> pred, std::span<const double> truth);
/// mean(|pred - truth| / max(|truth|, eps)).
double mape(std::span<const double> pred, std::span<const double> truth, double eps = 1e-8);

struct TrajectoryRow {
    std::size_t env_index = 0;
    std::size_t traj_index = 0;
    double rmse = 0.0;
    double mape = 0.0;
    /// Non-finite rollout; metrics are NaN.
    bool diverged = false;
};

struct MetricsReport {
    std::string run_id;
    std::string family;
    std::string task;
    std::vector<TrajectoryRow> rows;
    std::size_t adapted_params = 0;
    double wall_ms = 0.0;
    std::uint64_t config_digest = 0;

    std::vector<std::size_t> environments() const;
    /// Means over the finite rows of one environment.
    double env_rmse(std::size_t env) const;
    double env_mape(std::size_t env) const;
    /// Mean over environments of the per-environment means.
    double aggregate_rmse() const;
    double aggregate_mape() const;
    std::size_t diverged_count() const;
};

/// Columns: run_id, family, task, env_index, traj_index, rmse, mape,
/// adapted_params, wall_ms. One row per trajectory.
std::string to_csv(const MetricsReport& report);
/// Parses the rows written by to_csv (one report per run_id).
std::vector<MetricsReport> parse_csv(const std::string& text);

/// One row per (run, environment) with traj_index "mean".
std::string summary_csv(const std::vector<MetricsReport>& reports);

/// Human-readable table; RMSE shown in units of 1e-2.
std::string format_report(const MetricsReport& report);

}  // namespace fnsda
