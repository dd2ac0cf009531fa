#include "fnsda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "fnsda/config.hpp"
#include "fnsda/errors.hpp"

namespace fnsda {

double rmse(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size() || pred.empty()) throw ShapeError("rmse: size mismatch or empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double mape(std::span<const double> pred, std::span<const double> truth, double eps) {
    if (pred.size() != truth.size() || pred.empty()) throw ShapeError("mape: size mismatch or empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - truth[i]) / std::max(std::fabs(truth[i]), eps);
    return s / static_cast<double>(pred.size());
}

std::vector<std::size_t> MetricsReport::environments() const {
    std::set<std::size_t> envs;
    for (const auto& r : rows) envs.insert(r.env_index);
    return {envs.begin(), envs.end()};
}

namespace {

double env_mean(const std::vector<TrajectoryRow>& rows, std::size_t env, double TrajectoryRow::*field) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
        if (r.env_index != env || r.diverged) continue;
        s += r.*field;
        ++n;
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

double aggregate(const MetricsReport& rep, double TrajectoryRow::*field) {
    const auto envs = rep.environments();
    if (envs.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (auto e : envs) s += env_mean(rep.rows, e, field);
    return s / static_cast<double>(envs.size());
}

std::string num(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

}  // namespace

double MetricsReport::env_rmse(std::size_t env) const { return env_mean(rows, env, &TrajectoryRow::rmse); }
double MetricsReport::env_mape(std::size_t env) const { return env_mean(rows, env, &TrajectoryRow::mape); }
double MetricsReport::aggregate_rmse() const { return aggregate(*this, &TrajectoryRow::rmse); }
double MetricsReport::aggregate_mape() const { return aggregate(*this, &TrajectoryRow::mape); }

std::size_t MetricsReport::diverged_count() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.diverged; }));
}

static const char* kHeader = "run_id,family,task,env_index,traj_index,rmse,mape,adapted_params,wall_ms\n";

std::string to_csv(const MetricsReport& report) {
    std::string out = kHeader;
    for (const auto& r : report.rows) {
        out += report.run_id + "," + report.family + "," + report.task + "," + std::to_string(r.env_index) + "," +
               std::to_string(r.traj_index) + "," + num(r.rmse) + "," + num(r.mape) + "," +
               std::to_string(report.adapted_params) + "," + num(report.wall_ms) + "\n";
    }
    return out;
}

std::vector<MetricsReport> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line + "\n" != kHeader) throw FormatError("report CSV has an unexpected header");
    std::vector<MetricsReport> reports;
    std::map<std::string, std::size_t> index;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() != 9) throw FormatError("report CSV line " + std::to_string(lineno) + " has " +
                                             std::to_string(f.size()) + " fields");
        auto [it, inserted] = index.emplace(f[0], reports.size());
        if (inserted) {
            reports.emplace_back();
            reports.back().run_id = f[0];
            reports.back().family = f[1];
            reports.back().task = f[2];
        }
        MetricsReport& rep = reports[it->second];
        try {
            TrajectoryRow r;
            r.env_index = std::stoul(f[3]);
            r.traj_index = std::stoul(f[4]);
            r.rmse = std::stod(f[5]);
            r.mape = std::stod(f[6]);
            r.diverged = !std::isfinite(r.rmse);
            rep.adapted_params = std::stoul(f[7]);
            rep.wall_ms = std::stod(f[8]);
            rep.rows.push_back(r);
        } catch (const std::exception&) {
            throw FormatError("report CSV line " + std::to_string(lineno) + " is malformed");
        }
    }
    return reports;
}

std::string summary_csv(const std::vector<MetricsReport>& reports) {
    std::string out = kHeader;
    for (const auto& rep : reports) {
        for (auto e : rep.environments()) {
            out += rep.run_id + "," + rep.family + "," + rep.task + "," + std::to_string(e) + ",mean," +
                   num(rep.env_rmse(e)) + "," + num(rep.env_mape(e)) + "," + std::to_string(rep.adapted_params) + "," +
                   num(rep.wall_ms) + "\n";
        }
    }
    return out;
}

std::string format_report(const MetricsReport& report) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(4);
    o << report.family << " " << report.task << " (" << report.run_id << ")\n";
    o << "  env   RMSE(x1e-2)   MAPE\n";
    for (auto e : report.environments()) {
        o << "  " << std::setw(3) << e << "   " << std::setw(11) << report.env_rmse(e) * 100.0 << "   "
          << report.env_mape(e) << "\n";
    }
    o << "  all   " << std::setw(11) << report.aggregate_rmse() * 100.0 << "   " << report.aggregate_mape() << "\n";
    o << "  adapted parameters: " << report.adapted_params << ", diverged rollouts: " << report.diverged_count()
      << "\n";
    return o.str();
}

}  // namespace fnsda
