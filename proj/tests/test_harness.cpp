#include <cmath>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "fnsda/config.hpp"
#include "fnsda/errors.hpp"
#include "fnsda/harness.hpp"
#include "fnsda/metrics.hpp"

using namespace fnsda;

TEST_SUITE("harness") {

TEST_CASE("metric examples") {
    const std::vector<double> pred{1.0, 2.0, 3.0}, truth{1.0, 4.0, 0.0};
    CHECK(rmse(pred, truth) == doctest::Approx(std::sqrt((4.0 + 9.0) / 3.0)).epsilon(1e-15));
    CHECK(mape(std::vector<double>{1.0, 2.0}, std::vector<double>{2.0, 4.0}) == doctest::Approx(0.5));
    // A zero truth entry divides by eps.
    CHECK(mape(std::vector<double>{1e-3}, std::vector<double>{0.0}, 1e-2) == doctest::Approx(0.1));
    CHECK(rmse(truth, truth) == 0.0);
    CHECK_THROWS_AS(rmse(pred, std::vector<double>{1.0}), ShapeError);
    CHECK_THROWS_AS(mape(std::vector<double>{}, std::vector<double>{}), ShapeError);
}

TEST_CASE("metrics are symmetric under a shared channel permutation") {
    const std::vector<double> pred{1.0, 5.0, 2.0, 7.0}, truth{1.5, 4.0, 2.5, 6.0};
    const std::vector<double> pp{5.0, 1.0, 7.0, 2.0}, tp{4.0, 1.5, 6.0, 2.5};
    CHECK(rmse(pred, truth) == doctest::Approx(rmse(pp, tp)).epsilon(1e-15));
    CHECK(mape(pred, truth) == doctest::Approx(mape(pp, tp)).epsilon(1e-15));
}

TEST_CASE("the ground-truth generator scores zero on both tasks") {
    const auto& b = fixture::tiny_bundle();
    const auto& envs = b.environments.eval_envs;
    EvalOptions o;
    o.run_id = "oracle";
    const MetricsReport inter = run_inter_trajectory(b.eval, envs, oracle_hook(envs), o);
    const MetricsReport extra = run_extra_trajectory(b.eval, envs, oracle_hook(envs), o);
    CHECK(inter.task == "inter");
    CHECK(extra.task == "extra");
    CHECK(inter.family == family_name(Family::LV));
    for (const MetricsReport* r : {&inter, &extra}) {
        CHECK(r->rows.size() == envs.size() * b.environments.n_ev);
        CHECK(r->environments().size() == envs.size());
        for (const auto& row : r->rows) {
            CHECK(row.rmse < 1e-10);
            CHECK_FALSE(row.diverged);
            CHECK(row.traj_index >= 1);
        }
        CHECK(r->diverged_count() == 0);
    }
}

TEST_CASE("aggregates are means of per-environment means") {
    MetricsReport r;
    r.rows = {{0, 1, 1.0, 0.1, false}, {0, 2, 3.0, 0.3, false}, {1, 1, 10.0, 1.0, false},
              {1, 2, std::nan(""), std::nan(""), true}, {2, 1, 4.0, 0.4, false}};
    std::map<std::size_t, std::pair<double, int>> acc;
    for (const auto& row : r.rows)
        if (!row.diverged) acc[row.env_index].first += row.rmse, acc[row.env_index].second += 1;
    double expect = 0.0;
    for (const auto& [e, sc] : acc) expect += sc.first / sc.second;
    expect /= static_cast<double>(acc.size());
    CHECK(r.aggregate_rmse() == doctest::Approx(expect).epsilon(1e-15));
    CHECK(r.env_rmse(0) == 2.0);
    CHECK(r.env_rmse(1) == 10.0);
    CHECK(r.env_mape(0) == doctest::Approx(0.2));
    CHECK(r.diverged_count() == 1);
}

TEST_CASE("report CSV round-trips and summarizes") {
    MetricsReport r;
    r.run_id = "a";
    r.family = "lv";
    r.task = "inter";
    r.adapted_params = 12;
    r.rows = {{0, 1, 0.125, 0.5, false}, {0, 2, 1.0 / 3.0, 0.25, false}, {1, 1, 2.0, 0.75, false}};
    MetricsReport s = r;
    s.run_id = "b";
    s.rows.push_back({1, 2, std::nan(""), std::nan(""), true});
    const auto parsed = parse_csv(to_csv(r) + to_csv(s).substr(to_csv(s).find('\n') + 1));
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].run_id == "a");
    CHECK(parsed[0].rows.size() == 3);
    CHECK(parsed[0].rows[1].rmse == 1.0 / 3.0);
    CHECK(parsed[0].adapted_params == 12);
    CHECK(parsed[1].rows.back().diverged);
    CHECK(to_csv(parsed[0]) == to_csv(r));
    const std::string summary = summary_csv(parsed);
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 1 + 2 + 2);
    CHECK(summary.find(",mean,") != std::string::npos);
    CHECK(format_report(r).find("inter") != std::string::npos);
    CHECK_THROWS_AS(parse_csv("not,a,report\n1,2,3\n"), FormatError);
}

TEST_CASE("adapted parameter counts per method") {
    const auto& b = fixture::tiny_bundle();
    const auto& envs = b.environments.eval_envs;
    const ModelConfig cfg = fixture::tiny_model();
    const Checkpoint ck = train(b.train, cfg, fixture::quick_train(10), 1);
    const Checkpoint erm = baseline_train_erm(b.train, cfg, fixture::quick_train(10), 1);
    EvalOptions o;
    o.adapt.steps = 3;
    o.method = EvalMethod::fnsda;
    const MetricsReport a = run_inter_trajectory(ck, b.eval, envs, o);
    CHECK(a.adapted_params == cfg.context_dim + cfg.layers);
    CHECK(a.rows.size() == envs.size() * b.environments.n_ev);
    o.method = EvalMethod::mean_context;
    CHECK(run_inter_trajectory(ck, b.eval, envs, o).adapted_params == 0);
    o.method = EvalMethod::full;
    CHECK(run_extra_trajectory(erm, b.eval, envs, o).adapted_params == count_params(erm.params));
    o.method = EvalMethod::frozen;
    const MetricsReport f = run_extra_trajectory(erm, b.eval, envs, o);
    CHECK(f.adapted_params == 0);
    CHECK(f.aggregate_rmse() > 0.0);
    for (const char* m : {"fnsda", "mean", "frozen", "full"}) CHECK(eval_method_name(parse_eval_method(m)) == m);
    CHECK_THROWS_AS(parse_eval_method("oracle"), ConfigError);
}

TEST_CASE("evaluation is independent of the thread count") {
    const auto& b = fixture::tiny_bundle();
    const auto& envs = b.environments.eval_envs;
    const Checkpoint ck = train(b.train, fixture::tiny_model(), fixture::quick_train(10), 1);
    EvalOptions o;
    o.adapt.steps = 5;
    MetricsReport one = run_inter_trajectory(ck, b.eval, envs, o);
    o.threads = 3;
    MetricsReport three = run_inter_trajectory(ck, b.eval, envs, o);
    one.wall_ms = three.wall_ms = 0.0;
    CHECK(to_csv(one) == to_csv(three));
}

TEST_CASE("spectrum rows") {
    ModelConfig cfg = fixture::tiny_model();
    cfg.modes = 4;
    cfg.partition = parse_partition("cross:1:1");
    const ModelParams p = init_model(cfg, 0);
    EnvContext ctx = make_context(cfg);
    const auto rows = spectrum(p, ctx);
    REQUIRE(rows.size() == cfg.layers * cfg.mode_count());
    CHECK(rows[0].gate == 0.0);
    CHECK(rows[1].gate == 1.0);
    CHECK(rows[2].magnitude == 4.0);
    for (const auto& r : rows) CHECK(r.env_energy == 0.0);
    CHECK(rows[0].shared_energy > 0.0);
    const std::string csv = spectrum_csv(rows);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + rows.size());
}

TEST_CASE("experiment config text round-trips") {
    for (Family f : {Family::LV, Family::GO, Family::GS, Family::NS}) {
        const ExperimentConfig d = default_experiment(f);
        const std::string text = to_text(d);
        CHECK(to_text(parse_experiment(text)) == text);
    }
    const ExperimentConfig c = parse_experiment("[run]\nfamily = gs\nseed = 7\n[optim]\nlr = 0.25\n[model]\npartition = cross:2:1\n");
    CHECK(c.family == Family::GS);
    CHECK(c.seed == 7);
    CHECK(c.train.lr == 0.25);
    CHECK(partition_name(c.model.partition) == "cross:2:1");
    CHECK_THROWS_AS(parse_experiment("[optim]\nlearning_rate = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_experiment("[nowhere]\n"), ConfigError);
    CHECK_THROWS_AS(parse_experiment("[optim]\nlr = fast\n"), ConfigError);
}

TEST_CASE("family defaults") {
    const ExperimentConfig lv = default_experiment(Family::LV), go = default_experiment(Family::GO);
    CHECK(lv.train.lr == 5e-4);
    CHECK(lv.train.weight_decay == 1e-4);
    CHECK(go.train.lr == 1e-3);
    CHECK(go.train.weight_decay == 5e-4);
    CHECK(lv.train.loss.lambda == 1e-4);
    CHECK(lv.adapt.lr == lv.train.lr);
    CHECK(default_experiment(Family::NS).train.batch_trajectories == 4);
}

}  // TEST_SUITE
