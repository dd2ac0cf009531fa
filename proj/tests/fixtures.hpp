#pragma once

// Small datasets and models shared by the pipeline and harness tests.

#include "fnsda/dynamics.hpp"
#include "fnsda/model.hpp"
#include "fnsda/pipelines.hpp"

namespace fixture {

/// LV with 2 x 2 training and 2 evaluation environments, short horizons.
inline fnsda::DynamicsSettings tiny_lv(std::size_t n_tr = 2, std::size_t n_ev = 2) {
    fnsda::DynamicsSettings d = fnsda::default_dynamics_settings(fnsda::Family::LV);
    d.train_values = {{0.5, 1.0}, {0.5, 1.0}};
    d.eval_values = {{0.75}, {0.625, 1.125}};
    d.horizon_T = 5.0;
    d.adapt_horizon_Tad = 2.0;
    d.n_tr = n_tr;
    d.n_ev = n_ev;
    return d;
}

inline fnsda::ModelConfig tiny_model(fnsda::Family f = fnsda::Family::LV) {
    fnsda::ModelConfig c = fnsda::default_model_config(f);
    c.layers = 1;
    c.width = 8;
    c.modes = 3;
    c.context_dim = 3;
    return c;
}

inline fnsda::TrainOptions quick_train(std::size_t steps) {
    fnsda::TrainOptions o;
    o.steps = steps;
    o.lr = 1e-2;
    o.warmup = 0;
    o.batch_trajectories = 2;
    return o;
}

inline const fnsda::DatasetBundle& tiny_bundle() {
    static const fnsda::DatasetBundle b = fnsda::generate_dataset(fnsda::make_environment_set(tiny_lv()), 5);
    return b;
}

}  // namespace fixture
