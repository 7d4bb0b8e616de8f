#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalprobe/attribution.hpp"
#include "causalprobe/core.hpp"

namespace causalprobe {

/// Run-wide configuration. File format is JSON with flat dotted keys, e.g.
///   {"estimators": ["iptw","cbps"], "alpha": 0.05, "trim.percentile": 99,
///    "optweight.delta": 0.04, "pswgbm.grid": [10,25,50,100,200],
///    "inference": "sandwich", "bootstrap.reps": 200, "seed": 7, "workers": 4}
/// CLI flags override file values. All randomness flows from `seed`; there is
/// no wall-clock seeding anywhere.
struct RunConfig {
    std::vector<WeightEstimator> estimators = {
        WeightEstimator::cbps,   WeightEstimator::npcbps,    WeightEstimator::pswgbm,
        WeightEstimator::iptw,   WeightEstimator::optweight, WeightEstimator::super};
    double alpha = 0.05;
    InferenceMethod inference = InferenceMethod::sandwich;
    int bootstrap_reps = 200;
    std::uint64_t seed = 0;
    int workers = 1;
    AttributionOptions attribution;  // weighting + inference knobs

    void validate() const {
        if (alpha <= 0.0 || alpha >= 1.0) throw InvalidInputError("alpha must be in (0,1)");
        if (estimators.empty()) throw InvalidInputError("at least one estimator required");
        if (workers < 1) throw InvalidInputError("workers must be >= 1");
    }

    AttributionOptions options() const {
        AttributionOptions o = attribution;
        o.inference = inference;
        o.bootstrap_reps = bootstrap_reps;
        o.workers = workers;
        return o;
    }
};

inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
    if (j.contains("estimators")) {
        cfg.estimators.clear();
        for (const auto& e : j["estimators"])
            cfg.estimators.push_back(estimator_from_name(e.get<std::string>()));
    }
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("inference")) {
        const std::string v = j["inference"].get<std::string>();
        if (v == "sandwich") cfg.inference = InferenceMethod::sandwich;
        else if (v == "bootstrap") cfg.inference = InferenceMethod::bootstrap;
        else throw InvalidInputError("inference must be 'sandwich' or 'bootstrap'");
    }
    if (j.contains("bootstrap.reps")) cfg.bootstrap_reps = j["bootstrap.reps"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
    if (j.contains("trim.percentile"))
        cfg.attribution.weighting.trim_percentile = j["trim.percentile"].get<double>();
    if (j.contains("optweight.delta"))
        cfg.attribution.weighting.optweight.delta = j["optweight.delta"].get<double>();
    if (j.contains("optweight.max_iter"))
        cfg.attribution.weighting.optweight.max_iter = j["optweight.max_iter"].get<int>();
    if (j.contains("pswgbm.grid"))
        cfg.attribution.weighting.pswgbm_grid = j["pswgbm.grid"].get<std::vector<int>>();
    if (j.contains("gbm.n_trees")) cfg.attribution.weighting.gbm.n_trees = j["gbm.n_trees"].get<int>();
    if (j.contains("gbm.max_depth"))
        cfg.attribution.weighting.gbm.max_depth = j["gbm.max_depth"].get<int>();
    if (j.contains("gbm.learning_rate"))
        cfg.attribution.weighting.gbm.learning_rate = j["gbm.learning_rate"].get<double>();
    if (j.contains("superlearner.folds"))
        cfg.attribution.weighting.superlearner_folds = j["superlearner.folds"].get<int>();
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad config " + path + ": " + e.what());
    }
    RunConfig cfg;
    apply_config_json(cfg, j);
    return cfg;
}

/// CAUSAL_PROBE_WORKERS overrides the configured worker count when set.
inline void apply_worker_env(RunConfig& cfg) {
    if (const char* env = std::getenv("CAUSAL_PROBE_WORKERS")) {
        const int w = std::atoi(env);
        if (w >= 1) cfg.workers = w;
    }
}

}  // namespace causalprobe
