#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "causalprobe/core.hpp"
#include "causalprobe/rng.hpp"

namespace causalprobe {

/// Configuration of the 12-feature synthetic classification generator.
/// The second distribution parameter is interpreted as the standard
/// deviation; set `sd_is_variance` to read it as a variance instead.
struct SynthConfig {
    Eigen::Index n = 1000;
    std::uint64_t seed = 0;
    double sd = 0.2;
    double signal_mean = 1.0;
    bool sd_is_variance = false;
};

struct SynthData {
    MatrixXd inputs;  // n x 12, columns f1..f12
    VectorXd labels;  // 0/1
};

inline std::vector<std::string> synth_feature_names() {
    std::vector<std::string> names;
    for (int j = 1; j <= 12; ++j) names.push_back("f" + std::to_string(j));
    return names;
}

/// Draws n samples of 12 features. Per sample: a fair coin picks the class;
/// f1..f3 are N(+signal, sd^2) for class 1 and N(-signal, sd^2) for class 0;
/// f4..f12 are N(0, sd^2) regardless. Only the first three features carry
/// class information. Draw order per sample is label, then f1..f12, so output
/// is bit-reproducible for a fixed seed.
inline SynthData gen_synthetic(const SynthConfig& cfg) {
    if (cfg.n < 1) throw InvalidInputError("gen_synthetic: n must be >= 1");
    if (cfg.sd <= 0.0) throw InvalidInputError("gen_synthetic: sd must be > 0");
    const double sd = cfg.sd_is_variance ? std::sqrt(cfg.sd) : cfg.sd;
    Rng rng(cfg.seed);
    SynthData out;
    out.inputs.resize(cfg.n, 12);
    out.labels.resize(cfg.n);
    for (Eigen::Index i = 0; i < cfg.n; ++i) {
        const bool one = rng.bernoulli(0.5);
        const double mu = one ? cfg.signal_mean : -cfg.signal_mean;
        out.labels(i) = one ? 1.0 : 0.0;
        for (int j = 0; j < 3; ++j) out.inputs(i, j) = rng.gaussian(mu, sd);
        for (int j = 3; j < 12; ++j) out.inputs(i, j) = rng.gaussian(0.0, sd);
    }
    return out;
}

/// Linear structural causal model with known ground truth, used to validate
/// the estimators: X ~ N(0,1); T = gamma*X + eps_T; Y = beta*T + X + eps_Y.
/// gamma confounds T through X; the true causal effect of T on Y is beta.
struct LinearScmConfig {
    Eigen::Index n = 2000;
    std::uint64_t seed = 0;
    double gamma = 0.8;  // X -> T strength (confounding)
    double beta = 2.0;   // T -> Y (the ground-truth ACE)
    double sd_t = 1.0;
    double sd_y = 1.0;
};

struct LinearScmData {
    Dataset dataset;       // columns: t, x; outcome y
    double true_ace;       // = beta
    LinearScmConfig config;
};

inline LinearScmData gen_linear_scm(const LinearScmConfig& cfg) {
    if (cfg.n < 2) throw InvalidInputError("gen_linear_scm: n must be >= 2");
    if (cfg.sd_t <= 0.0 || cfg.sd_y <= 0.0)
        throw InvalidInputError("gen_linear_scm: noise sds must be > 0");
    Rng rng(cfg.seed);
    MatrixXd features(cfg.n, 2);
    VectorXd y(cfg.n);
    for (Eigen::Index i = 0; i < cfg.n; ++i) {
        const double x = rng.gaussian();
        const double t = cfg.gamma * x + rng.gaussian(0.0, cfg.sd_t);
        y(i) = cfg.beta * t + x + rng.gaussian(0.0, cfg.sd_y);
        features(i, 0) = t;
        features(i, 1) = x;
    }
    std::vector<FeatureSpec> specs{{"t", FeatureKind::continuous}, {"x", FeatureKind::continuous}};
    return LinearScmData{Dataset(std::move(features), std::move(specs), std::move(y)),
                         cfg.beta, cfg};
}

}  // namespace causalprobe
