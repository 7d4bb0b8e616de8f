#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "causalprobe/error.hpp"

namespace causalprobe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class FeatureKind { continuous, binary };

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::continuous;
};

/// The six weighting estimators plus the unadjusted baseline used in tests.
enum class WeightEstimator { iptw, cbps, npcbps, pswgbm, optweight, super };

inline const char* estimator_name(WeightEstimator e) {
    switch (e) {
        case WeightEstimator::iptw: return "iptw";
        case WeightEstimator::cbps: return "cbps";
        case WeightEstimator::npcbps: return "npcbps";
        case WeightEstimator::pswgbm: return "pswgbm";
        case WeightEstimator::optweight: return "optweight";
        case WeightEstimator::super: return "super";
    }
    return "?";
}

inline WeightEstimator estimator_from_name(const std::string& s) {
    if (s == "iptw") return WeightEstimator::iptw;
    if (s == "cbps") return WeightEstimator::cbps;
    if (s == "npcbps") return WeightEstimator::npcbps;
    if (s == "pswgbm") return WeightEstimator::pswgbm;
    if (s == "optweight") return WeightEstimator::optweight;
    if (s == "super") return WeightEstimator::super;
    throw LookupError("unknown estimator: " + s);
}

/// Immutable observational table {X_i, Y_i}: n samples of m named features
/// plus the model-output column. Validated once at construction and safe to
/// share across threads afterwards.
class Dataset {
  public:
    Dataset(MatrixXd features, std::vector<FeatureSpec> specs, VectorXd outcome)
        : features_(std::move(features)), specs_(std::move(specs)), outcome_(std::move(outcome)) {
        const auto n = features_.rows();
        const auto m = features_.cols();
        if (n < 2) throw InvalidInputError("dataset needs at least 2 samples");
        if (m < 1) throw InvalidInputError("dataset needs at least 1 feature");
        if (static_cast<Eigen::Index>(specs_.size()) != m)
            throw InvalidInputError("feature spec count does not match column count");
        if (outcome_.size() != n)
            throw InvalidInputError("outcome length does not match sample count");
        if (!features_.allFinite() || !outcome_.allFinite())
            throw InvalidInputError("dataset contains non-finite values (missing values are rejected, not imputed)");
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            for (std::size_t j = i + 1; j < specs_.size(); ++j)
                if (specs_[i].name == specs_[j].name)
                    throw InvalidInputError("duplicate feature name: " + specs_[i].name);
            if (specs_[i].kind == FeatureKind::binary) {
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double v = features_(r, static_cast<Eigen::Index>(i));
                    if (v != 0.0 && v != 1.0)
                        throw InvalidInputError("binary feature " + specs_[i].name +
                                                " takes values outside {0,1}");
                }
            }
        }
    }

    Eigen::Index n_samples() const { return features_.rows(); }
    Eigen::Index n_features() const { return features_.cols(); }
    const MatrixXd& features() const { return features_; }
    const VectorXd& outcome() const { return outcome_; }
    const std::vector<FeatureSpec>& specs() const { return specs_; }
    const FeatureSpec& spec(Eigen::Index j) const { return specs_[static_cast<std::size_t>(j)]; }

    Eigen::Index feature_index(const std::string& name) const {
        for (std::size_t j = 0; j < specs_.size(); ++j)
            if (specs_[j].name == name) return static_cast<Eigen::Index>(j);
        throw LookupError("unknown feature: " + name);
    }

  private:
    MatrixXd features_;
    std::vector<FeatureSpec> specs_;
    VectorXd outcome_;
};

/// Marks features with exactly the value set {0,1} (or a subset) as binary;
/// everything else is continuous. Callers may override afterwards.
inline std::vector<FeatureSpec> detect_feature_kinds(const MatrixXd& features,
                                                     const std::vector<std::string>& names) {
    std::vector<FeatureSpec> specs;
    specs.reserve(names.size());
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
        bool zero_one_only = true, saw_zero = false, saw_one = false;
        for (Eigen::Index i = 0; i < features.rows(); ++i) {
            const double v = features(i, j);
            if (v == 0.0) saw_zero = true;
            else if (v == 1.0) saw_one = true;
            else { zero_one_only = false; break; }
        }
        const bool binary = zero_one_only && saw_zero && saw_one;
        specs.push_back({names[static_cast<std::size_t>(j)],
                         binary ? FeatureKind::binary : FeatureKind::continuous});
    }
    return specs;
}

inline double effective_sample_size(const VectorXd& w) {
    const double s = w.sum();
    const double s2 = w.squaredNorm();
    return s2 > 0 ? s * s / s2 : 0.0;
}

/// Per-sample balancing weights in canonical form: nonnegative, mean exactly 1.
struct WeightVector {
    VectorXd weights;
    double ess = 0.0;
    WeightEstimator estimator = WeightEstimator::iptw;
    std::vector<std::string> warnings;  // positivity violations, relaxed constraints, ...
};

/// Canonicalizes raw weights: rescales to mean 1 and computes the effective
/// sample size (sum w)^2 / (sum w^2). Relative proportions are preserved.
inline WeightVector normalize_weights(const VectorXd& raw,
                                      WeightEstimator estimator = WeightEstimator::iptw) {
    if (raw.size() == 0) throw InvalidInputError("empty weight vector");
    if (!raw.allFinite()) throw InvalidInputError("weights contain non-finite values");
    if ((raw.array() < 0.0).any()) throw InvalidInputError("weights must be nonnegative");
    const double s = raw.sum();
    if (s <= 0.0) throw InvalidInputError("weights sum to zero");
    WeightVector out;
    out.weights = raw * (static_cast<double>(raw.size()) / s);
    out.ess = effective_sample_size(out.weights);
    out.estimator = estimator;
    return out;
}

/// Splits a dataset into the designated treatment column and the remaining
/// covariate columns (original order preserved).
struct TreatmentSplit {
    VectorXd treatment;
    MatrixXd covariates;          // n x (m-1); empty when m == 1
    std::vector<std::string> covariate_names;
};

inline TreatmentSplit select_treatment(const Dataset& d, const std::string& feature) {
    const Eigen::Index j = d.feature_index(feature);
    const Eigen::Index n = d.n_samples(), m = d.n_features();
    TreatmentSplit out;
    out.treatment = d.features().col(j);
    out.covariates.resize(n, m - 1);
    Eigen::Index c = 0;
    for (Eigen::Index k = 0; k < m; ++k) {
        if (k == j) continue;
        out.covariates.col(c) = d.features().col(k);
        out.covariate_names.push_back(d.spec(k).name);
        ++c;
    }
    return out;
}

/// Estimated average causal effect of one feature on the model output.
/// mu is per unit of treatment for continuous features and the contrast of
/// the two levels for binary ones.
struct EffectEstimate {
    std::string feature;
    double mu = 0.0;
    double se = 0.0;
    double p_value = 1.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    WeightEstimator estimator = WeightEstimator::iptw;
    std::optional<double> exp_mu;   // multiplicative reading, binary treatments only
    std::vector<std::string> warnings;
};

/// One estimator's attribution vector: a_j equals the estimated effect when
/// significantly nonzero at level alpha, and 0 otherwise.
struct AttributionReport {
    std::map<std::string, double> attributions;
    double alpha = 0.05;
    WeightEstimator estimator = WeightEstimator::iptw;
    std::vector<EffectEstimate> estimates;                  // feature order of the dataset
    std::map<std::string, std::string> failures;            // feature -> error message
};

}  // namespace causalprobe
