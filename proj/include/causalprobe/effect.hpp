#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "causalprobe/core.hpp"
#include "causalprobe/rng.hpp"
#include "causalprobe/weighting.hpp"

namespace causalprobe {

/// Two-sided tail probability of |Z| >= |z| for a standard normal.
inline double normal_two_sided_p(double z) {
    return std::erfc(std::abs(z) / 1.4142135623730950488);
}

constexpr double kCi95Z = 1.96;  // 95% interval critical value

struct WlsFit {
    double slope = 0.0;
    double intercept = 0.0;
    double robust_se_slope = 0.0;
    double n_eff = 0.0;
};

/// Weighted least squares of Y on T (marginal structural model form: the
/// covariates' influence is already absorbed by the weights). The slope
/// variance is the weighted sandwich estimate
///   Var(b) = sum(w^2 tt^2 e^2) / (sum(w tt^2))^2,   tt = T - weighted mean.
inline WlsFit wls_fit(const VectorXd& t, const VectorXd& y, const WeightVector& w) {
    const Eigen::Index n = t.size();
    if (y.size() != n || w.weights.size() != n)
        throw InvalidInputError("wls_fit: length mismatch");
    Eigen::Index positive = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (w.weights(i) > 0.0) ++positive;
    if (positive < 3) throw InvalidInputError("wls_fit: need at least 3 positively weighted samples");

    const VectorXd& wv = w.weights;
    const double sw = wv.sum();
    const double mt = wv.dot(t) / sw;
    const double my = wv.dot(y) / sw;
    double stt = 0.0, sty = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double tt = t(i) - mt;
        stt += wv(i) * tt * tt;
        sty += wv(i) * tt * (y(i) - my);
    }
    if (stt <= 0.0)
        throw DegenerateTreatmentError("wls_fit: treatment has zero weighted variance");
    WlsFit fit;
    fit.slope = sty / stt;
    fit.intercept = my - fit.slope * mt;
    double meat = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double tt = t(i) - mt;
        const double e = y(i) - fit.intercept - fit.slope * t(i);
        meat += wv(i) * wv(i) * tt * tt * e * e;
    }
    fit.robust_se_slope = std::sqrt(meat) / stt;
    fit.n_eff = w.ess;
    return fit;
}

namespace detail {

inline EffectEstimate finish_estimate(std::string feature, double mu, double se,
                                      WeightEstimator tag, std::vector<std::string> warnings) {
    EffectEstimate est;
    est.feature = std::move(feature);
    est.mu = mu;
    est.se = se;
    if (se > 0.0) {
        est.p_value = normal_two_sided_p(mu / se);
    } else {
        est.p_value = mu == 0.0 ? 1.0 : 0.0;  // exact fit: no sampling noise
    }
    est.ci_low = mu - kCi95Z * se;
    est.ci_high = mu + kCi95Z * se;
    est.estimator = tag;
    est.warnings = std::move(warnings);
    return est;
}

}  // namespace detail

/// ACE of a continuous treatment: the weighted regression slope, per unit of
/// T, with sandwich standard error and a two-sided normal test of slope = 0.
inline EffectEstimate ace_continuous(const VectorXd& t, const VectorXd& y, const WeightVector& w,
                                     WeightEstimator tag, const std::string& feature = "") {
    const WlsFit fit = wls_fit(t, y, w);
    return detail::finish_estimate(feature, fit.slope, fit.robust_se_slope, tag, w.warnings);
}

/// ACE of a binary treatment: difference of weighted outcome means between the
/// two arms, with the weighted two-sample variance. exp(mu) is attached for a
/// multiplicative reading of the contrast.
inline EffectEstimate ace_binary(const VectorXd& t, const VectorXd& y, const WeightVector& w,
                                 WeightEstimator tag, const std::string& feature = "") {
    const Eigen::Index n = t.size();
    if (y.size() != n || w.weights.size() != n)
        throw InvalidInputError("ace_binary: length mismatch");
    double sw1 = 0.0, sw0 = 0.0, sy1 = 0.0, sy0 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (t(i) == 1.0) {
            sw1 += w.weights(i);
            sy1 += w.weights(i) * y(i);
        } else if (t(i) == 0.0) {
            sw0 += w.weights(i);
            sy0 += w.weights(i) * y(i);
        } else {
            throw InvalidInputError("ace_binary: treatment must be 0/1");
        }
    }
    if (sw1 <= 0.0 || sw0 <= 0.0)
        throw DegenerateTreatmentError("ace_binary: both treatment levels need positive weight");
    const double mu1 = sy1 / sw1, mu0 = sy0 / sw0;
    double v1 = 0.0, v0 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ww = w.weights(i) * w.weights(i);
        if (t(i) == 1.0) v1 += ww * (y(i) - mu1) * (y(i) - mu1);
        else v0 += ww * (y(i) - mu0) * (y(i) - mu0);
    }
    const double se = std::sqrt(v1 / (sw1 * sw1) + v0 / (sw0 * sw0));
    EffectEstimate est = detail::finish_estimate(feature, mu1 - mu0, se, tag, w.warnings);
    est.exp_mu = std::exp(est.mu);
    return est;
}

/// Bootstrap standard error of the ACE: resamples rows with replacement and
/// re-runs the full weight estimation on every replicate.
inline double bootstrap_se(const VectorXd& t, const VectorXd& y, const MatrixXd& v,
                           WeightEstimator estimator, int reps, std::uint64_t seed,
                           FeatureKind kind = FeatureKind::continuous,
                           const WeightingConfig& cfg = {}) {
    if (reps < 50) throw InvalidInputError("bootstrap_se: reps must be >= 50");
    const Eigen::Index n = t.size();
    std::vector<double> mus;
    mus.reserve(static_cast<std::size_t>(reps));
    int failures = 0;
    for (int r = 0; r < reps; ++r) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(r)));
        VectorXd tb(n), yb(n);
        MatrixXd vb(n, v.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
            tb(i) = t(k);
            yb(i) = y(k);
            if (v.cols() > 0) vb.row(i) = v.row(k);
        }
        try {
            const WeightVector w = compute_weights(estimator, tb, vb, kind, cfg);
            const EffectEstimate est = kind == FeatureKind::binary
                                           ? ace_binary(tb, yb, w, estimator)
                                           : ace_continuous(tb, yb, w, estimator);
            mus.push_back(est.mu);
        } catch (const Error&) {
            ++failures;
        }
    }
    if (failures * 10 > reps)
        throw BootstrapUnstableError("bootstrap_se: estimator failed in >10% of resamples (" +
                                     std::to_string(failures) + "/" + std::to_string(reps) + ")");
    double mean = 0.0;
    for (double m : mus) mean += m;
    mean /= static_cast<double>(mus.size());
    double ss = 0.0;
    for (double m : mus) ss += (m - mean) * (m - mean);
    return std::sqrt(ss / static_cast<double>(mus.size() - 1));
}

/// Rejects H0: ACE = 0 iff p < alpha (strict).
inline bool hypothesis_test(const EffectEstimate& est, double alpha) {
    if (alpha <= 0.0 || alpha >= 1.0) throw InvalidInputError("alpha must be in (0,1)");
    return est.p_value < alpha;
}

}  // namespace causalprobe
