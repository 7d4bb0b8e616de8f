#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "causalprobe/core.hpp"
#include "causalprobe/treatment.hpp"

namespace causalprobe {

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

namespace detail {

/// z-scores a column with the unweighted mean/sd; constant columns map to 0.
inline VectorXd standardized(const VectorXd& x) {
    const double m = x.mean();
    const double s = sample_sd(x);
    if (s <= 0.0) return VectorXd::Zero(x.size());
    return (x.array() - m) / s;
}

inline MatrixXd standardized_columns(const MatrixXd& v) {
    MatrixXd z(v.rows(), v.cols());
    for (Eigen::Index j = 0; j < v.cols(); ++j) z.col(j) = standardized(v.col(j));
    return z;
}

/// Midranks (average ranks for ties), 1-based.
inline VectorXd midranks(const VectorXd& x) {
    const Eigen::Index n = x.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return x(a) < x(b); });
    VectorXd r(n);
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j + 1 < n && x(order[static_cast<std::size_t>(j + 1)]) == x(order[static_cast<std::size_t>(i)])) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Eigen::Index k = i; k <= j; ++k) r(order[static_cast<std::size_t>(k)]) = rank;
        i = j + 1;
    }
    return r;
}

/// Stabilized density-ratio weights, computed in log space so extreme
/// propensity values cannot overflow before trimming.
inline VectorXd stabilized_ratio(const VectorXd& t, const VectorXd& cond_pred, double cond_sd) {
    const double m = t.mean();
    const double s = std::max(sample_sd(t), std::numeric_limits<double>::min());
    VectorXd w(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double zm = (t(i) - m) / s;
        const double zc = (t(i) - cond_pred(i)) / cond_sd;
        double lw = -0.5 * zm * zm - std::log(s) + 0.5 * zc * zc + std::log(cond_sd);
        lw = std::clamp(lw, -700.0, 700.0);
        w(i) = std::exp(lw);
    }
    return w;
}

}  // namespace detail

/// Weighted Pearson correlation; weights need not be normalized. Returns 0
/// and sets `degenerate` when either weighted variance vanishes.
inline double weighted_pearson(const VectorXd& x, const VectorXd& y, const VectorXd& w,
                               bool* degenerate = nullptr) {
    const double sw = w.sum();
    const double mx = w.dot(x) / sw;
    const double my = w.dot(y) / sw;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double dx = x(i) - mx, dy = y(i) - my;
        cov += w(i) * dx * dy;
        vx += w(i) * dx * dx;
        vy += w(i) * dy * dy;
    }
    if (degenerate) *degenerate = false;
    if (vx <= 0.0 || vy <= 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return cov / std::sqrt(vx * vy);
}

/// Weighted Spearman correlation: weighted Pearson on midrank-transformed data.
inline double weighted_spearman(const VectorXd& x, const VectorXd& y, const VectorXd& w,
                                bool* degenerate = nullptr) {
    return weighted_pearson(detail::midranks(x), detail::midranks(y), w, degenerate);
}

// ---------------------------------------------------------------------------
// balance diagnostics / positivity / trimming
// ---------------------------------------------------------------------------

struct BalanceEntry {
    double pearson_unweighted = 0.0;
    double pearson_weighted = 0.0;
    double spearman_unweighted = 0.0;
    double spearman_weighted = 0.0;
    bool degenerate = false;
};

/// Treatment-covariate association before and after weighting.
struct BalanceReport {
    std::vector<BalanceEntry> covariates;
    double max_abs_corr = 0.0;             // weighted Pearson, worst covariate
    double max_abs_corr_unweighted = 0.0;
    double mean_abs_spearman = 0.0;        // weighted
    double mean_abs_spearman_unweighted = 0.0;
};

inline BalanceReport balance_diagnostics(const VectorXd& t, const MatrixXd& v,
                                         const WeightVector& w) {
    if (v.rows() != t.size() || w.weights.size() != t.size())
        throw InvalidInputError("balance_diagnostics: length mismatch");
    BalanceReport rep;
    const VectorXd ones = VectorXd::Ones(t.size());
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        BalanceEntry e;
        bool deg = false;
        e.pearson_unweighted = weighted_pearson(t, v.col(j), ones);
        e.pearson_weighted = weighted_pearson(t, v.col(j), w.weights, &deg);
        e.spearman_unweighted = weighted_spearman(t, v.col(j), ones);
        e.spearman_weighted = weighted_spearman(t, v.col(j), w.weights);
        e.degenerate = deg;
        rep.max_abs_corr = std::max(rep.max_abs_corr, std::abs(e.pearson_weighted));
        rep.max_abs_corr_unweighted =
            std::max(rep.max_abs_corr_unweighted, std::abs(e.pearson_unweighted));
        rep.mean_abs_spearman += std::abs(e.spearman_weighted);
        rep.mean_abs_spearman_unweighted += std::abs(e.spearman_unweighted);
        rep.covariates.push_back(e);
    }
    if (v.cols() > 0) {
        rep.mean_abs_spearman /= static_cast<double>(v.cols());
        rep.mean_abs_spearman_unweighted /= static_cast<double>(v.cols());
    }
    return rep;
}

struct PositivityReport {
    double fraction_below = 0.0;
    double floor = 0.0;
    bool flagged = false;  // > 5% of samples below the density floor
};

/// Fraction of samples whose estimated conditional treatment density falls
/// below `floor`; near-zero density means the weighting has no support there.
inline PositivityReport positivity_check(const VectorXd& t, const MatrixXd& v,
                                         const TreatmentModel& model, double floor) {
    PositivityReport rep;
    rep.floor = floor;
    if (floor <= 0.0) return rep;
    const VectorXd dens = conditional_density_batch(model, v, t);
    Eigen::Index below = 0;
    for (Eigen::Index i = 0; i < dens.size(); ++i)
        if (dens(i) < floor) ++below;
    rep.fraction_below = static_cast<double>(below) / static_cast<double>(dens.size());
    rep.flagged = rep.fraction_below > 0.05;
    return rep;
}

/// Clips weights above the given percentile (linear-interpolation definition)
/// to the percentile value, then renormalizes to mean 1.
inline WeightVector weight_trim(const WeightVector& w, double percentile) {
    if (percentile <= 50.0 || percentile > 100.0)
        throw InvalidInputError("weight_trim: percentile must be in (50, 100]");
    if (percentile == 100.0) return w;
    std::vector<double> sorted(w.weights.data(), w.weights.data() + w.weights.size());
    std::sort(sorted.begin(), sorted.end());
    const double h = (static_cast<double>(sorted.size()) - 1.0) * percentile / 100.0;
    const std::size_t lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    const double cap = lo + 1 < sorted.size()
                           ? sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
                           : sorted.back();
    WeightVector out = normalize_weights(w.weights.cwiseMin(cap), w.estimator);
    out.warnings = w.warnings;
    return out;
}

// ---------------------------------------------------------------------------
// estimator configuration
// ---------------------------------------------------------------------------

struct OptWeightParams {
    double delta = 0.04;      // balance tolerance on standardized cross-moments
    int max_iter = 100000;    // projection-iteration budget

    void validate() const {
        if (delta <= 0.0) throw InvalidInputError("optweight: delta must be > 0");
        if (max_iter < 1) throw InvalidInputError("optweight: max_iter must be >= 1");
    }
};

struct WeightingConfig {
    double trim_percentile = 99.0;          // density-ratio estimators only
    double positivity_floor = 1e-10;
    OptWeightParams optweight;
    std::vector<int> pswgbm_grid = {10, 25, 50, 100, 200};
    GbmParams gbm;
    int superlearner_folds = 5;
};

// ---------------------------------------------------------------------------
// IPTW
// ---------------------------------------------------------------------------

/// Stabilized inverse probability of treatment weights. Continuous treatments
/// use a Gaussian density ratio around an OLS treatment model; binary ones use
/// the Bernoulli probability ratio from a logistic model.
inline WeightVector iptw_weights(const VectorXd& t, const MatrixXd& v, FeatureKind kind,
                                 const WeightingConfig& cfg = {}) {
    if (kind == FeatureKind::binary) {
        const TreatmentModel model = fit_logistic(v, t);
        const VectorXd p = model.predict(v);
        const double pbar = t.mean();
        VectorXd w(t.size());
        for (Eigen::Index i = 0; i < t.size(); ++i)
            w(i) = t(i) == 1.0 ? pbar / p(i) : (1.0 - pbar) / (1.0 - p(i));
        WeightVector out = weight_trim(normalize_weights(w, WeightEstimator::iptw),
                                       cfg.trim_percentile);
        Eigen::Index below = 0;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double dens = t(i) == 1.0 ? p(i) : 1.0 - p(i);
            if (dens < cfg.positivity_floor) ++below;
        }
        if (static_cast<double>(below) > 0.05 * static_cast<double>(t.size()))
            out.warnings.push_back("iptw: positivity violation (propensity below floor for >5% of samples)");
        return out;
    }
    const TreatmentModel model = fit_ols(v, t);
    const VectorXd raw = detail::stabilized_ratio(t, model.predict(v), model.residual_sd());
    WeightVector out = weight_trim(normalize_weights(raw, WeightEstimator::iptw),
                                   cfg.trim_percentile);
    const PositivityReport pos = positivity_check(t, v, model, cfg.positivity_floor);
    if (pos.flagged)
        out.warnings.push_back("iptw: positivity violation (conditional density below floor for >5% of samples)");
    return out;
}

// ---------------------------------------------------------------------------
// CBPS
// ---------------------------------------------------------------------------

namespace detail {

/// Compact BFGS with numerical central-difference gradients and Armijo
/// backtracking. Small problems only (dimension = covariate count + 1).
template <typename F>
inline VectorXd minimize_bfgs(const F& f, VectorXd x, int max_iter, double gtol,
                              bool* converged = nullptr) {
    const Eigen::Index p = x.size();
    auto gradient = [&](const VectorXd& at) {
        VectorXd g(p);
        for (Eigen::Index j = 0; j < p; ++j) {
            const double h = 1e-6 * (1.0 + std::abs(at(j)));
            VectorXd a = at, b = at;
            a(j) += h;
            b(j) -= h;
            g(j) = (f(a) - f(b)) / (2.0 * h);
        }
        return g;
    };
    MatrixXd hinv = MatrixXd::Identity(p, p);
    VectorXd g = gradient(x);
    double fx = f(x);
    VectorXd best_x = x;
    double best_f = fx;
    if (converged) *converged = false;
    for (int it = 0; it < max_iter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < gtol) {
            if (converged) *converged = true;
            break;
        }
        VectorXd dir = -(hinv * g);
        if (dir.dot(g) >= 0.0) dir = -g;  // reset on loss of descent
        double step = 1.0;
        double fn = fx;
        VectorXd xn = x;
        const double slope = g.dot(dir);
        while (step > 1e-14) {
            xn = x + step * dir;
            fn = f(xn);
            if (fn <= fx + 1e-4 * step * slope) break;
            step *= 0.5;
        }
        if (step <= 1e-14) break;  // stuck
        const VectorXd gn = gradient(xn);
        const VectorXd s = xn - x;
        const VectorXd yv = gn - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12) {
            const MatrixXd eye = MatrixXd::Identity(p, p);
            const MatrixXd a = eye - (s * yv.transpose()) / sy;
            hinv = a * hinv * a.transpose() + (s * s.transpose()) / sy;
        }
        x = xn;
        fx = fn;
        g = gn;
        if (fx < best_f) {
            best_f = fx;
            best_x = x;
        }
    }
    return best_f <= fx ? best_x : x;
}

}  // namespace detail

/// Covariate balancing propensity score for continuous treatments: a Gaussian
/// GPS whose regression parameters minimize the squared weighted
/// treatment-covariate cross-moments plus a score-anchoring term
/// lambda_s * ||likelihood gradient||^2. Weights are the stabilized density
/// ratio at the minimizer; no trimming, since that would undo the optimized
/// balance.
inline WeightVector cbps_weights(const VectorXd& t, const MatrixXd& v,
                                 const WeightingConfig& cfg = {}, double lambda_score = 0.1,
                                 int max_iter = 200) {
    if (detail::sample_sd(t) <= 0.0)
        throw DegenerateTreatmentError("cbps: treatment has zero variance");
    const TreatmentModel ols = fit_ols(v, t);
    const double sd = ols.residual_sd();
    const MatrixXd d = detail::with_intercept(v);
    const VectorXd ts = detail::standardized(t);
    const MatrixXd vs = detail::standardized_columns(v);
    const double n = static_cast<double>(t.size());

    const VectorXd theta0 = d.colPivHouseholderQr().solve(t);

    auto loss = [&](const VectorXd& theta) {
        const VectorXd pred = d * theta;
        VectorXd w = detail::stabilized_ratio(t, pred, sd);
        w *= n / w.sum();
        double bal2 = 0.0;
        for (Eigen::Index j = 0; j < vs.cols(); ++j) {
            const double b = w.cwiseProduct(ts).dot(vs.col(j)) / n;
            bal2 += b * b;
        }
        const VectorXd score = d.transpose() * (t - pred) / (n * sd * sd);
        return bal2 + lambda_score * score.squaredNorm();
    };

    bool converged = false;
    const VectorXd theta = detail::minimize_bfgs(loss, theta0, max_iter, 1e-10, &converged);
    const VectorXd raw = detail::stabilized_ratio(t, d * theta, sd);
    WeightVector out = normalize_weights(raw, WeightEstimator::cbps);
    if (!converged)
        out.warnings.push_back("cbps: optimizer budget exhausted; returning best iterate");
    return out;
}

// ---------------------------------------------------------------------------
// NPCBPS (entropy balancing surrogate)
// ---------------------------------------------------------------------------

/// Maximum-entropy weights under the balance constraints
/// E_w[std(T) * std(V_j)] = 0, solved in dual form: weights are exponential in
/// the Lagrange multipliers, found by damped Newton on the dual. When exact
/// balance is infeasible (the constraint columns do not change sign) the dual
/// has no finite minimizer; a ridge on the multipliers is escalated x10 until
/// the solve stabilizes, trading exactness for usable weights, and a warning
/// records the relaxation.
inline WeightVector npcbps_weights(const VectorXd& t, const MatrixXd& v,
                                   const WeightingConfig& cfg = {}, double tol = 1e-10,
                                   int max_newton = 200) {
    const Eigen::Index n = t.size(), m = v.cols();
    if (v.rows() != n) throw InvalidInputError("npcbps: V/T length mismatch");
    if (detail::sample_sd(t) <= 0.0)
        throw DegenerateTreatmentError("npcbps: treatment has zero variance");
    if (m == 0) {
        WeightVector out = normalize_weights(VectorXd::Ones(n), WeightEstimator::npcbps);
        return out;  // no constraints: entropy maximum is uniform
    }
    const VectorXd ts = detail::standardized(t);
    MatrixXd c(n, m);
    for (Eigen::Index j = 0; j < m; ++j)
        c.col(j) = ts.cwiseProduct(detail::standardized(v.col(j)));

    const double ess_floor = std::min(10.0, static_cast<double>(n) / 2.0);
    const double ridges[] = {0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    VectorXd best_w = VectorXd::Ones(n);
    double best_viol = std::numeric_limits<double>::infinity();
    double used_ridge = 0.0;
    bool solved = false;

    for (const double kappa : ridges) {
        VectorXd lam = VectorXd::Zero(m);
        bool converged = false;
        auto dual = [&](const VectorXd& l) {
            const VectorXd e = -(c * l);
            const double mx = e.maxCoeff();
            return mx + std::log((e.array() - mx).exp().sum()) + 0.5 * kappa * l.squaredNorm();
        };
        for (int it = 0; it < max_newton; ++it) {
            VectorXd e = -(c * lam);
            e.array() -= e.maxCoeff();
            VectorXd p = e.array().exp();
            p /= p.sum();
            const VectorXd cbar = c.transpose() * p;
            const VectorXd grad = -cbar + kappa * lam;
            if (grad.lpNorm<Eigen::Infinity>() < std::max(tol, kappa * 1e-10)) {
                converged = true;
                break;
            }
            MatrixXd h = c.transpose() * p.asDiagonal() * c - cbar * cbar.transpose();
            h.diagonal().array() += kappa + 1e-12;
            const VectorXd dir = h.ldlt().solve(-grad);
            const double f0 = dual(lam);
            const double slope = grad.dot(dir);
            double step = 1.0;
            while (step > 1e-14 && dual(lam + step * dir) > f0 + 1e-4 * step * slope) step *= 0.5;
            if (step <= 1e-14) break;
            lam += step * dir;
        }
        VectorXd e = -(c * lam);
        e.array() -= e.maxCoeff();
        const VectorXd w = e.array().exp();
        const WeightVector cand = normalize_weights(w, WeightEstimator::npcbps);
        const double viol = (c.transpose() * cand.weights).lpNorm<Eigen::Infinity>() /
                            static_cast<double>(n);
        if (viol < best_viol) {
            best_viol = viol;
            best_w = cand.weights;
            used_ridge = kappa;
        }
        if (converged && cand.ess >= ess_floor && (kappa > 0.0 || viol < 1e-6)) {
            best_w = cand.weights;
            best_viol = viol;
            used_ridge = kappa;
            solved = true;
            break;
        }
    }
    WeightVector out = normalize_weights(best_w, WeightEstimator::npcbps);
    if (used_ridge > 0.0 || !solved)
        out.warnings.push_back("npcbps: exact balance infeasible; relaxed with multiplier ridge " +
                               std::to_string(used_ridge) + " (residual imbalance " +
                               std::to_string(best_viol) + ")");
    return out;
}

// ---------------------------------------------------------------------------
// PSWGBM
// ---------------------------------------------------------------------------

/// Boosted-model propensity weighting: fits one GBM at the largest grid entry,
/// forms stabilized density-ratio weights at each staged tree count, and keeps
/// the stage minimizing the mean absolute weighted Spearman correlation
/// between treatment and covariates.
inline WeightVector pswgbm_weights(const VectorXd& t, const MatrixXd& v,
                                   const std::vector<int>& grid, const WeightingConfig& cfg = {}) {
    if (grid.empty()) throw InvalidInputError("pswgbm: empty tree-count grid");
    if (detail::sample_sd(t) <= 0.0)
        throw DegenerateTreatmentError("pswgbm: treatment has zero variance");
    GbmParams params = cfg.gbm;
    params.n_trees = *std::max_element(grid.begin(), grid.end());
    const GbmModel gbm = fit_gbm_core(v, t, params);

    MatrixXd vranks(v.rows(), v.cols());
    for (Eigen::Index j = 0; j < v.cols(); ++j) vranks.col(j) = detail::midranks(v.col(j));
    const VectorXd tranks = detail::midranks(t);

    const double dof = std::max<double>(static_cast<double>(t.size() - v.cols() - 1), 1.0);
    WeightVector best;
    double best_crit = std::numeric_limits<double>::infinity();
    for (const int stage : grid) {
        const VectorXd pred = gbm.predict(v, stage);
        const double rsd =
            detail::floored_residual_sd(std::sqrt((t - pred).squaredNorm() / dof), t);
        const VectorXd raw = detail::stabilized_ratio(t, pred, rsd);
        WeightVector cand = weight_trim(normalize_weights(raw, WeightEstimator::pswgbm),
                                        cfg.trim_percentile);
        double crit = 0.0;
        for (Eigen::Index j = 0; j < v.cols(); ++j)
            crit += std::abs(weighted_pearson(tranks, vranks.col(j), cand.weights));
        if (v.cols() > 0) crit /= static_cast<double>(v.cols());
        if (crit < best_crit) {
            best_crit = crit;
            best = std::move(cand);
        }
    }
    return best;
}

inline WeightVector pswgbm_weights(const VectorXd& t, const MatrixXd& v,
                                   const WeightingConfig& cfg = {}) {
    return pswgbm_weights(t, v, cfg.pswgbm_grid, cfg);
}

// ---------------------------------------------------------------------------
// OPTWEIGHT
// ---------------------------------------------------------------------------

/// Minimal-variance balancing weights: the projection of the uniform vector
/// onto {w >= 0, mean(w) = 1, |E_w[std(T) std(V_j)]| <= delta,
/// |E_w[std(T)]| <= delta}, computed with Dykstra's alternating projections
/// (whose fixed point is exactly argmin sum (w_i - 1)^2 over the
/// intersection). If the projections fail to settle within the budget --
/// balance at this delta is infeasible, or only reachable by concentrating
/// the weights on a handful of samples -- delta is escalated x10 and the
/// relaxation recorded as a warning; an error names the violated constraints
/// only when even the loosest pass fails.
inline WeightVector optweights(const VectorXd& t, const MatrixXd& v, const OptWeightParams& params,
                               const WeightingConfig& cfg = {}) {
    params.validate();
    const Eigen::Index n = t.size(), m = v.cols();
    if (v.rows() != n) throw InvalidInputError("optweight: V/T length mismatch");
    if (detail::sample_sd(t) <= 0.0)
        throw DegenerateTreatmentError("optweight: treatment has zero variance");
    const VectorXd ts = detail::standardized(t);
    MatrixXd c(n, m + 1);
    for (Eigen::Index j = 0; j < m; ++j)
        c.col(j) = ts.cwiseProduct(detail::standardized(v.col(j)));
    c.col(m) = ts;
    const VectorXd norms2 = c.colwise().squaredNorm();
    const double nd = static_cast<double>(n);
    const double ess_floor = std::min(10.0, nd / 2.0);

    double delta = params.delta;
    const int escalations = 4;
    for (int attempt = 0; attempt <= escalations; ++attempt) {
        VectorXd w = VectorXd::Ones(n);
        std::vector<VectorXd> corr(static_cast<std::size_t>(m + 3), VectorXd::Zero(n));
        bool converged = false;
        const int check_every = 25;
        double best_violation = std::numeric_limits<double>::infinity();
        int since_improvement = 0;
        for (int it = 0; it < params.max_iter; ++it) {
            const VectorXd w_before = w;
            // mean(w) = 1 hyperplane
            {
                VectorXd z = w + corr[0];
                const double shift = (nd - z.sum()) / nd;
                VectorXd wn = z.array() + shift;
                corr[0] = z - wn;
                w = std::move(wn);
            }
            // w >= 0 orthant
            {
                VectorXd z = w + corr[1];
                VectorXd wn = z.cwiseMax(0.0);
                corr[1] = z - wn;
                w = std::move(wn);
            }
            // |c_k' w| <= n*delta slabs
            for (Eigen::Index k = 0; k <= m; ++k) {
                if (norms2(k) <= 0.0) continue;
                VectorXd z = w + corr[static_cast<std::size_t>(k + 2)];
                const double val = c.col(k).dot(z);
                const double bound = nd * delta;
                VectorXd wn;
                if (val > bound) wn = z - c.col(k) * ((val - bound) / norms2(k));
                else if (val < -bound) wn = z - c.col(k) * ((val + bound) / norms2(k));
                else wn = z;
                corr[static_cast<std::size_t>(k + 2)] = z - wn;
                w = std::move(wn);
            }
            if (it % check_every == check_every - 1 || it == params.max_iter - 1) {
                const double slack = 1e-7 * nd;
                double violation = std::max(0.0, std::abs(w.sum() - nd) - slack);
                violation = std::max(violation, -std::min(0.0, w.minCoeff() + 1e-9));
                for (Eigen::Index k = 0; k <= m; ++k)
                    violation =
                        std::max(violation, std::abs(c.col(k).dot(w)) - (nd * delta + slack));
                if (violation <= 0.0) {
                    if ((w - w_before).lpNorm<Eigen::Infinity>() < 1e-11) {
                        converged = true;
                        break;
                    }
                    since_improvement = 0;  // inside the feasible set, still settling
                } else if (violation < best_violation - 1e-10) {
                    best_violation = violation;
                    since_improvement = 0;
                } else if (++since_improvement >= 2000 / check_every) {
                    // infeasible intersections make Dykstra cycle without
                    // progress; give up early and escalate
                    break;
                }
            }
        }
        if (converged) {
            WeightVector out = normalize_weights(w.cwiseMax(0.0), WeightEstimator::optweight);
            if (out.ess >= ess_floor) {
                if (attempt > 0)
                    out.warnings.push_back(
                        "optweight: infeasible or degenerate at requested delta; relaxed to delta=" +
                        std::to_string(delta));
                return out;
            }
        }
        delta *= 10.0;
    }
    // name the constraints still violated at the original delta
    VectorXd w = VectorXd::Ones(n);
    std::string names;
    for (Eigen::Index k = 0; k <= m; ++k) {
        if (std::abs(c.col(k).dot(w)) > nd * params.delta) {
            if (!names.empty()) names += ", ";
            names += k < m ? ("covariate " + std::to_string(k)) : std::string("treatment mean");
        }
    }
    throw EstimationError("optweight: balance infeasible at delta=" + std::to_string(params.delta) +
                          " and all relaxations; violated constraints: " +
                          (names.empty() ? std::string("(projection did not settle)") : names));
}

inline WeightVector optweights(const VectorXd& t, const MatrixXd& v,
                               const WeightingConfig& cfg = {}) {
    return optweights(t, v, cfg.optweight, cfg);
}

// ---------------------------------------------------------------------------
// SUPER
// ---------------------------------------------------------------------------

/// Stabilized density-ratio weights around the cross-validated super-learner
/// treatment model.
inline WeightVector super_weights(const VectorXd& t, const MatrixXd& v,
                                  const WeightingConfig& cfg = {}) {
    if (detail::sample_sd(t) <= 0.0)
        throw DegenerateTreatmentError("super: treatment has zero variance");
    const TreatmentModel model = fit_superlearner(v, t, cfg.superlearner_folds, cfg.gbm);
    const VectorXd raw = detail::stabilized_ratio(t, model.predict(v), model.residual_sd());
    WeightVector out = weight_trim(normalize_weights(raw, WeightEstimator::super),
                                   cfg.trim_percentile);
    const PositivityReport pos = positivity_check(t, v, model, cfg.positivity_floor);
    if (pos.flagged)
        out.warnings.push_back("super: positivity violation (conditional density below floor for >5% of samples)");
    return out;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

/// Runs the selected estimator. Binary treatments are supported by IPTW
/// (logistic propensity); the continuous-treatment estimators reject them.
inline WeightVector compute_weights(WeightEstimator estimator, const VectorXd& t,
                                    const MatrixXd& v, FeatureKind kind,
                                    const WeightingConfig& cfg = {}) {
    if (kind == FeatureKind::binary && estimator != WeightEstimator::iptw)
        throw DegenerateTreatmentError(std::string(estimator_name(estimator)) +
                                       ": requires a continuous treatment (binary features are "
                                       "estimated with iptw)");
    switch (estimator) {
        case WeightEstimator::iptw: return iptw_weights(t, v, kind, cfg);
        case WeightEstimator::cbps: return cbps_weights(t, v, cfg);
        case WeightEstimator::npcbps: return npcbps_weights(t, v, cfg);
        case WeightEstimator::pswgbm: return pswgbm_weights(t, v, cfg);
        case WeightEstimator::optweight: return optweights(t, v, cfg.optweight, cfg);
        case WeightEstimator::super: return super_weights(t, v, cfg);
    }
    throw InvalidInputError("unknown estimator");
}

}  // namespace causalprobe
