#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "causalprobe/core.hpp"

namespace causalprobe {

enum class TreatmentModelKind { ols, logistic, gbm, knn, superlearner };

struct GbmParams {
    int n_trees = 100;
    int max_depth = 2;
    double learning_rate = 0.1;
    int min_samples_leaf = 5;

    void validate() const {
        if (n_trees < 1) throw InvalidInputError("gbm: n_trees must be >= 1");
        if (max_depth < 1) throw InvalidInputError("gbm: max_depth must be >= 1");
        if (learning_rate <= 0.0 || learning_rate > 1.0)
            throw InvalidInputError("gbm: learning_rate must be in (0,1]");
        if (min_samples_leaf < 1) throw InvalidInputError("gbm: min_samples_leaf must be >= 1");
    }
};

inline double gaussian_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * 2.5066282746310005024);  // sd * sqrt(2*pi)
}

namespace detail {

constexpr double kResidualSdFloorScale = 1e-6;

inline double sample_sd(const VectorXd& x) {
    if (x.size() < 2) return 0.0;
    const double m = x.mean();
    return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

inline double floored_residual_sd(double raw, const VectorXd& t) {
    const double floor = kResidualSdFloorScale * sample_sd(t);
    return std::max(raw, std::max(floor, std::numeric_limits<double>::min()));
}

inline MatrixXd with_intercept(const MatrixXd& v) {
    MatrixXd d(v.rows(), v.cols() + 1);
    d.col(0).setOnes();
    if (v.cols() > 0) d.rightCols(v.cols()) = v;
    return d;
}

// ---- regression trees for gradient boosting ----

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1, right = -1;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict_row(const MatrixXd& v, Eigen::Index row) const {
        int cur = 0;
        while (nodes[static_cast<std::size_t>(cur)].feature >= 0) {
            const auto& nd = nodes[static_cast<std::size_t>(cur)];
            cur = v(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(cur)].value;
    }
};

// Greedy exhaustive least-squares split. Returns false if no split satisfies
// the leaf-size constraint or none reduces the SSE.
inline bool best_split(const MatrixXd& v, const VectorXd& r, const std::vector<int>& idx,
                       int min_leaf, int& out_feature, double& out_threshold) {
    const int n = static_cast<int>(idx.size());
    if (n < 2 * min_leaf) return false;
    double total = 0.0;
    for (int i : idx) total += r(i);
    double best_gain = 1e-12;
    bool found = false;
    std::vector<int> order(idx);
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (v(a, j) != v(b, j)) return v(a, j) < v(b, j);
            return a < b;
        });
        double left_sum = 0.0;
        for (int k = 0; k < n - 1; ++k) {
            left_sum += r(order[static_cast<std::size_t>(k)]);
            const int nl = k + 1, nr = n - nl;
            if (nl < min_leaf) continue;
            if (nr < min_leaf) break;
            const double a = v(order[static_cast<std::size_t>(k)], j);
            const double b = v(order[static_cast<std::size_t>(k + 1)], j);
            if (a == b) continue;  // can't separate equal values
            const double right_sum = total - left_sum;
            const double gain = left_sum * left_sum / nl + right_sum * right_sum / nr -
                                total * total / n;
            if (gain > best_gain) {
                best_gain = gain;
                out_feature = static_cast<int>(j);
                out_threshold = 0.5 * (a + b);
                found = true;
            }
        }
    }
    return found;
}

inline int grow_tree(Tree& tree, const MatrixXd& v, const VectorXd& r, std::vector<int> idx,
                     int depth_left, int min_leaf) {
    const int me = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    int feature;
    double threshold;
    if (depth_left <= 0 || !best_split(v, r, idx, min_leaf, feature, threshold)) {
        double sum = 0.0;
        for (int i : idx) sum += r(i);
        tree.nodes[static_cast<std::size_t>(me)].value =
            idx.empty() ? 0.0 : sum / static_cast<double>(idx.size());
        return me;
    }
    std::vector<int> left, right;
    for (int i : idx)
        (v(i, feature) <= threshold ? left : right).push_back(i);
    tree.nodes[static_cast<std::size_t>(me)].feature = feature;
    tree.nodes[static_cast<std::size_t>(me)].threshold = threshold;
    const int l = grow_tree(tree, v, r, std::move(left), depth_left - 1, min_leaf);
    const int rn = grow_tree(tree, v, r, std::move(right), depth_left - 1, min_leaf);
    tree.nodes[static_cast<std::size_t>(me)].left = l;
    tree.nodes[static_cast<std::size_t>(me)].right = rn;
    return me;
}

}  // namespace detail

/// Stagewise least-squares boosting of shallow regression trees.
/// prediction = init + learning_rate * sum of tree outputs.
struct GbmModel {
    double init = 0.0;
    GbmParams params;
    std::vector<detail::Tree> trees;

    /// Prediction using the first `stages` trees (all trees when negative).
    VectorXd predict(const MatrixXd& v, int stages = -1) const {
        const int use = stages < 0 ? static_cast<int>(trees.size())
                                   : std::min<int>(stages, static_cast<int>(trees.size()));
        VectorXd out = VectorXd::Constant(v.rows(), init);
        for (int s = 0; s < use; ++s)
            for (Eigen::Index i = 0; i < v.rows(); ++i)
                out(i) += params.learning_rate * trees[static_cast<std::size_t>(s)].predict_row(v, i);
        return out;
    }
};

inline GbmModel fit_gbm_core(const MatrixXd& v, const VectorXd& t, const GbmParams& params) {
    params.validate();
    if (t.size() < 2 * params.min_samples_leaf)
        throw InvalidInputError("gbm: need at least 2*min_samples_leaf samples");
    GbmModel model;
    model.params = params;
    model.init = t.mean();
    VectorXd resid = t.array() - model.init;
    std::vector<int> all(static_cast<std::size_t>(t.size()));
    std::iota(all.begin(), all.end(), 0);
    for (int s = 0; s < params.n_trees; ++s) {
        detail::Tree tree;
        if (v.cols() == 0) {
            tree.nodes.push_back({-1, 0.0, 0.0, -1, -1});  // nothing to split on
        } else {
            detail::grow_tree(tree, v, resid, all, params.max_depth, params.min_samples_leaf);
        }
        for (Eigen::Index i = 0; i < t.size(); ++i)
            resid(i) -= params.learning_rate * tree.predict_row(v, i);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

namespace detail {

struct TreatmentModelImpl {
    virtual ~TreatmentModelImpl() = default;
    virtual TreatmentModelKind kind() const = 0;
    virtual VectorXd predict(const MatrixXd& v) const = 0;
    virtual double residual_sd() const = 0;
};

struct OlsImpl : TreatmentModelImpl {
    VectorXd coef;  // intercept first
    double rsd = 1.0;

    TreatmentModelKind kind() const override { return TreatmentModelKind::ols; }
    VectorXd predict(const MatrixXd& v) const override {
        if (v.cols() + 1 != coef.size()) throw InvalidInputError("ols: covariate arity mismatch");
        VectorXd out = VectorXd::Constant(v.rows(), coef(0));
        if (v.cols() > 0) out += v * coef.tail(coef.size() - 1);
        return out;
    }
    double residual_sd() const override { return rsd; }
};

struct LogisticImpl : TreatmentModelImpl {
    VectorXd coef;

    TreatmentModelKind kind() const override { return TreatmentModelKind::logistic; }
    VectorXd predict(const MatrixXd& v) const override {
        if (v.cols() + 1 != coef.size())
            throw InvalidInputError("logistic: covariate arity mismatch");
        VectorXd eta = VectorXd::Constant(v.rows(), coef(0));
        if (v.cols() > 0) eta += v * coef.tail(coef.size() - 1);
        return eta.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
    }
    double residual_sd() const override {
        throw WrongModelKindError("logistic treatment model has no residual sd");
    }
};

struct GbmImpl : TreatmentModelImpl {
    GbmModel model;
    double rsd = 1.0;

    TreatmentModelKind kind() const override { return TreatmentModelKind::gbm; }
    VectorXd predict(const MatrixXd& v) const override { return model.predict(v); }
    double residual_sd() const override { return rsd; }
};

struct KnnImpl : TreatmentModelImpl {
    MatrixXd vz;  // standardized training covariates
    VectorXd t;
    VectorXd mean, sd;
    int k = 1;
    double rsd = 1.0;

    TreatmentModelKind kind() const override { return TreatmentModelKind::knn; }
    VectorXd predict(const MatrixXd& v) const override {
        if (v.cols() != vz.cols()) throw InvalidInputError("knn: covariate arity mismatch");
        VectorXd out(v.rows());
        const Eigen::Index n = vz.rows();
        std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n));
        for (Eigen::Index q = 0; q < v.rows(); ++q) {
            Eigen::RowVectorXd z(v.cols());
            for (Eigen::Index j = 0; j < v.cols(); ++j) z(j) = (v(q, j) - mean(j)) / sd(j);
            for (Eigen::Index i = 0; i < n; ++i)
                dist[static_cast<std::size_t>(i)] = {(vz.row(i) - z).squaredNorm(),
                                                     static_cast<int>(i)};
            std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
            double acc = 0.0;
            for (int a = 0; a < k; ++a) acc += t(dist[static_cast<std::size_t>(a)].second);
            out(q) = acc / k;
        }
        return out;
    }
    double residual_sd() const override { return rsd; }
};

struct SuperImpl;  // below, after the fit functions it combines

}  // namespace detail

/// Fitted regressor for the treatment given covariates: E[T|V] for the
/// continuous kinds, P(T=1|V) for the logistic kind. Immutable and shareable.
class TreatmentModel {
  public:
    explicit TreatmentModel(std::shared_ptr<const detail::TreatmentModelImpl> impl)
        : impl_(std::move(impl)) {}

    TreatmentModelKind kind() const { return impl_->kind(); }
    VectorXd predict(const MatrixXd& v) const { return impl_->predict(v); }
    double predict_one(const Eigen::RowVectorXd& v) const { return impl_->predict(v)(0); }
    double residual_sd() const { return impl_->residual_sd(); }
    const detail::TreatmentModelImpl& impl() const { return *impl_; }

  private:
    std::shared_ptr<const detail::TreatmentModelImpl> impl_;
};

/// Ordinary least squares of T on V (with intercept). Rank-deficient designs
/// fall back to a small deterministic ridge instead of failing.
inline TreatmentModel fit_ols(const MatrixXd& v, const VectorXd& t) {
    const Eigen::Index n = t.size(), p = v.cols() + 1;
    if (v.rows() != n) throw InvalidInputError("ols: V/T length mismatch");
    if (n <= p) throw InvalidInputError("ols: need n > n_covariates + 1");
    const MatrixXd d = detail::with_intercept(v);
    auto impl = std::make_shared<detail::OlsImpl>();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(d);
    if (qr.rank() == p) {
        impl->coef = qr.solve(t);
    } else {
        // ridge fallback keeps collinear covariate sets usable
        MatrixXd gram = d.transpose() * d;
        const double lambda = 1e-8 * gram.trace() / static_cast<double>(p);
        gram.diagonal().array() += lambda;
        impl->coef = gram.ldlt().solve(d.transpose() * t);
    }
    const VectorXd resid = t - d * impl->coef;
    const double dof = static_cast<double>(n - p);
    impl->rsd = detail::floored_residual_sd(std::sqrt(resid.squaredNorm() / dof), t);
    return TreatmentModel(impl);
}

/// L2-penalized logistic regression by Newton iterations (penalty on the
/// slopes only, lambda 1e-4); keeps coefficients finite on separable data.
inline TreatmentModel fit_logistic(const MatrixXd& v, const VectorXd& t, double lambda = 1e-4,
                                   int max_iter = 100) {
    const Eigen::Index n = t.size(), p = v.cols() + 1;
    if (v.rows() != n) throw InvalidInputError("logistic: V/T length mismatch");
    bool has0 = false, has1 = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (t(i) == 0.0) has0 = true;
        else if (t(i) == 1.0) has1 = true;
        else throw InvalidInputError("logistic: treatment must be 0/1");
    }
    if (!has0 || !has1)
        throw DegenerateTreatmentError("logistic: both treatment classes must be present");
    const MatrixXd d = detail::with_intercept(v);
    VectorXd beta = VectorXd::Zero(p);
    VectorXd pen = VectorXd::Constant(p, lambda);
    pen(0) = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        const VectorXd eta = d * beta;
        const VectorXd mu = eta.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
        const VectorXd g = d.transpose() * (t - mu) - pen.cwiseProduct(beta);
        MatrixXd h = d.transpose() * (mu.array() * (1.0 - mu.array())).matrix().asDiagonal() * d;
        h.diagonal() += pen;
        h.diagonal().array() += 1e-12;
        const VectorXd step = h.ldlt().solve(g);
        beta += step;
        if (step.lpNorm<Eigen::Infinity>() < 1e-12) break;
    }
    auto impl = std::make_shared<detail::LogisticImpl>();
    impl->coef = beta;
    return TreatmentModel(impl);
}

inline TreatmentModel fit_gbm(const MatrixXd& v, const VectorXd& t, const GbmParams& params = {}) {
    auto impl = std::make_shared<detail::GbmImpl>();
    impl->model = fit_gbm_core(v, t, params);
    const VectorXd resid = t - impl->model.predict(v);
    const double dof = std::max<double>(static_cast<double>(t.size() - v.cols() - 1), 1.0);
    impl->rsd = detail::floored_residual_sd(std::sqrt(resid.squaredNorm() / dof), t);
    return TreatmentModel(impl);
}

/// k-nearest-neighbor regression on internally standardized covariates
/// (so affine rescaling of a column does not change neighbor sets).
inline TreatmentModel fit_knn(const MatrixXd& v, const VectorXd& t, int k) {
    const Eigen::Index n = t.size();
    if (v.rows() != n) throw InvalidInputError("knn: V/T length mismatch");
    if (k < 1 || k > n) throw InvalidInputError("knn: k out of range");
    auto impl = std::make_shared<detail::KnnImpl>();
    impl->k = k;
    impl->t = t;
    impl->mean.resize(v.cols());
    impl->sd.resize(v.cols());
    impl->vz.resize(n, v.cols());
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        impl->mean(j) = v.col(j).mean();
        const double s = detail::sample_sd(v.col(j));
        impl->sd(j) = s > 0.0 ? s : 1.0;
        impl->vz.col(j) = (v.col(j).array() - impl->mean(j)) / impl->sd(j);
    }
    const VectorXd resid = t - impl->predict(v);
    const double dof = std::max<double>(static_cast<double>(n - v.cols() - 1), 1.0);
    impl->rsd = detail::floored_residual_sd(std::sqrt(resid.squaredNorm() / dof), t);
    return TreatmentModel(impl);
}

namespace detail {

struct SuperImpl : TreatmentModelImpl {
    std::vector<TreatmentModel> candidates;
    std::vector<double> weights;         // simplex: nonnegative, sum 1
    double cv_risk = 0.0;                // mean squared out-of-fold error of the blend
    std::vector<double> candidate_risks; // per-candidate out-of-fold MSE, same folds
    double rsd = 1.0;

    TreatmentModelKind kind() const override { return TreatmentModelKind::superlearner; }
    VectorXd predict(const MatrixXd& v) const override {
        VectorXd out = VectorXd::Zero(v.rows());
        for (std::size_t c = 0; c < candidates.size(); ++c)
            if (weights[c] > 0.0) out += weights[c] * candidates[c].predict(v);
        return out;
    }
    double residual_sd() const override { return rsd; }
};

/// Minimizes ||y - P a||^2 over the probability simplex by enumerating
/// support sets; exact for the handful of candidates used here.
inline std::vector<double> simplex_least_squares(const MatrixXd& preds, const VectorXd& y,
                                                 double* out_risk = nullptr) {
    const int c = static_cast<int>(preds.cols());
    std::vector<double> best;
    double best_risk = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < (1u << c); ++mask) {
        std::vector<int> sel;
        for (int j = 0; j < c; ++j)
            if (mask & (1u << j)) sel.push_back(j);
        const int r = static_cast<int>(sel.size());
        MatrixXd p(preds.rows(), r);
        for (int j = 0; j < r; ++j) p.col(j) = preds.col(sel[static_cast<std::size_t>(j)]);
        MatrixXd kkt(r + 1, r + 1);
        kkt.setZero();
        kkt.topLeftCorner(r, r) = p.transpose() * p;
        kkt.topLeftCorner(r, r).diagonal().array() += 1e-12;
        kkt.block(0, r, r, 1).setOnes();
        kkt.block(r, 0, 1, r).setOnes();
        VectorXd rhs(r + 1);
        rhs.head(r) = p.transpose() * y;
        rhs(r) = 1.0;
        const VectorXd sol = kkt.fullPivLu().solve(rhs);
        bool feasible = true;
        for (int j = 0; j < r; ++j)
            if (sol(j) < -1e-10) feasible = false;
        if (!feasible) continue;
        VectorXd a = sol.head(r).cwiseMax(0.0);
        a /= a.sum();
        const double risk = (y - p * a).squaredNorm();
        if (risk < best_risk - 1e-15) {
            best_risk = risk;
            best.assign(static_cast<std::size_t>(c), 0.0);
            for (int j = 0; j < r; ++j) best[static_cast<std::size_t>(sel[static_cast<std::size_t>(j)])] = a(j);
        }
    }
    if (out_risk) *out_risk = best_risk / static_cast<double>(y.size());
    return best;
}

}  // namespace detail

/// Cross-validated stacking of {ols, gbm, knn}: out-of-fold predictions are
/// blended with simplex-constrained least squares, then each candidate is
/// refit on the full data and combined with the learned weights.
inline TreatmentModel fit_superlearner(const MatrixXd& v, const VectorXd& t, int folds = 5,
                                       const GbmParams& gbm_params = {}) {
    const Eigen::Index n = t.size();
    if (folds < 2) throw InvalidInputError("superlearner: folds must be >= 2");
    if (n < 2 * folds) throw InvalidInputError("superlearner: need n >= 2*folds");
    const int n_cand = 3;
    MatrixXd oof(n, n_cand);
    for (int f = 0; f < folds; ++f) {
        std::vector<int> tr, te;
        for (Eigen::Index i = 0; i < n; ++i)
            (static_cast<int>(i % folds) == f ? te : tr).push_back(static_cast<int>(i));
        MatrixXd vtr(static_cast<Eigen::Index>(tr.size()), v.cols());
        VectorXd ttr(static_cast<Eigen::Index>(tr.size()));
        for (std::size_t i = 0; i < tr.size(); ++i) {
            vtr.row(static_cast<Eigen::Index>(i)) = v.row(tr[i]);
            ttr(static_cast<Eigen::Index>(i)) = t(tr[i]);
        }
        MatrixXd vte(static_cast<Eigen::Index>(te.size()), v.cols());
        for (std::size_t i = 0; i < te.size(); ++i)
            vte.row(static_cast<Eigen::Index>(i)) = v.row(te[i]);

        const int k = std::max(1, static_cast<int>(std::lround(std::sqrt(
                                      static_cast<double>(tr.size())))));
        const TreatmentModel cand[3] = {fit_ols(vtr, ttr), fit_gbm(vtr, ttr, gbm_params),
                                        fit_knn(vtr, ttr, k)};
        for (int c = 0; c < n_cand; ++c) {
            const VectorXd pred = cand[c].predict(vte);
            for (std::size_t i = 0; i < te.size(); ++i) oof(te[i], c) = pred(static_cast<Eigen::Index>(i));
        }
    }
    auto impl = std::make_shared<detail::SuperImpl>();
    impl->weights = detail::simplex_least_squares(oof, t, &impl->cv_risk);
    for (int c = 0; c < n_cand; ++c)
        impl->candidate_risks.push_back((t - oof.col(c)).squaredNorm() / static_cast<double>(n));
    const int k = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(n)))));
    impl->candidates = {fit_ols(v, t), fit_gbm(v, t, gbm_params), fit_knn(v, t, k)};
    const VectorXd resid = t - impl->predict(v);
    const double dof = std::max<double>(static_cast<double>(n - v.cols() - 1), 1.0);
    impl->rsd = detail::floored_residual_sd(std::sqrt(resid.squaredNorm() / dof), t);
    return TreatmentModel(impl);
}

inline const detail::SuperImpl& superlearner_detail(const TreatmentModel& model) {
    const auto* impl = dynamic_cast<const detail::SuperImpl*>(&model.impl());
    if (!impl) throw WrongModelKindError("not a superlearner model");
    return *impl;
}

inline const VectorXd& linear_coefficients(const TreatmentModel& model) {
    if (const auto* ols = dynamic_cast<const detail::OlsImpl*>(&model.impl())) return ols->coef;
    if (const auto* lg = dynamic_cast<const detail::LogisticImpl*>(&model.impl())) return lg->coef;
    throw WrongModelKindError("model has no linear coefficients");
}

/// Generalized propensity density r(t, x): Gaussian around the model's
/// prediction with the model's residual sd. Continuous kinds only.
inline double conditional_density(const TreatmentModel& model, const Eigen::RowVectorXd& v_row,
                                  double t) {
    if (model.kind() == TreatmentModelKind::logistic)
        throw WrongModelKindError("conditional_density needs a continuous-treatment model");
    return gaussian_pdf(t, model.predict_one(v_row), model.residual_sd());
}

inline VectorXd conditional_density_batch(const TreatmentModel& model, const MatrixXd& v,
                                          const VectorXd& t) {
    if (model.kind() == TreatmentModelKind::logistic)
        throw WrongModelKindError("conditional_density needs a continuous-treatment model");
    const VectorXd pred = model.predict(v);
    const double sd = model.residual_sd();
    VectorXd out(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) out(i) = gaussian_pdf(t(i), pred(i), sd);
    return out;
}

}  // namespace causalprobe
