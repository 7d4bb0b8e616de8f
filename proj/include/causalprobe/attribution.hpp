#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "causalprobe/blackbox.hpp"
#include "causalprobe/core.hpp"
#include "causalprobe/effect.hpp"
#include "causalprobe/weighting.hpp"

namespace causalprobe {

enum class InferenceMethod { sandwich, bootstrap };

struct AttributionOptions {
    WeightingConfig weighting;
    InferenceMethod inference = InferenceMethod::sandwich;
    int bootstrap_reps = 200;
    int workers = 1;  // per-feature/estimator tasks run concurrently when > 1
};

/// Runs the full per-feature attribution loop for every requested estimator:
/// each feature in turn becomes the treatment, all remaining features the
/// covariates, the estimator produces balancing weights, and the weighted
/// effect is tested at level alpha. a_j = mu_j when the null is rejected,
/// 0 otherwise. A failure on one (estimator, feature) pair is recorded in the
/// report and leaves every other cell untouched.
///
/// Results are merged in (estimator, feature) order whatever the worker
/// count, so reports are deterministic for a fixed seed.
inline std::vector<AttributionReport> attribute_all(const Dataset& d,
                                                    const std::vector<WeightEstimator>& estimators,
                                                    double alpha, std::uint64_t seed,
                                                    const AttributionOptions& options = {}) {
    if (estimators.empty()) throw InvalidInputError("attribute_all: no estimators selected");
    if (alpha <= 0.0 || alpha >= 1.0) throw InvalidInputError("alpha must be in (0,1)");
    const Eigen::Index m = d.n_features();

    struct Cell {
        bool ok = false;
        EffectEstimate estimate;
        std::string error;
    };
    const std::size_t n_tasks = estimators.size() * static_cast<std::size_t>(m);
    std::vector<Cell> cells(n_tasks);

    auto run_task = [&](std::size_t task) {
        const std::size_t e = task / static_cast<std::size_t>(m);
        const auto j = static_cast<Eigen::Index>(task % static_cast<std::size_t>(m));
        const WeightEstimator estimator = estimators[e];
        const FeatureSpec& spec = d.spec(j);
        Cell& cell = cells[task];
        try {
            const TreatmentSplit split = select_treatment(d, spec.name);
            const WeightVector w = compute_weights(estimator, split.treatment, split.covariates,
                                                   spec.kind, options.weighting);
            EffectEstimate est =
                spec.kind == FeatureKind::binary
                    ? ace_binary(split.treatment, d.outcome(), w, estimator, spec.name)
                    : ace_continuous(split.treatment, d.outcome(), w, estimator, spec.name);
            if (options.inference == InferenceMethod::bootstrap) {
                const double se = bootstrap_se(
                    split.treatment, d.outcome(), split.covariates, estimator,
                    options.bootstrap_reps, Rng::derive(seed, task), spec.kind, options.weighting);
                est.se = se;
                est.p_value = se > 0.0 ? normal_two_sided_p(est.mu / se)
                                       : (est.mu == 0.0 ? 1.0 : 0.0);
                est.ci_low = est.mu - kCi95Z * se;
                est.ci_high = est.mu + kCi95Z * se;
            }
            cell.estimate = std::move(est);
            cell.ok = true;
        } catch (const std::exception& ex) {
            cell.error = ex.what();
        }
    };

    const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(n_tasks)));
    if (workers == 1) {
        for (std::size_t task = 0; task < n_tasks; ++task) run_task(task);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int k = 0; k < workers; ++k)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t task = next.fetch_add(1);
                    if (task >= n_tasks) return;
                    run_task(task);
                }
            });
        for (auto& th : pool) th.join();
    }

    std::vector<AttributionReport> reports;
    reports.reserve(estimators.size());
    for (std::size_t e = 0; e < estimators.size(); ++e) {
        AttributionReport rep;
        rep.alpha = alpha;
        rep.estimator = estimators[e];
        for (Eigen::Index j = 0; j < m; ++j) {
            const Cell& cell = cells[e * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)];
            const std::string& name = d.spec(j).name;
            if (!cell.ok) {
                rep.failures[name] = cell.error;
                continue;
            }
            rep.estimates.push_back(cell.estimate);
            const bool reject = hypothesis_test(cell.estimate, alpha);
            rep.attributions[name] = reject ? cell.estimate.mu : 0.0;
        }
        reports.push_back(std::move(rep));
    }
    return reports;
}

// ---------------------------------------------------------------------------
// contrastive explanation
// ---------------------------------------------------------------------------

struct ContrastiveEntry {
    std::string feature;
    double attribution = 0.0;   // a_j
    double delta = 0.0;         // x_a[j] - x_b[j]
    double contribution = 0.0;  // a_j * delta
};

/// Why does the model output differ between two inputs: the causally
/// attributed features, ranked by how much their value shift moves the output.
struct ContrastiveExplanation {
    VectorXd sample_a, sample_b;
    std::vector<ContrastiveEntry> entries;  // |contribution| descending
};

inline ContrastiveExplanation contrastive_explain(const AttributionReport& report,
                                                  const std::vector<std::string>& feature_order,
                                                  const VectorXd& x_a, const VectorXd& x_b) {
    if (x_a.size() != static_cast<Eigen::Index>(feature_order.size()) || x_a.size() != x_b.size())
        throw InvalidInputError("contrastive_explain: sample arity does not match feature count");
    ContrastiveExplanation out;
    out.sample_a = x_a;
    out.sample_b = x_b;
    for (std::size_t j = 0; j < feature_order.size(); ++j) {
        const auto it = report.attributions.find(feature_order[j]);
        if (it == report.attributions.end() || it->second == 0.0) continue;
        ContrastiveEntry e;
        e.feature = feature_order[j];
        e.attribution = it->second;
        e.delta = x_a(static_cast<Eigen::Index>(j)) - x_b(static_cast<Eigen::Index>(j));
        e.contribution = e.attribution * e.delta;
        out.entries.push_back(std::move(e));
    }
    std::stable_sort(out.entries.begin(), out.entries.end(),
                     [](const ContrastiveEntry& a, const ContrastiveEntry& b) {
                         return std::abs(a.contribution) > std::abs(b.contribution);
                     });
    return out;
}

inline ContrastiveExplanation contrastive_explain(const AttributionReport& report,
                                                  const Dataset& d, const VectorXd& x_a,
                                                  const VectorXd& x_b) {
    std::vector<std::string> names;
    for (const auto& s : d.specs()) names.push_back(s.name);
    return contrastive_explain(report, names, x_a, x_b);
}

// ---------------------------------------------------------------------------
// partial dependence baseline
// ---------------------------------------------------------------------------

struct PdpCurve {
    std::string feature;
    VectorXd grid;    // probed treatment values
    VectorXd values;  // mean model output with the feature pinned to grid(i)
};

/// Correlational baseline: the empirical partial dependence of the model on
/// one feature, g_S(t) = mean_i model(x_i with feature j set to t), over an
/// even grid spanning the feature's observed range.
inline PdpCurve pdp_baseline(const ModelHandle& model, const Dataset& d,
                             const std::string& feature, int grid_points) {
    if (grid_points < 2) throw InvalidInputError("pdp_baseline: grid must be >= 2");
    const Eigen::Index j = d.feature_index(feature);
    const double lo = d.features().col(j).minCoeff();
    const double hi = d.features().col(j).maxCoeff();
    PdpCurve curve;
    curve.feature = feature;
    curve.grid.resize(grid_points);
    curve.values.resize(grid_points);
    MatrixXd probe = d.features();
    for (int g = 0; g < grid_points; ++g) {
        const double t = lo + (hi - lo) * static_cast<double>(g) / (grid_points - 1);
        probe.col(j).setConstant(t);
        curve.grid(g) = t;
        curve.values(g) = predict_batch(model, probe).mean();
    }
    return curve;
}

// ---------------------------------------------------------------------------
// cross-estimator agreement
// ---------------------------------------------------------------------------

enum class CellStatus { zero, positive, negative, failed };

/// Sign-and-significance grid across estimators, with a per-feature consensus
/// flag: attributions are trustworthy where the estimators agree.
struct AgreementMatrix {
    std::vector<std::string> features;
    std::vector<WeightEstimator> estimators;
    std::vector<std::vector<CellStatus>> cells;  // [feature][estimator]
    std::vector<bool> consensus;                 // per feature
    int n_consensus = 0;
};

inline AgreementMatrix agreement(const std::vector<AttributionReport>& reports) {
    if (reports.empty()) throw InvalidInputError("agreement: no reports");
    AgreementMatrix m;
    // feature order follows the first report: its estimates keep dataset
    // order, failed features are appended
    for (const auto& est : reports.front().estimates) m.features.push_back(est.feature);
    for (const auto& [name, msg] : reports.front().failures)
        if (std::find(m.features.begin(), m.features.end(), name) == m.features.end())
            m.features.push_back(name);
    for (const auto& rep : reports) {
        std::vector<std::string> names;
        for (const auto& est : rep.estimates) names.push_back(est.feature);
        for (const auto& [name, msg] : rep.failures)
            if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
        if (names.size() != m.features.size())
            throw InvalidInputError("agreement: reports cover different feature sets");
        for (const auto& f : m.features)
            if (std::find(names.begin(), names.end(), f) == names.end())
                throw InvalidInputError("agreement: reports cover different feature sets");
        m.estimators.push_back(rep.estimator);
    }

    m.cells.assign(m.features.size(), std::vector<CellStatus>(reports.size(), CellStatus::zero));
    m.consensus.assign(m.features.size(), true);
    for (std::size_t fi = 0; fi < m.features.size(); ++fi) {
        const std::string& f = m.features[fi];
        for (std::size_t r = 0; r < reports.size(); ++r) {
            const auto& rep = reports[r];
            if (rep.failures.count(f)) {
                m.cells[fi][r] = CellStatus::failed;
                continue;
            }
            const double a = rep.attributions.at(f);
            m.cells[fi][r] = a == 0.0 ? CellStatus::zero
                                      : (a > 0.0 ? CellStatus::positive : CellStatus::negative);
        }
        const CellStatus first = m.cells[fi][0];
        bool agree = first != CellStatus::failed;
        for (std::size_t r = 1; r < reports.size() && agree; ++r)
            agree = m.cells[fi][r] == first;
        m.consensus[fi] = agree;
        if (agree) ++m.n_consensus;
    }
    return m;
}

}  // namespace causalprobe
