#include <gtest/gtest.h>

#include <cmath>

#include "causalprobe/attribution.hpp"
#include "causalprobe/rng.hpp"

using namespace causalprobe;

namespace {

// dataset whose outcome is produced by a known model over independent inputs
Dataset linear_model_dataset(int n, std::uint64_t seed) {
    Rng rng(seed);
    MatrixXd x(n, 3);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = rng.gaussian();
        y(i) = 2.0 * x(i, 0) + 0.05 * rng.gaussian();  // g(x) = 2 x1 (+ tiny noise)
    }
    return Dataset(x, {{"x1"}, {"x2"}, {"x3"}}, y);
}

MlpSpec affine_model(std::vector<double> coef, double bias) {
    MlpLayer l;
    l.weights.resize(1, static_cast<Eigen::Index>(coef.size()));
    for (std::size_t j = 0; j < coef.size(); ++j) l.weights(0, static_cast<Eigen::Index>(j)) = coef[j];
    l.bias = VectorXd::Constant(1, bias);
    l.activation = Activation::identity;
    MlpSpec spec;
    spec.layers = {l};
    return spec;
}

}  // namespace

// ---------------------------------------------------------------------------
// attribute_all
// ---------------------------------------------------------------------------

TEST(AttributeAll, RecoversLinearModelCoefficient) {
    const Dataset d = linear_model_dataset(1500, 60);
    const auto reports = attribute_all(d, {WeightEstimator::iptw}, 0.05, 1);
    ASSERT_EQ(reports.size(), 1u);
    const AttributionReport& rep = reports[0];
    ASSERT_TRUE(rep.failures.empty());
    const EffectEstimate& e1 = rep.estimates[0];
    EXPECT_LT(std::abs(e1.mu - 2.0), 3.0 * std::max(e1.se, 1e-3));
    EXPECT_NE(rep.attributions.at("x1"), 0.0);
    EXPECT_DOUBLE_EQ(rep.attributions.at("x2"), 0.0);
    EXPECT_DOUBLE_EQ(rep.attributions.at("x3"), 0.0);
}

TEST(AttributeAll, ConstantOutcomeAttributesNothing) {
    Rng rng(61);
    MatrixXd x(300, 2);
    for (int i = 0; i < 300; ++i)
        for (int j = 0; j < 2; ++j) x(i, j) = rng.gaussian();
    const Dataset d(x, {{"a"}, {"b"}}, VectorXd::Constant(300, 0.7));
    const auto reports =
        attribute_all(d, {WeightEstimator::iptw, WeightEstimator::optweight}, 0.05, 2);
    for (const auto& rep : reports) {
        ASSERT_TRUE(rep.failures.empty());
        for (const auto& [name, a] : rep.attributions) EXPECT_DOUBLE_EQ(a, 0.0);
    }
}

TEST(AttributeAll, Def2Consistency) {
    const Dataset d = linear_model_dataset(800, 62);
    const auto reports =
        attribute_all(d, {WeightEstimator::iptw, WeightEstimator::npcbps}, 0.05, 3);
    for (const auto& rep : reports) {
        for (const auto& est : rep.estimates) {
            const double a = rep.attributions.at(est.feature);
            if (est.p_value < rep.alpha) {
                EXPECT_DOUBLE_EQ(a, est.mu);  // a_j = mu_j exactly when rejected
            } else {
                EXPECT_DOUBLE_EQ(a, 0.0);
            }
        }
    }
}

TEST(AttributeAll, BinaryFeatureUsesIptwOthersRecordFailure) {
    Rng rng(63);
    const int n = 500;
    MatrixXd x(n, 2);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = rng.bernoulli(0.5) ? 1.0 : 0.0;
        x(i, 1) = rng.gaussian();
        y(i) = -1.0 * x(i, 0) + 0.5 * x(i, 1) + 0.1 * rng.gaussian();
    }
    const Dataset d(x, {{"g", FeatureKind::binary}, {"z"}}, y);
    const auto reports = attribute_all(d, {WeightEstimator::iptw, WeightEstimator::cbps}, 0.05, 4);

    const AttributionReport& iptw = reports[0];
    ASSERT_TRUE(iptw.failures.empty());
    EXPECT_LT(iptw.attributions.at("g"), -0.5);  // negative effect found
    ASSERT_TRUE(iptw.estimates[0].exp_mu.has_value());

    const AttributionReport& cbps = reports[1];
    ASSERT_EQ(cbps.failures.count("g"), 1u);     // continuous-only estimator
    ASSERT_EQ(cbps.failures.count("z"), 0u);     // other feature unaffected
    EXPECT_EQ(cbps.attributions.count("z"), 1u);
}

TEST(AttributeAll, FeatureFailureIsolation) {
    // the failing binary feature must leave other features' estimates
    // bit-identical to a run that never sees the failure path
    Rng rng(64);
    const int n = 400;
    MatrixXd x(n, 2);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = rng.bernoulli(0.5) ? 1.0 : 0.0;
        x(i, 1) = rng.gaussian();
        y(i) = x(i, 1) + 0.1 * rng.gaussian();
    }
    const Dataset d(x, {{"bad", FeatureKind::binary}, {"ok"}}, y);
    const auto with_failure = attribute_all(d, {WeightEstimator::cbps}, 0.05, 5);
    ASSERT_EQ(with_failure[0].failures.count("bad"), 1u);

    // compute the same cell directly
    const TreatmentSplit split = select_treatment(d, "ok");
    const WeightVector w =
        compute_weights(WeightEstimator::cbps, split.treatment, split.covariates,
                        FeatureKind::continuous, AttributionOptions{}.weighting);
    const EffectEstimate direct =
        ace_continuous(split.treatment, d.outcome(), w, WeightEstimator::cbps, "ok");
    const EffectEstimate& cell = with_failure[0].estimates[0];
    EXPECT_EQ(cell.feature, "ok");
    EXPECT_EQ(cell.mu, direct.mu);  // bitwise
    EXPECT_EQ(cell.se, direct.se);
}

TEST(AttributeAll, WorkerCountDoesNotChangeResults) {
    const Dataset d = linear_model_dataset(600, 65);
    AttributionOptions serial;
    serial.workers = 1;
    AttributionOptions parallel;
    parallel.workers = 4;
    const auto a = attribute_all(d, {WeightEstimator::iptw, WeightEstimator::npcbps,
                                     WeightEstimator::optweight}, 0.05, 6, serial);
    const auto b = attribute_all(d, {WeightEstimator::iptw, WeightEstimator::npcbps,
                                     WeightEstimator::optweight}, 0.05, 6, parallel);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t r = 0; r < a.size(); ++r) {
        ASSERT_EQ(a[r].estimates.size(), b[r].estimates.size());
        for (std::size_t i = 0; i < a[r].estimates.size(); ++i) {
            EXPECT_EQ(a[r].estimates[i].mu, b[r].estimates[i].mu);
            EXPECT_EQ(a[r].estimates[i].se, b[r].estimates[i].se);
        }
    }
}

TEST(AttributeAll, ValidatesArguments) {
    const Dataset d = linear_model_dataset(100, 66);
    EXPECT_THROW(attribute_all(d, {}, 0.05, 1), InvalidInputError);
    EXPECT_THROW(attribute_all(d, {WeightEstimator::iptw}, 1.5, 1), InvalidInputError);
}

// ---------------------------------------------------------------------------
// contrastive explanation
// ---------------------------------------------------------------------------

namespace {

AttributionReport toy_report() {
    AttributionReport rep;
    rep.alpha = 0.05;
    rep.estimator = WeightEstimator::iptw;
    rep.attributions = {{"f1", 1.5}, {"f2", -2.0}, {"f3", 0.0}};
    for (const char* name : {"f1", "f2", "f3"}) {
        EffectEstimate e;
        e.feature = name;
        rep.estimates.push_back(e);
    }
    return rep;
}

}  // namespace

TEST(Contrastive, OnlyNonzeroAttributionsAppearRankedByContribution) {
    const AttributionReport rep = toy_report();
    VectorXd xa(3), xb(3);
    xa << 1.0, 0.5, 9.0;
    xb << 0.0, 1.5, -9.0;
    const auto ex = contrastive_explain(rep, {"f1", "f2", "f3"}, xa, xb);
    ASSERT_EQ(ex.entries.size(), 2u);  // f3 has zero attribution
    EXPECT_EQ(ex.entries[0].feature, "f2");  // |(-2)(-1)| = 2 > |1.5*1| = 1.5
    EXPECT_DOUBLE_EQ(ex.entries[0].contribution, 2.0);
    EXPECT_EQ(ex.entries[1].feature, "f1");
    EXPECT_DOUBLE_EQ(ex.entries[1].contribution, 1.5);
}

TEST(Contrastive, IdenticalSamplesHaveZeroContributions) {
    const AttributionReport rep = toy_report();
    VectorXd x(3);
    x << 1, 2, 3;
    const auto ex = contrastive_explain(rep, {"f1", "f2", "f3"}, x, x);
    for (const auto& e : ex.entries) EXPECT_DOUBLE_EQ(e.contribution, 0.0);
}

TEST(Contrastive, SwappingSamplesNegatesContributionsKeepsRanking) {
    const AttributionReport rep = toy_report();
    VectorXd xa(3), xb(3);
    xa << 2.0, -1.0, 0.3;
    xb << -0.5, 0.7, 0.1;
    const auto fwd = contrastive_explain(rep, {"f1", "f2", "f3"}, xa, xb);
    const auto rev = contrastive_explain(rep, {"f1", "f2", "f3"}, xb, xa);
    ASSERT_EQ(fwd.entries.size(), rev.entries.size());
    for (std::size_t i = 0; i < fwd.entries.size(); ++i) {
        EXPECT_EQ(fwd.entries[i].feature, rev.entries[i].feature);
        EXPECT_DOUBLE_EQ(fwd.entries[i].contribution, -rev.entries[i].contribution);
    }
}

TEST(Contrastive, SingleNonzeroAttribution) {
    AttributionReport rep;
    rep.attributions = {{"a", 0.0}, {"b", 3.0}};
    VectorXd xa(2), xb(2);
    xa << 5, 1;
    xb << 5, 0;
    const auto ex = contrastive_explain(rep, {"a", "b"}, xa, xb);
    ASSERT_EQ(ex.entries.size(), 1u);
    EXPECT_EQ(ex.entries[0].feature, "b");
}

TEST(Contrastive, ArityMismatchThrows) {
    const AttributionReport rep = toy_report();
    VectorXd x2(2);
    x2 << 1, 2;
    VectorXd x3(3);
    x3 << 1, 2, 3;
    EXPECT_THROW(contrastive_explain(rep, {"f1", "f2", "f3"}, x2, x3), InvalidInputError);
}

// ---------------------------------------------------------------------------
// PDP
// ---------------------------------------------------------------------------

TEST(Pdp, ConstantModelIsFlat) {
    Rng rng(67);
    MatrixXd x(50, 2);
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 2; ++j) x(i, j) = rng.gaussian();
    const Dataset d(x, {{"a"}, {"b"}}, VectorXd::Constant(50, 1.0));
    const ModelHandle m = ModelHandle::mlp(affine_model({0.0, 0.0}, 2.5));
    const PdpCurve curve = pdp_baseline(m, d, "a", 11);
    for (int g = 0; g < 11; ++g) EXPECT_DOUBLE_EQ(curve.values(g), 2.5);
}

TEST(Pdp, AffineModelSlopeIsExact) {
    Rng rng(68);
    MatrixXd x(100, 2);
    for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 2; ++j) x(i, j) = rng.gaussian();
    VectorXd y(100);
    for (int i = 0; i < 100; ++i) y(i) = 3.0 * x(i, 0) + 2.0 * x(i, 1);
    const Dataset d(x, {{"a"}, {"b"}}, y);
    const ModelHandle m = ModelHandle::mlp(affine_model({3.0, 2.0}, 0.0));
    const PdpCurve curve = pdp_baseline(m, d, "a", 21);
    // least-squares slope of the curve
    const double mg = curve.grid.mean(), mv = curve.values.mean();
    const double slope = ((curve.grid.array() - mg) * (curve.values.array() - mv)).sum() /
                         (curve.grid.array() - mg).square().sum();
    EXPECT_NEAR(slope, 3.0, 1e-9);
}

TEST(Pdp, IdentitySingleFeature) {
    MatrixXd x(10, 1);
    for (int i = 0; i < 10; ++i) x(i, 0) = i;
    VectorXd y = x.col(0);
    const Dataset d(x, {{"t"}}, y);
    const ModelHandle m = ModelHandle::mlp(affine_model({1.0}, 0.0));
    const PdpCurve curve = pdp_baseline(m, d, "t", 10);
    for (int g = 0; g < 10; ++g) EXPECT_NEAR(curve.values(g), curve.grid(g), 1e-12);
}

TEST(Pdp, GridValidation) {
    MatrixXd x(10, 1);
    for (int i = 0; i < 10; ++i) x(i, 0) = i;
    const Dataset d(x, {{"t"}}, x.col(0));
    const ModelHandle m = ModelHandle::mlp(affine_model({1.0}, 0.0));
    EXPECT_THROW(pdp_baseline(m, d, "t", 1), InvalidInputError);
    EXPECT_THROW(pdp_baseline(m, d, "zz", 5), LookupError);
}

// ---------------------------------------------------------------------------
// agreement
// ---------------------------------------------------------------------------

namespace {

AttributionReport report_with(WeightEstimator e, std::map<std::string, double> attr) {
    AttributionReport rep;
    rep.estimator = e;
    rep.alpha = 0.05;
    rep.attributions = std::move(attr);
    for (const auto& [name, a] : rep.attributions) {
        EffectEstimate est;
        est.feature = name;
        est.mu = a;
        est.estimator = e;
        rep.estimates.push_back(est);
    }
    return rep;
}

}  // namespace

TEST(Agreement, SingleReportIsTriviallyConsensus) {
    const auto m = agreement({report_with(WeightEstimator::iptw, {{"a", 1.0}, {"b", 0.0}})});
    EXPECT_EQ(m.n_consensus, 2);
    EXPECT_TRUE(m.consensus[0]);
    EXPECT_TRUE(m.consensus[1]);
}

TEST(Agreement, OppositeSignsBreakConsensus) {
    const auto m = agreement({report_with(WeightEstimator::iptw, {{"a", 1.0}, {"b", 2.0}}),
                              report_with(WeightEstimator::cbps, {{"a", -1.0}, {"b", 3.0}})});
    ASSERT_EQ(m.features.size(), 2u);
    // features follow the first report's order (alphabetical map here)
    EXPECT_FALSE(m.consensus[0]);  // a: + vs -
    EXPECT_TRUE(m.consensus[1]);   // b: + vs +
    EXPECT_EQ(m.n_consensus, 1);
}

TEST(Agreement, ZeroVsNonzeroBreaksConsensus) {
    const auto m = agreement({report_with(WeightEstimator::iptw, {{"a", 0.0}}),
                              report_with(WeightEstimator::cbps, {{"a", 0.4}})});
    EXPECT_FALSE(m.consensus[0]);
}

TEST(Agreement, MismatchedFeatureSetsThrow) {
    EXPECT_THROW(agreement({report_with(WeightEstimator::iptw, {{"a", 1.0}}),
                            report_with(WeightEstimator::cbps, {{"zz", 1.0}})}),
                 InvalidInputError);
    EXPECT_THROW(agreement({}), InvalidInputError);
}

TEST(Agreement, FailedCellBlocksConsensus) {
    AttributionReport ok = report_with(WeightEstimator::iptw, {{"a", 1.0}});
    AttributionReport failed;
    failed.estimator = WeightEstimator::cbps;
    failed.failures["a"] = "binary treatment";
    const auto m = agreement({ok, failed});
    ASSERT_EQ(m.features.size(), 1u);
    EXPECT_FALSE(m.consensus[0]);
    EXPECT_EQ(m.cells[0][1], CellStatus::failed);
}
