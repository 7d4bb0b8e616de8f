#pragma once

// Test-only fixtures: a tiny MLP trainer for the synthetic classifier, and a
// confounded binary-treatment generator with known ground truth. These exist
// to exercise the attribution pipeline; the library itself never trains.

#include <cmath>
#include <cstdint>

#include "causalprobe/blackbox.hpp"
#include "causalprobe/core.hpp"
#include "causalprobe/rng.hpp"

namespace cptest {

using causalprobe::MatrixXd;
using causalprobe::VectorXd;

/// Trains a 12 -> hidden(tanh) -> 1(sigmoid) classifier by full-batch
/// gradient descent on cross-entropy. The synthetic classes are cleanly
/// separable, so a few hundred epochs reach (near-)perfect training accuracy.
inline causalprobe::MlpSpec train_toy_classifier(const MatrixXd& x, const VectorXd& labels,
                                                 std::uint64_t seed, int hidden = 8,
                                                 int epochs = 300, double lr = 0.5) {
    const Eigen::Index n = x.rows(), m = x.cols();
    causalprobe::Rng rng(seed);
    MatrixXd w1(hidden, m);
    VectorXd b1 = VectorXd::Zero(hidden);
    VectorXd w2(hidden);
    double b2 = 0.0;
    for (Eigen::Index i = 0; i < w1.rows(); ++i)
        for (Eigen::Index j = 0; j < w1.cols(); ++j) w1(i, j) = rng.gaussian(0.0, 0.5);
    for (Eigen::Index i = 0; i < w2.size(); ++i) w2(i) = rng.gaussian(0.0, 0.5);

    for (int ep = 0; ep < epochs; ++ep) {
        MatrixXd h = ((x * w1.transpose()).rowwise() + b1.transpose()).array().tanh();
        VectorXd z = h * w2;
        z.array() += b2;
        VectorXd p = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        VectorXd g = (p - labels) / static_cast<double>(n);
        VectorXd gw2 = h.transpose() * g;
        const double gb2 = g.sum();
        MatrixXd gh = (g * w2.transpose()).array() * (1.0 - h.array().square());
        MatrixXd gw1 = gh.transpose() * x;
        VectorXd gb1 = gh.colwise().sum();
        w1 -= lr * gw1;
        b1 -= lr * gb1;
        w2 -= lr * gw2;
        b2 -= lr * gb2;
    }

    causalprobe::MlpSpec spec;
    causalprobe::MlpLayer l1;
    l1.weights = w1;
    l1.bias = b1;
    l1.activation = causalprobe::Activation::tanh_fn;
    causalprobe::MlpLayer l2;
    l2.weights = w2.transpose();
    l2.bias = VectorXd::Constant(1, b2);
    l2.activation = causalprobe::Activation::sigmoid;
    spec.layers = {l1, l2};
    spec.output = causalprobe::OutputKind::class_probability;
    return spec;
}

inline double training_accuracy(const causalprobe::MlpSpec& spec, const MatrixXd& x,
                                const VectorXd& labels) {
    const VectorXd p = causalprobe::mlp_forward(spec, x);
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if ((p(i) >= 0.5 ? 1.0 : 0.0) == labels(i)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(p.size());
}

/// Confounded binary-treatment SCM: C ~ N(0,1), P(T=1|C) = sigmoid(0.8 C),
/// Y = effect*T + C + N(0,1). The confounder C pushes the unadjusted
/// difference of means away from the true effect.
struct BinaryScm {
    VectorXd t, y;
    MatrixXd c;  // single confounder column
};

inline BinaryScm gen_binary_scm(Eigen::Index n, std::uint64_t seed, double effect = -1.5) {
    causalprobe::Rng rng(seed);
    BinaryScm out;
    out.t.resize(n);
    out.y.resize(n);
    out.c.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double c = rng.gaussian();
        const double p = 1.0 / (1.0 + std::exp(-0.8 * c));
        const double t = rng.bernoulli(p) ? 1.0 : 0.0;
        out.c(i, 0) = c;
        out.t(i) = t;
        out.y(i) = effect * t + c + rng.gaussian();
    }
    return out;
}

}  // namespace cptest
