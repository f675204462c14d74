#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "gmwb/gpr.hpp"
#include "gmwb/io.hpp"

using namespace gmwb;
using namespace gmwb::gpr;

namespace {

MatrixXd random_inputs(int n, int d, unsigned seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) x(i, k) = u(rng);
    return x;
}

VectorXd smooth_target(const MatrixXd& x) {
    VectorXd y(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        y(i) = 1.0 + 0.3 * x(i, 0) + std::sin(3.0 * x(i, 0)) * std::cos(2.0 * x(i, 1)) + 0.2 * x(i, 2) * x(i, 2);
    return y;
}

Hyperparameters hyper(double sf, VectorXd l, double sn) { return Hyperparameters{sf, std::move(l), sn}; }

}  // namespace

TEST(GprKernel, Examples) {
    const auto h = hyper(1.0, VectorXd::Ones(1), 0.0);
    VectorXd a(1), b(1);
    a << 0.0;
    b << std::sqrt(2.0);
    EXPECT_NEAR(kernel(a, b, h), std::exp(-1.0), 1e-15);
    EXPECT_EQ(kernel(a, a, hyper(2.0, VectorXd::Ones(1), 0.0)), 4.0);
}

TEST(GprKernel, GramIsPositiveDefinite) {
    const MatrixXd x = random_inputs(50, 3, 1);
    const auto h = hyper(1.3, VectorXd::Constant(3, 0.4), 0.01);
    MatrixXd k = gram(x, h);
    EXPECT_TRUE(k.isApprox(k.transpose(), 0.0));
    k.diagonal().array() += h.noise * h.noise;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(k);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(GprTrain, HandBuiltTwoPointSystem) {
    MatrixXd x(2, 1);
    x << 0.0, 1.0;
    VectorXd y(2);
    y << 0.0, 1.0;
    TrainOptions o;
    o.optimize = false;
    o.initial = hyper(1.0, VectorXd::Ones(1), 0.5);
    // y is linear, so fit the mean on a third point to leave residuals
    MatrixXd x3(3, 1);
    x3 << 0.0, 0.5, 1.0;
    VectorXd y3(3);
    y3 << 0.0, 1.0, 1.0;
    const auto m = GprModel::train(x3, y3, VectorXd::Zero(1), VectorXd::Ones(1), o);
    // OLS on (0,0), (0.5,1), (1,1): slope 1, intercept 1/6; residuals (-1/6, 1/3, -1/6)
    EXPECT_NEAR(m.beta()(0), 1.0 / 6.0, 1e-12);
    EXPECT_NEAR(m.beta()(1), 1.0, 1e-12);
    Eigen::Matrix3d k;
    const double e1 = std::exp(-0.125), e2 = std::exp(-0.5);
    k << 1.25, e1, e2, e1, 1.25, e1, e2, e1, 1.25;
    const Eigen::Vector3d r(-1.0 / 6, 1.0 / 3, -1.0 / 6);
    const Eigen::Vector3d expected = k.inverse() * r;
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(m.dual_weights()(i), expected(i), 1e-12);
    (void)x;
    (void)y;
}

TEST(GprTrain, InterpolatesTrainingOutputsWithoutNoise) {
    const MatrixXd x = random_inputs(40, 3, 2);
    const VectorXd y = smooth_target(x);
    TrainOptions o;
    o.fix_zero_noise = true;
    o.allow_jitter = false;
    o.optimize = false;
    o.initial = hyper(1.0, VectorXd::Constant(3, 0.5), 0.0);
    const auto m = GprModel::train(x, y, VectorXd::Zero(3), VectorXd::Ones(3), o);
    EXPECT_EQ(m.jitter(), 0.0);
    for (int i = 0; i < 40; ++i) EXPECT_NEAR(m.predict(VectorXd(x.row(i).transpose())), y(i), 1e-8 * std::abs(y(i)));
}

TEST(GprTrain, LinearDataIsReproducedExactly) {
    const MatrixXd x = random_inputs(30, 4, 3, -2.0, 5.0);
    VectorXd beta(4);
    beta << 0.5, -1.0, 2.0, 0.25;
    const VectorXd y = (x * beta).array() + 3.0;
    const auto m = GprModel::train(x, y, VectorXd::Constant(4, -2.0), VectorXd::Constant(4, 5.0));
    EXPECT_TRUE(m.degenerate());
    const MatrixXd t = random_inputs(20, 4, 4, -2.0, 5.0);
    const VectorXd truth = (t * beta).array() + 3.0;
    const VectorXd pred = m.predict_rows(t);
    for (int i = 0; i < 20; ++i) EXPECT_NEAR(pred(i), truth(i), 1e-8 * std::abs(truth(i)));
}

TEST(GprTrain, ConstantOutputsGiveConstantPredictions) {
    const MatrixXd x = random_inputs(15, 2, 5);
    const auto m = GprModel::train(x, VectorXd::Constant(15, 7.0), VectorXd::Zero(2), VectorXd::Ones(2));
    EXPECT_TRUE(m.degenerate());
    EXPECT_NEAR(m.predict(VectorXd::Constant(2, 0.3)), 7.0, 1e-10);
}

TEST(GprLikelihood, AnalyticGradientMatchesFiniteDifferences) {
    const MatrixXd x = random_inputs(30, 3, 6);
    const VectorXd y = smooth_target(x);
    const VectorXd r = y.array() - y.mean();
    VectorXd theta(5);
    theta << std::log(0.8), std::log(0.3), std::log(0.7), std::log(1.5), std::log(0.05);
    VectorXd g;
    log_marginal_likelihood(x, r, theta, &g);
    const double h = 1e-5;
    for (int i = 0; i < 5; ++i) {
        VectorXd up = theta, dn = theta;
        up(i) += h;
        dn(i) -= h;
        const double fd = (log_marginal_likelihood(x, r, up) - log_marginal_likelihood(x, r, dn)) / (2 * h);
        EXPECT_LT(std::abs(fd - g(i)) / std::max(1e-8, std::abs(fd)), 1e-5) << "component " << i;
    }
}

TEST(GprTrain, OptimumBeatsEveryStartPoint) {
    const MatrixXd x = random_inputs(60, 3, 7);
    const VectorXd y = smooth_target(x);
    TrainOptions o;
    o.restarts = 4;
    const auto m = GprModel::train(x, y, VectorXd::Zero(3), VectorXd::Ones(3), o);
    ASSERT_EQ(m.start_log_likelihoods().size(), 4u);
    for (double ll : m.start_log_likelihoods()) EXPECT_GE(m.log_likelihood(), ll - 1e-9);
    // and generalizes on this smooth function
    const MatrixXd t = random_inputs(100, 3, 8);
    const VectorXd truth = smooth_target(t);
    EXPECT_LT((m.predict_rows(t) - truth).cwiseAbs().maxCoeff(), 0.05);
}

TEST(GprTrain, NormalizationInvariance) {
    const MatrixXd x = random_inputs(25, 2, 9);
    const VectorXd y = smooth_target(random_inputs(25, 3, 9));
    TrainOptions o;
    o.optimize = false;
    o.initial = hyper(0.5, VectorXd::Constant(2, 0.4), 0.01);
    const auto a = GprModel::train(x, y, VectorXd::Zero(2), VectorXd::Ones(2), o);
    // rescale the first predictor: x0 -> 10 x0 + 3, box [3, 13]
    MatrixXd xs = x;
    xs.col(0) = (10.0 * x.col(0)).array() + 3.0;
    VectorXd lo(2), hi(2);
    lo << 3.0, 0.0;
    hi << 13.0, 1.0;
    const auto b = GprModel::train(xs, y, lo, hi, o);
    const MatrixXd t = random_inputs(10, 2, 10);
    MatrixXd ts = t;
    ts.col(0) = (10.0 * t.col(0)).array() + 3.0;
    const VectorXd pa = a.predict_rows(t), pb = b.predict_rows(ts);
    for (int i = 0; i < 10; ++i) EXPECT_NEAR(pa(i), pb(i), 1e-10);
}

TEST(GprTrain, SingularGramWithoutJitter) {
    MatrixXd x(3, 1);
    x << 0.5, 0.5, 0.2;
    VectorXd y(3);
    y << 1.0, 2.0, 0.0;
    TrainOptions o;
    o.optimize = false;
    o.fix_zero_noise = true;
    o.allow_jitter = false;
    o.initial = hyper(1.0, VectorXd::Ones(1), 0.0);
    EXPECT_THROW(GprModel::train(x, y, VectorXd::Zero(1), VectorXd::Ones(1), o), SingularGram);
    o.allow_jitter = true;
    EXPECT_NO_THROW(GprModel::train(x, y, VectorXd::Zero(1), VectorXd::Ones(1), o));
}

TEST(GprTrain, SaveLoadRoundTrip) {
    const MatrixXd x = random_inputs(30, 3, 11);
    const VectorXd y = smooth_target(x);
    TrainOptions o;
    o.restarts = 1;
    const auto m = GprModel::train(x, y, VectorXd::Zero(3), VectorXd::Ones(3), o);
    const auto back = io::gpr_from_json(nlohmann::json::parse(io::to_json(m).dump()));
    const MatrixXd t = random_inputs(10, 3, 12);
    const VectorXd a = m.predict_rows(t), b = back.predict_rows(t);
    for (int i = 0; i < 10; ++i) EXPECT_NEAR(a(i), b(i), 1e-12);
    EXPECT_TRUE(m.extrapolates(VectorXd::Constant(3, 1.5)));
    EXPECT_FALSE(m.extrapolates(VectorXd::Constant(3, 0.5)));
}

TEST(GprOptimizer, SimplexFindsQuadraticMinimum) {
    const Objective f = [](const VectorXd& x, VectorXd* g) {
        if (g) *g = 2.0 * (x.array() - 0.3);
        return (x.array() - 0.3).square().sum();
    };
    Bounds b{VectorXd::Constant(3, -1.0), VectorXd::Constant(3, 1.0)};
    const VectorXd s = minimize_simplex(f, VectorXd::Zero(3), b);
    const VectorXd q = minimize_bfgs(f, VectorXd::Zero(3), b);
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(s(i), 0.3, 1e-3);
        EXPECT_NEAR(q(i), 0.3, 1e-6);
    }
    EXPECT_LT(gradient_check(f, VectorXd::Zero(3)), 1e-6);
}

TEST(GprMetrics, Examples) {
    const auto zero = evaluate({1.0, 2.0}, {1.0, 2.0});
    EXPECT_EQ(zero.rmse, 0.0);
    EXPECT_EQ(zero.max_re, 0.0);
    const auto m = evaluate({1.1, 2.2}, {1.0, 2.0});
    EXPECT_NEAR(m.rmse, std::sqrt(0.025), 1e-12);
    EXPECT_NEAR(m.rmsre, 0.1, 1e-12);
    EXPECT_NEAR(m.max_ae, 0.2, 1e-12);
    EXPECT_NEAR(m.max_re, 0.1, 1e-12);
    const auto p = evaluate({2.2, 1.1}, {2.0, 1.0});
    EXPECT_NEAR(p.rmse, m.rmse, 1e-15);
    EXPECT_NEAR(p.rmsre, m.rmsre, 1e-15);
    EXPECT_THROW(evaluate({1.0}, {0.0}), ZeroTruth);
    EXPECT_THROW(evaluate({}, {}), InvalidParameter);
}
