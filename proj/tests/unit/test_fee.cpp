#include <gtest/gtest.h>

#include <cmath>

#include "gmwb/fee.hpp"
#include "gmwb/hpde.hpp"

using namespace gmwb;

namespace {

/// Bisection oracle on [lo, hi] for a decreasing function.
double bisect(const std::function<double(double)>& f, double target, double tol, double lo = 0.0, double hi = 0.1) {
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double v = f(mid) - target;
        if (std::abs(v) <= tol) return mid;
        (v > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST(Fee, ReturnsFirstPointWhenItIsFair) {
    int calls = 0;
    const auto r = no_arbitrage_fee([&](double a) { ++calls; return 100.0 + (0.02 - a) * 1000; }, 100.0);
    EXPECT_EQ(r.alpha, 0.02);
    EXPECT_EQ(calls, 1);
}

TEST(Fee, SecantSolvesSmoothDecreasingValue) {
    auto v = [](double a) { return 110.0 * std::exp(-3.0 * a); };
    const auto r = no_arbitrage_fee(v, 100.0);
    EXPECT_LE(std::abs(v(r.alpha) - 100.0), 0.1);
    EXPECT_NEAR(r.alpha, std::log(1.1) / 3.0, 1e-3);
    FeeOptions tight;
    tight.tolerance = 1e-9;
    EXPECT_NEAR(no_arbitrage_fee(v, 100.0, tight).alpha, std::log(1.1) / 3.0, 1e-9);
}

TEST(Fee, FallsBackToBisectionOutsideBracket) {
    // Flat then steep: the first secant step leaves [0, 0.1].
    auto v = [](double a) { return a < 0.08 ? 101.0 - a : 101.0 - 0.08 - (a - 0.08) * 200.0; };
    const auto r = no_arbitrage_fee(v, 100.0);
    EXPECT_TRUE(r.bisected);
    EXPECT_LE(std::abs(v(r.alpha) - 100.0), 0.1);
}

TEST(Fee, NoRootWhenGuaranteeIsWorthless) {
    EXPECT_THROW(no_arbitrage_fee([](double a) { return 90.0 - a; }, 100.0), NoRoot);
    EXPECT_THROW(no_arbitrage_fee([](double a) { return 150.0 - a; }, 100.0), NoRoot);
}

TEST(Fee, MaxIterationsIsReported) {
    FeeOptions o;
    o.max_iterations = 2;
    o.tolerance = 1e-14;
    EXPECT_THROW(no_arbitrage_fee([](double a) { return 110.0 * std::exp(-3.0 * a); }, 100.0, o), MaxIterations);
}

TEST(Fee, SecantMatchesBisectionOnPricer) {
    const auto p = table1_params();
    hpde::GridConfig g;
    g.time_steps = 20;
    g.space_steps = 41;
    g.benefit_steps = 20;
    auto c = make_contract(100, 10, 0.0, 0.1);
    auto value = [&](double a) {
        c.alpha = a;
        return hpde::price_gmwb(p, c, g).price;
    };
    const auto r = no_arbitrage_fee(value, 100.0);
    const double oracle = bisect(value, 100.0, 0.1);
    EXPECT_LE(std::abs(value(r.alpha) - 100.0), 0.1);
    // both are roots to within the value tolerance; compare through the slope
    const double slope = (value(r.alpha + 1e-3) - value(r.alpha - 1e-3)) / 2e-3;
    EXPECT_LE(std::abs(r.alpha - oracle), 2 * 0.1 / std::abs(slope));
}
