#include <gtest/gtest.h>

#include <cmath>

#include "gmwb/mc.hpp"

using namespace gmwb;
using namespace gmwb::mc;

namespace {

McConfig config(std::int64_t paths, int steps = 20, std::uint64_t seed = 1) {
    McConfig c;
    c.paths = paths;
    c.steps_per_year = steps;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(Mc, ConfigValidation) {
    EXPECT_THROW(validate(config(1)), InvalidParameter);
    EXPECT_THROW(validate(config(10, 0)), InvalidParameter);
}

TEST(Mc, DegenerateModelIsFeeDraggedMartingale) {
    const HhwParams p{0.04, 1.0, 0.04, 1e-8, 0.0, 0.03, 0.2, 1e-8, 0.0};
    const auto e = simulate_paths(p, 0.02, 100.0, 5, config(40000),
                                  [](const std::vector<PathPoint>& path) { return std::exp(-path[5].integrated) * path[5].account; });
    EXPECT_NEAR(e.mean, 100.0 * std::exp(-0.1), 3 * e.std_error);
}

TEST(Mc, BondMatchesFlatCurve) {
    const auto p = table1_params();
    const auto e = bond_price(p, 10, config(20000));
    EXPECT_NEAR(e.mean, std::exp(-0.2), 3 * e.std_error);
}

TEST(Mc, SharedPathBondsMatchSingleMaturityRuns) {
    const auto p = table1_params();
    const auto c = config(3000);
    const auto all = bond_prices(p, {1, 5, 10}, c);
    ASSERT_EQ(all.size(), 3u);
    // the 10-year run draws the same numbers as the shared one
    const auto ten = bond_price(p, 10, c);
    EXPECT_EQ(all[2].mean, ten.mean);
    EXPECT_EQ(all[2].std_error, ten.std_error);
    EXPECT_LT(all[0].std_error, all[2].std_error);
    EXPECT_THROW(bond_prices(p, {0}, c), InvalidParameter);
}

TEST(Mc, VarianceMeanMatchesCir) {
    auto p = table1_params();
    p.v0 = 0.09;
    const auto e = simulate_paths(p, 0.0, 1.0, 2, config(20000, 100),
                                  [](const std::vector<PathPoint>& path) { return path[2].variance; });
    const double exact = p.theta_v + (p.v0 - p.theta_v) * std::exp(-2 * p.kv);
    EXPECT_NEAR(e.mean, exact, 3 * e.std_error + 2e-4);
}

TEST(Mc, SeedDeterminismAndWorkerIndependence) {
    const auto p = table1_params();
    const auto c = make_contract(100, 10, 0.03, 0.1);
    auto cfg = config(10000);
    const auto a = static_gmwb_price(p, c, cfg);
    cfg.workers = 3;
    const auto b = static_gmwb_price(p, c, cfg);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.std_error, b.std_error);
    cfg.seed = 2;
    EXPECT_NE(static_gmwb_price(p, c, cfg).mean, a.mean);
}

TEST(Mc, StandardErrorScalesWithPaths) {
    const auto p = table1_params();
    const auto c = make_contract(100, 10, 0.03, 0.1);
    const auto a = static_gmwb_price(p, c, config(10000));
    const auto b = static_gmwb_price(p, c, config(40000));
    EXPECT_NEAR(a.std_error / b.std_error, 2.0, 0.4);
}

TEST(Mc, DeterministicCashFlowsMatchRecursion) {
    // No volatility anywhere: A grows at r0 - alpha, cash flows are known.
    const HhwParams p{1e-10, 1.0, 1e-10, 1e-8, 0.0, 0.03, 0.2, 1e-8, 0.0};
    const MortalityTable mort({0.02, 0.03, 0.04, 0.05, 0.06});
    const auto c = make_contract(100, 5, 0.05, 0.3, std::nullopt, mort);
    const auto e = static_gmwb_price(p, c, config(8, 50));
    double a = 100.0, b = 100.0, value = 0.0;
    for (int i = 1; i <= 5; ++i) {
        a *= std::exp(0.03 - 0.05);
        const double d = std::exp(-0.03 * i);
        value += d * (mort.survivor(i - 1) - mort.survivor(i)) * std::max(a, 0.7 * b);
        const double w = std::min(20.0, b);
        value += d * mort.survivor(i) * w;
        a = std::max(a - w, 0.0);
        b -= w;
        if (i == 5) value += d * mort.survivor(5) * std::max(a, 0.7 * b);
    }
    // residual variance 1e-10 leaves O(1e-4) path noise
    EXPECT_NEAR(e.mean, value, 1e-3);
}

TEST(Mc, NoWithdrawalLowerBound) {
    const auto p = table1_params();
    const auto c = make_contract(100, 10, 0.03, 0.0, 0.0);
    const auto e = static_gmwb_price(p, c, config(10000));
    EXPECT_GE(e.mean, 100.0 * std::exp(-0.3) * (1 - 3 * e.std_error / e.mean));
}

TEST(Mc, PureAccountValue) {
    for (std::uint64_t seed : {3u, 4u}) {
        auto p = table1_params();
        p.rho_v = -0.7;
        p.kr = 0.05;
        p.omega_r = 0.025;
        const auto e = simulate_paths(p, 0.04, 100.0, 10, config(20000, 50, seed),
                                      [](const std::vector<PathPoint>& path) {
                                          return std::exp(-path[10].integrated) * path[10].account;
                                      });
        EXPECT_NEAR(e.mean, 100.0 * std::exp(-0.4), 3 * e.std_error);
    }
}

TEST(Mc, ScheduleMatchesStaticStrategy) {
    const auto p = table1_params();
    const auto c = make_contract(100, 10, 0.03, 0.1);
    const auto a = static_gmwb_price(p, c, config(2000));
    const auto b = schedule_price(p, c, config(2000), [&](int, const GmwbState& s) { return std::min(c.guarantee, s.benefit); });
    EXPECT_EQ(a.mean, b.mean);
}
