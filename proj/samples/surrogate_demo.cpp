// Trains a small GPR surrogate of the static-mode price on Faure points and
// compares it with direct pricing at a few random points.

#include <cstdio>
#include <random>

#include "gmwb/gmwb.hpp"

int main() {
    using namespace gmwb;
    const ParameterBox box = table3_box();
    hpde::GridConfig grid;
    grid.time_steps = 20;
    grid.space_steps = 41;
    grid.benefit_steps = 20;
    hpde::PricingOptions options;
    options.mode = hpde::WithdrawalMode::static_guarantee;

    auto price = [&](const ParameterPoint& p) {
        const auto c = make_contract(100.0, 10, p.alpha, p.kappa);
        return hpde::price_gmwb(p.model, c, grid, options).price / c.premium;
    };

    const auto train_points = qmc::sample_box(box, 60);
    Eigen::MatrixXd x(60, kNumPredictors);
    Eigen::VectorXd y(60), lo(kNumPredictors), hi(kNumPredictors);
    for (int i = 0; i < 60; ++i) {
        const auto a = train_points[i].to_array();
        for (std::size_t k = 0; k < kNumPredictors; ++k) x(i, k) = a[k];
        y(i) = price(train_points[i]);
    }
    for (std::size_t k = 0; k < kNumPredictors; ++k) lo(k) = box[k].lo, hi(k) = box[k].hi;
    const auto model = gpr::GprModel::train(x, y, lo, hi);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 5; ++i) {
        std::array<double, kNumPredictors> unit{};
        for (auto& v : unit) v = u(rng);
        const auto p = box.map(unit);
        const auto a = p.to_array();
        const double direct = price(p);
        const double approx = model.predict(Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(a.data(), kNumPredictors)));
        std::printf("direct %.5f  surrogate %.5f\n", direct, approx);
    }
}
