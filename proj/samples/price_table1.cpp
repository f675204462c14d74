// Prices the reference contract in both withdrawal modes and solves for the
// fee that makes the contract fair. Uses a coarse grid so it runs in seconds.

#include <cstdio>

#include "gmwb/gmwb.hpp"

int main() {
    using namespace gmwb;
    const HhwParams model = table1_params();
    const ContractParams contract = make_contract(100.0, 10, 0.035, 0.10);

    hpde::GridConfig grid;
    grid.time_steps = 50;
    grid.space_steps = 51;

    for (auto mode : {hpde::WithdrawalMode::optimal, hpde::WithdrawalMode::static_guarantee}) {
        hpde::PricingOptions options;
        options.mode = mode;
        const auto r = hpde::price_gmwb(model, contract, grid, options);
        std::printf("%-8s price %.4f  delta %.4f\n", mode == hpde::WithdrawalMode::optimal ? "optimal" : "static",
                    r.price, r.delta);
    }

    auto c = contract;
    const auto fee = no_arbitrage_fee(
        [&](double alpha) {
            c.alpha = alpha;
            return hpde::price_gmwb(model, c, grid).price;
        },
        contract.premium);
    std::printf("fair fee %.2f bps (%d pricings)\n", fee.bps(), fee.evaluations);
}
