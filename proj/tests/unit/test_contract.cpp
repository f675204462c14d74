#include <gtest/gtest.h>

#include "gmwb/contract.hpp"

using namespace gmwb;

TEST(Contract, CashFlowWithinGuaranteeIsUnpenalized) {
    EXPECT_DOUBLE_EQ(net_cash_flow(10.0, 10.0, 0.1), 10.0);
    EXPECT_DOUBLE_EQ(net_cash_flow(4.0, 10.0, 0.1), 4.0);
    EXPECT_DOUBLE_EQ(net_cash_flow(0.0, 10.0, 0.1), 0.0);
}

TEST(Contract, CashFlowPenalizesExcess) {
    EXPECT_DOUBLE_EQ(net_cash_flow(30.0, 10.0, 0.1), 28.0);
    EXPECT_DOUBLE_EQ(net_cash_flow(30.0, 10.0, 1.0), 10.0);
    EXPECT_THROW(net_cash_flow(-1.0, 10.0, 0.1), NegativeWithdrawal);
}

TEST(Contract, WithdrawalUpdatesState) {
    const auto s = apply_withdrawal(GmwbState{5.0, 50.0}, 10.0);
    EXPECT_DOUBLE_EQ(s.account, 0.0);
    EXPECT_DOUBLE_EQ(s.benefit, 40.0);
    EXPECT_THROW(apply_withdrawal(GmwbState{5.0, 50.0}, 60.0), WithdrawalExceedsBenefit);
    EXPECT_THROW(apply_withdrawal(GmwbState{5.0, 50.0}, -1.0), NegativeWithdrawal);
}

TEST(Contract, PayoffsUseTheLargerOfAccountAndPenalizedBenefit) {
    EXPECT_DOUBLE_EQ(final_payoff(GmwbState{30.0, 50.0}, 0.1), 45.0);
    EXPECT_DOUBLE_EQ(final_payoff(GmwbState{60.0, 50.0}, 0.1), 60.0);
    EXPECT_DOUBLE_EQ(death_benefit(GmwbState{30.0, 50.0}, 0.0), 50.0);
}

TEST(Contract, SurvivorFractionIsPiecewiseLinear) {
    const MortalityTable m({0.1, 0.2});
    EXPECT_DOUBLE_EQ(m.survivor(0.0), 1.0);
    EXPECT_DOUBLE_EQ(m.survivor(1.0), 0.9);
    EXPECT_DOUBLE_EQ(m.survivor(1.5), 0.8);
    EXPECT_DOUBLE_EQ(m.survivor(2.0), 0.7);
    EXPECT_DOUBLE_EQ(m.density(1.5), 0.2);
    EXPECT_THROW(m.survivor(2.5), TimeOutOfRange);
    EXPECT_THROW(m.survivor(-0.1), TimeOutOfRange);
}

TEST(Contract, MortalityValidation) {
    EXPECT_THROW(MortalityTable({0.5, 0.6}), InvalidParameter);
    EXPECT_THROW(MortalityTable({-0.1}), InvalidParameter);
    EXPECT_THROW(MortalityTable({0.1}).truncated(2), InvalidParameter);
    EXPECT_EQ(MortalityTable::zero(10).survivor(10.0), 1.0);
}

TEST(Contract, MakeContractDefaults) {
    const auto c = make_contract(200.0, 10, 0.02, 0.1);
    EXPECT_DOUBLE_EQ(c.guarantee, 20.0);
    EXPECT_EQ(c.mortality.years(), 10);
    const auto d = make_contract(100.0, 5, 0.02, 0.1, std::nullopt, MortalityTable(std::vector<double>(10, 0.01)));
    EXPECT_EQ(d.mortality.years(), 5);
    EXPECT_THROW(make_contract(100.0, 10, 0.02, 1.5), InvalidParameter);
    EXPECT_THROW(make_contract(100.0, 10, 0.02, 0.1, 150.0), InvalidParameter);
}
