#pragma once

// GMWB contract mechanics: withdrawals, penalties, death benefit, final
// payoff and mortality weighting.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gmwb/errors.hpp"

namespace gmwb {

/// Unconditional annual death probabilities: q[i-1] is the fraction of the
/// original cohort dying during contract year i.
class MortalityTable {
public:
    MortalityTable() = default;

    explicit MortalityTable(std::vector<double> death_probabilities)
        : q_(std::move(death_probabilities)) {
        double total = 0.0;
        for (double q : q_) {
            if (!(q >= 0.0 && q <= 1.0))
                throw InvalidParameter("death probabilities must lie in [0,1]");
            total += q;
        }
        if (total > 1.0 + 1e-12) throw InvalidParameter("death probabilities sum above 1");
        cumulative_.resize(q_.size() + 1, 0.0);
        for (std::size_t i = 0; i < q_.size(); ++i) cumulative_[i + 1] = cumulative_[i] + q_[i];
    }

    static MortalityTable zero(int years) {
        return MortalityTable(std::vector<double>(static_cast<std::size_t>(years), 0.0));
    }

    int years() const { return static_cast<int>(q_.size()); }

    double death_probability(int year) const {
        if (year < 1 || year > years()) throw TimeOutOfRange("mortality year out of range");
        return q_[static_cast<std::size_t>(year - 1)];
    }

    /// R(t): survivor fraction, linear between anniversaries.
    double survivor(double t) const {
        if (!(t >= 0.0 && t <= static_cast<double>(years())))
            throw TimeOutOfRange("survivor fraction requested outside [0, T]");
        const auto i = std::min(static_cast<std::size_t>(std::floor(t)), q_.size());
        const double at_i = 1.0 - cumulative_[i];
        if (i == q_.size()) return at_i;
        return at_i - (t - static_cast<double>(i)) * q_[i];
    }

    /// M(t): death density, constant on each contract year (t in (i-1, i]).
    double density(double t) const {
        if (!(t >= 0.0 && t <= static_cast<double>(years())))
            throw TimeOutOfRange("death density requested outside [0, T]");
        const int year = std::max(1, static_cast<int>(std::ceil(t)));
        return death_probability(year);
    }

    const std::vector<double>& death_probabilities() const { return q_; }

    /// First `years` rows of this table.
    MortalityTable truncated(int years_kept) const {
        if (years_kept > years()) throw InvalidParameter("mortality table shorter than maturity");
        return MortalityTable(std::vector<double>(q_.begin(), q_.begin() + years_kept));
    }

private:
    std::vector<double> q_;
    std::vector<double> cumulative_{0.0};
};

inline double survivor_fraction(double t, const MortalityTable& table) { return table.survivor(t); }

struct ContractParams {
    double premium = 100.0;
    int maturity = 10;
    double alpha = 0.0;      // annual fee rate
    double kappa = 0.0;      // penalty on the excess over the guarantee
    double guarantee = 10.0; // guaranteed annual withdrawal G
    MortalityTable mortality = MortalityTable::zero(10);
};

inline void validate(const ContractParams& c) {
    if (!(c.premium > 0.0)) throw InvalidParameter("premium must be positive");
    if (c.maturity < 1) throw InvalidParameter("maturity must be a positive integer");
    if (!(c.kappa >= 0.0 && c.kappa <= 1.0)) throw InvalidParameter("kappa must lie in [0,1]");
    if (!(c.guarantee >= 0.0 && c.guarantee <= c.premium))
        throw InvalidParameter("guarantee must lie in [0, premium]");
    if (!std::isfinite(c.alpha)) throw InvalidParameter("alpha must be finite");
    if (c.mortality.years() != c.maturity)
        throw InvalidParameter("mortality table must cover exactly the contract years");
}

/// Builds a contract with G defaulting to P/T and the mortality table cut to T.
inline ContractParams make_contract(double premium, int maturity, double alpha, double kappa,
                                    std::optional<double> guarantee = std::nullopt,
                                    std::optional<MortalityTable> mortality = std::nullopt) {
    ContractParams c;
    c.premium = premium;
    c.maturity = maturity;
    c.alpha = alpha;
    c.kappa = kappa;
    c.guarantee = guarantee.value_or(premium / static_cast<double>(maturity));
    c.mortality = mortality ? mortality->truncated(maturity) : MortalityTable::zero(maturity);
    validate(c);
    return c;
}

struct GmwbState {
    double account = 0.0;  // A
    double benefit = 0.0;  // B
};

/// Cash actually received for a withdrawal w.
inline double net_cash_flow(double w, double guarantee, double kappa) {
    if (w < 0.0) throw NegativeWithdrawal("withdrawal must be non-negative");
    return w <= guarantee ? w : w - kappa * (w - guarantee);
}

inline double net_cash_flow(double w, const ContractParams& c) {
    return net_cash_flow(w, c.guarantee, c.kappa);
}

inline GmwbState apply_withdrawal(GmwbState s, double w) {
    if (w < 0.0) throw NegativeWithdrawal("withdrawal must be non-negative");
    if (w > s.benefit) throw WithdrawalExceedsBenefit("withdrawal exceeds the base benefit");
    return GmwbState{std::max(s.account - w, 0.0), s.benefit - w};
}

inline double death_benefit(GmwbState s, double kappa) {
    return std::max(s.account, (1.0 - kappa) * s.benefit);
}

inline double final_payoff(GmwbState s, double kappa) {
    return std::max(s.account, (1.0 - kappa) * s.benefit);
}

}  // namespace gmwb
