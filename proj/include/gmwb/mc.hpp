#pragma once

// Monte Carlo oracle for the Heston Hull-White system: log-Euler account,
// full-truncation Euler variance, exact OU rate factor and trapezoidal
// discounting. Prices fixed withdrawal strategies only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "gmwb/contract.hpp"
#include "gmwb/errors.hpp"
#include "gmwb/model.hpp"
#include "gmwb/parallel.hpp"

namespace gmwb::mc {

struct McConfig {
    std::int64_t paths = 100000;
    int steps_per_year = 100;
    std::uint64_t seed = 42;
    int workers = 1;
    int block_size = 4096;  // paths per independently seeded substream
};

inline void validate(const McConfig& c) {
    if (c.paths < 2) throw InvalidParameter("Monte Carlo needs at least 2 paths");
    if (c.steps_per_year < 1) throw InvalidParameter("steps per year must be positive");
    if (c.block_size < 1) throw InvalidParameter("block size must be positive");
}

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// State of one path at a time point.
struct PathPoint {
    double account;     // A, with fee drag; equals S when alpha = 0
    double variance;    // v (may be negative under full truncation)
    double x;           // OU factor, r = omega_r x + phi(t)
    double integrated;  // int_0^t r ds
};

/// One-step transition of the discretized system.
class PathSimulator {
public:
    PathSimulator(const HhwParams& p, double alpha, int steps_per_year)
        : p_(p), alpha_(alpha), dt_(1.0 / steps_per_year) {
        validate(p_);
        decay_ = std::exp(-p_.kr * dt_);
        ou_sd_ = std::sqrt(-std::expm1(-2.0 * p_.kr * dt_) / (2.0 * p_.kr));
        rho3_ = residual_correlation(p_);
    }

    double dt() const { return dt_; }

    PathPoint start(double account) const { return {account, p_.v0, 0.0, 0.0}; }

    /// Advances one step from time t with independent normals xi_v, xi_r, xi_3.
    PathPoint step(const PathPoint& s, double t, double xi_v, double xi_r, double xi_3) const {
        const double vp = std::max(s.variance, 0.0);
        const double r_now = short_rate(s.x, t, p_);
        const double sq = std::sqrt(vp * dt_);
        const double xi_z = p_.rho_v * xi_v + p_.rho_r * xi_r + rho3_ * xi_3;
        PathPoint out;
        out.account = s.account * std::exp((r_now - alpha_ - 0.5 * vp) * dt_ + sq * xi_z);
        out.variance = s.variance + p_.kv * (p_.theta_v - vp) * dt_ + p_.omega_v * sq * xi_v;
        out.x = s.x * decay_ + ou_sd_ * xi_r;
        const double r_next = short_rate(out.x, t + dt_, p_);
        out.integrated = s.integrated + 0.5 * (r_now + r_next) * dt_;
        return out;
    }

private:
    HhwParams p_;
    double alpha_;
    double dt_;
    double decay_ = 1.0;
    double ou_sd_ = 0.0;
    double rho3_ = 1.0;
};

/// Payoff of one path observed at the anniversaries 0..years.
using AnniversaryPayoff = std::function<double(const std::vector<PathPoint>&)>;

/// Several payoffs of one path, written to out[0..count).
using AnniversaryPayoffs = std::function<void(const std::vector<PathPoint>&, double* out)>;

/// Simulates paths observed at the anniversaries 0..years and averages
/// `count` payoffs over the same paths. Blocks use seed_seq{seed, block} so
/// the estimates do not depend on the worker count.
inline std::vector<Estimate> simulate_paths(const HhwParams& p, double alpha, double initial_account, int years,
                                            const McConfig& config, std::size_t count,
                                            const AnniversaryPayoffs& payoff) {
    validate(config);
    if (years < 1) throw InvalidParameter("horizon must be at least one year");
    if (count < 1) throw InvalidParameter("need at least one payoff");
    const PathSimulator sim(p, alpha, config.steps_per_year);
    const std::int64_t blocks = (config.paths + config.block_size - 1) / config.block_size;
    std::vector<double> sums(blocks * count, 0.0), squares(blocks * count, 0.0);

    parallel_for(static_cast<std::size_t>(blocks), config.workers, [&](int, std::size_t block) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                          static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal;
        const std::int64_t first = static_cast<std::int64_t>(block) * config.block_size;
        const std::int64_t n = std::min<std::int64_t>(config.block_size, config.paths - first);
        std::vector<PathPoint> marks(years + 1);
        std::vector<double> value(count), sum(count, 0.0), sq(count, 0.0);
        for (std::int64_t path = 0; path < n; ++path) {
            PathPoint s = sim.start(initial_account);
            marks[0] = s;
            int step = 0;
            for (int y = 1; y <= years; ++y) {
                for (int k = 0; k < config.steps_per_year; ++k, ++step) {
                    const double xv = normal(rng), xr = normal(rng), x3 = normal(rng);
                    s = sim.step(s, step * sim.dt(), xv, xr, x3);
                }
                marks[y] = s;
            }
            payoff(marks, value.data());
            for (std::size_t q = 0; q < count; ++q) {
                sum[q] += value[q];
                sq[q] += value[q] * value[q];
            }
        }
        std::copy(sum.begin(), sum.end(), sums.begin() + block * count);
        std::copy(sq.begin(), sq.end(), squares.begin() + block * count);
    });

    std::vector<Estimate> out(count);
    const double n = static_cast<double>(config.paths);
    for (std::size_t q = 0; q < count; ++q) {
        double sum = 0.0, sq = 0.0;
        for (std::int64_t b = 0; b < blocks; ++b) {
            sum += sums[b * count + q];
            sq += squares[b * count + q];
        }
        const double mean = sum / n;
        const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
        out[q] = {mean, std::sqrt(var / n)};
    }
    return out;
}

inline Estimate simulate_paths(const HhwParams& p, double alpha, double initial_account, int years,
                               const McConfig& config, const AnniversaryPayoff& payoff) {
    return simulate_paths(p, alpha, initial_account, years, config, 1,
                          [&](const std::vector<PathPoint>& path, double* out) { *out = payoff(path); })[0];
}

/// Zero-coupon bond E[exp(-int_0^t r ds)] for an integer maturity t.
inline Estimate bond_price(const HhwParams& p, int maturity, const McConfig& config) {
    return simulate_paths(p, 0.0, 1.0, maturity, config, [maturity](const std::vector<PathPoint>& path) {
        return std::exp(-path[maturity].integrated);
    });
}

/// Bond prices at several integer maturities from one set of paths.
inline std::vector<Estimate> bond_prices(const HhwParams& p, const std::vector<int>& maturities,
                                         const McConfig& config) {
    if (maturities.empty()) return {};
    for (int t : maturities)
        if (t < 1) throw InvalidParameter("bond maturities must be positive integers");
    const int horizon = *std::max_element(maturities.begin(), maturities.end());
    return simulate_paths(p, 0.0, 1.0, horizon, config, maturities.size(),
                          [&](const std::vector<PathPoint>& path, double* out) {
                              for (std::size_t q = 0; q < maturities.size(); ++q)
                                  out[q] = std::exp(-path[maturities[q]].integrated);
                          });
}

/// Value of a fixed withdrawal schedule: `withdrawal(i, state)` gives w_i for
/// the pre-withdrawal state at anniversary i. Cash flows are weighted by the
/// contract's survivor fractions.
using Schedule = std::function<double(int, const GmwbState&)>;

inline double schedule_payoff(const ContractParams& c, const std::vector<PathPoint>& path,
                              const Schedule& withdrawal) {
    const auto& mortality = c.mortality;
    GmwbState state{c.premium, c.premium};
    double value = 0.0;
    for (int i = 1; i <= c.maturity; ++i) {
        const double growth = path[i].account / path[i - 1].account;
        state.account = state.account * growth;
        const double discount = std::exp(-path[i].integrated);
        const double survive = mortality.survivor(i);
        const double died = mortality.survivor(i - 1) - survive;
        value += discount * died * death_benefit(state, c.kappa);
        const double w = withdrawal(i, state);
        const double cash = net_cash_flow(w, c.guarantee, c.kappa);
        state = apply_withdrawal(state, w);
        value += discount * survive * cash;
        if (i == c.maturity) value += discount * survive * final_payoff(state, c.kappa);
    }
    return value;
}

/// Static strategy: withdraw min(G, B) at every anniversary.
inline Estimate static_gmwb_price(const HhwParams& p, const ContractParams& c, const McConfig& config) {
    validate(c);
    const Schedule stat = [&c](int, const GmwbState& s) { return std::min(c.guarantee, s.benefit); };
    return simulate_paths(p, c.alpha, c.premium, c.maturity, config,
                          [&](const std::vector<PathPoint>& path) { return schedule_payoff(c, path, stat); });
}

inline Estimate schedule_price(const HhwParams& p, const ContractParams& c, const McConfig& config,
                               const Schedule& withdrawal) {
    validate(c);
    return simulate_paths(p, c.alpha, c.premium, c.maturity, config,
                          [&](const std::vector<PathPoint>& path) { return schedule_payoff(c, path, withdrawal); });
}

}  // namespace gmwb::mc
