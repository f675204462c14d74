#pragma once

// Recombining trinomial trees that match the first two conditional moments
// of the rate factor x (Ornstein-Uhlenbeck) and of the variance v (CIR).
//
// Level n holds 2n+1 nodes. For the Gaussian factor the node values are
// G_{n,j} = G_0 + 1.5 (j - n) sigma(dt). From a node with conditional mean mu,
// j_A is the first node of level n+1 at or above mu and j_B = j_A - 1; the
// third branch is j_A + 1 when G_A - mu <= 3/4 sigma and j_A - 2 otherwise.
//
// The CIR tree lives on y = 2 sqrt(v) / omega_v, which has unit diffusion, so
// the same spacing rule applies. Node values are mapped back to v (y <= 0
// collapses to v = 0) and the three probabilities at each node are solved so
// that the branch reproduces the exact CIR conditional moments.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gmwb/errors.hpp"
#include "gmwb/model.hpp"

namespace gmwb::lattice {

struct MomentSpec {
    double mean = 0.0;
    double variance = 0.0;

    double second_moment() const { return mean * mean + variance; }
};

inline MomentSpec ou_moments(double x, double dt, double kr) {
    if (!(dt > 0.0) || !(kr > 0.0)) throw InvalidParameter("ou_moments: dt and kr must be positive");
    return {x * std::exp(-kr * dt), -std::expm1(-2.0 * kr * dt) / (2.0 * kr)};
}

inline MomentSpec cir_moments(double v, double dt, double kv, double theta_v, double omega_v) {
    if (!(dt > 0.0) || v < 0.0) throw InvalidParameter("cir_moments: need dt > 0 and v >= 0");
    const double e = std::exp(-kv * dt);
    const double one_minus_e = -std::expm1(-kv * dt);
    const double w2 = omega_v * omega_v;
    return {theta_v + (v - theta_v) * e,
            v * (w2 / kv) * e * one_minus_e + theta_v * (w2 / (2.0 * kv)) * one_minus_e * one_minus_e};
}

/// Outgoing edges of one node. Slot 0 is j_A, slot 1 is j_B and slot 2 is
/// either j_C = j_A + 1 (`upper`) or j_D = j_A - 2.
struct Branch {
    std::array<int, 3> target{};
    std::array<double, 3> prob{};
    MomentSpec matched;   // moments reproduced exactly by `prob`
    bool upper = true;
    bool clamped = false; // target variance projected onto the feasible set

    double mean(std::span<const double> next) const {
        return prob[0] * next[target[0]] + prob[1] * next[target[1]] + prob[2] * next[target[2]];
    }
    double second_moment(std::span<const double> next) const {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += prob[k] * next[target[k]] * next[target[k]];
        return s;
    }
};

/// Table 5 probabilities on the uniform Gaussian geometry. Level n+1 holds
/// the values g0 + 1.5 (j - n - 1) sigma with sigma = sqrt(spec.variance).
inline Branch branch_gaussian(int n, double g0, const MomentSpec& spec) {
    if (!(spec.variance > 0.0)) throw InvalidParameter("branch: variance must be positive");
    const double sigma = std::sqrt(spec.variance);
    const double mu = spec.mean;
    const int top = 2 * n + 2;
    auto value = [&](int j) { return g0 + 1.5 * sigma * static_cast<double>(j - n - 1); };

    const double raw = std::ceil(2.0 / (3.0 * sigma) * (mu - g0));
    if (!std::isfinite(raw) || std::abs(raw) > 4.0 * (n + 2))
        throw MeanOutOfRange("conditional mean outside the next level; reduce the time step");
    int ja = n + static_cast<int>(raw);
    // The bracketing G_B < mu <= G_A is normative; the index formula can be off by one.
    while (ja <= top && value(ja) < mu) ++ja;
    while (ja >= 1 && value(ja - 1) >= mu) --ja;
    if (ja > top || ja < 1)
        throw MeanOutOfRange("conditional mean outside the next level; reduce the time step");

    Branch b;
    b.matched = spec;
    const double s2 = spec.variance;
    const double d = value(ja) - mu;
    if (d <= 0.75 * sigma) {
        if (ja + 1 > top) throw MeanOutOfRange("upper branch leaves the next level");
        b.upper = true;
        b.target = {ja, ja - 1, ja + 1};
        b.prob = {(5.0 * s2 - 4.0 * d * d) / (9.0 * s2),
                  (2.0 * d * d + 3.0 * sigma * d + 2.0 * s2) / (9.0 * s2),
                  (2.0 * d * d - 3.0 * sigma * d + 2.0 * s2) / (9.0 * s2)};
    } else {
        if (ja - 2 < 0) throw MeanOutOfRange("lower branch leaves the next level");
        const double e = mu - value(ja - 1);
        b.upper = false;
        b.target = {ja, ja - 1, ja - 2};
        b.prob = {(2.0 * e * e + 3.0 * sigma * e + 2.0 * s2) / (9.0 * s2),
                  (5.0 * s2 - 4.0 * e * e) / (9.0 * s2),
                  (2.0 * e * e - 3.0 * sigma * e + 2.0 * s2) / (9.0 * s2)};
    }
    return b;
}

/// Interval of variances that three distinct support points can carry at the
/// given mean with all probabilities non-negative.
inline std::array<double, 2> feasible_variance(std::array<double, 3> x, double mean) {
    std::sort(x.begin(), x.end());
    const double lo = std::max({0.0, (mean - x[1]) * (x[2] - mean), (mean - x[0]) * (x[1] - mean)});
    const double hi = (mean - x[0]) * (x[2] - mean);
    return {lo, hi};
}

/// Probabilities on three distinct points with the given mean and variance.
inline std::array<double, 3> three_point_probabilities(const std::array<double, 3>& x, double mean,
                                                       double variance) {
    std::array<double, 3> p{};
    for (int i = 0; i < 3; ++i) {
        const double xj = x[(i + 1) % 3];
        const double xk = x[(i + 2) % 3];
        p[i] = (variance + (mean - xj) * (mean - xk)) / ((x[i] - xj) * (x[i] - xk));
    }
    return p;
}

/// Moment-matched branch onto an arbitrary non-decreasing level. Equal
/// values (the collapsed v = 0 nodes of the CIR tree) are never used twice.
/// When no admissible triple can carry the requested variance it is
/// projected onto the feasible interval and `clamped` is set.
inline Branch branch_on_level(std::span<const double> next, const MomentSpec& spec) {
    const double mu = spec.mean;
    const int size = static_cast<int>(next.size());
    const int ja = static_cast<int>(std::lower_bound(next.begin(), next.end(), mu) - next.begin());
    if (ja >= size || ja < 1 || !(next[ja - 1] < mu))
        throw MeanOutOfRange("conditional mean outside the next level; reduce the time step");
    const int jb = ja - 1;
    const double sigma = std::sqrt(std::max(spec.variance, 0.0));

    struct Candidate {
        std::array<int, 3> idx;
        bool upper;
    };
    std::array<Candidate, 2> order{Candidate{{ja, jb, ja + 1}, true}, Candidate{{ja, jb, jb - 1}, false}};
    if (!(next[ja] - mu <= 0.75 * sigma)) std::swap(order[0], order[1]);

    auto admissible = [&](const Candidate& c) {
        if (c.idx[2] < 0 || c.idx[2] >= size) return false;
        return c.upper ? next[c.idx[2]] > next[ja] : next[c.idx[2]] < next[jb];
    };

    const Candidate* fallback = nullptr;
    for (const auto& c : order) {
        if (!admissible(c)) continue;
        if (!fallback) fallback = &c;
        const std::array<double, 3> x{next[c.idx[0]], next[c.idx[1]], next[c.idx[2]]};
        const auto [lo, hi] = feasible_variance(x, mu);
        if (spec.variance >= lo && spec.variance <= hi) {
            Branch b;
            b.target = c.idx;
            b.upper = c.upper;
            b.matched = spec;
            b.prob = three_point_probabilities(x, mu, spec.variance);
            return b;
        }
    }
    if (!fallback) throw MeanOutOfRange("no admissible branch triple at the next level");

    const std::array<double, 3> x{next[fallback->idx[0]], next[fallback->idx[1]], next[fallback->idx[2]]};
    const auto [lo, hi] = feasible_variance(x, mu);
    Branch b;
    b.target = fallback->idx;
    b.upper = fallback->upper;
    b.clamped = true;
    b.matched = MomentSpec{mu, std::clamp(spec.variance, lo, hi)};
    b.prob = three_point_probabilities(x, mu, b.matched.variance);
    return b;
}

enum class Process { ornstein_uhlenbeck, cir };

class TrinomialTree {
public:
    TrinomialTree(Process process, int steps, double dt, std::vector<std::vector<double>> values,
                  std::vector<std::vector<Branch>> branches)
        : process_(process), steps_(steps), dt_(dt), values_(std::move(values)),
          branches_(std::move(branches)) {}

    Process process() const { return process_; }
    int steps() const { return steps_; }
    double dt() const { return dt_; }
    static int level_size(int n) { return 2 * n + 1; }

    double value(int n, int j) const { return values_[n][j]; }
    std::span<const double> level(int n) const { return values_[n]; }
    const Branch& branch(int n, int j) const { return branches_[n][j]; }

    /// Probability of reaching each node from the root.
    std::vector<std::vector<double>> forward_probabilities() const {
        std::vector<std::vector<double>> out(steps_ + 1);
        out[0] = {1.0};
        for (int n = 0; n < steps_; ++n) {
            out[n + 1].assign(level_size(n + 1), 0.0);
            for (int j = 0; j < level_size(n); ++j) {
                const auto& b = branches_[n][j];
                for (int k = 0; k < 3; ++k) out[n + 1][b.target[k]] += out[n][j] * b.prob[k];
            }
        }
        return out;
    }

private:
    Process process_;
    int steps_;
    double dt_;
    std::vector<std::vector<double>> values_;
    std::vector<std::vector<Branch>> branches_;
};

inline void check_tree_inputs(int steps, double horizon) {
    if (steps < 1) throw InvalidParameter("tree needs at least one step");
    if (!(horizon > 0.0)) throw InvalidParameter("tree horizon must be positive");
}

/// Tree for dx = -kr x dt + dW, x_0 = 0.
inline TrinomialTree build_ou_tree(double kr, int steps, double horizon) {
    check_tree_inputs(steps, horizon);
    const double dt = horizon / steps;
    const double sigma = std::sqrt(ou_moments(0.0, dt, kr).variance);
    std::vector<std::vector<double>> values(steps + 1);
    for (int n = 0; n <= steps; ++n) {
        values[n].resize(TrinomialTree::level_size(n));
        for (int j = 0; j <= 2 * n; ++j) values[n][j] = 1.5 * (j - n) * sigma;
    }
    std::vector<std::vector<Branch>> branches(steps);
    for (int n = 0; n < steps; ++n) {
        branches[n].reserve(TrinomialTree::level_size(n));
        for (int j = 0; j <= 2 * n; ++j) {
            branches[n].push_back(branch_gaussian(n, 0.0, ou_moments(values[n][j], dt, kr)));
        }
    }
    return TrinomialTree(Process::ornstein_uhlenbeck, steps, dt, std::move(values), std::move(branches));
}

/// Tree for the CIR variance, built on y = 2 sqrt(v) / omega_v.
inline TrinomialTree build_cir_tree(const HhwParams& p, int steps, double horizon) {
    check_tree_inputs(steps, horizon);
    if (!(p.v0 > 0.0 && p.kv > 0.0 && p.theta_v > 0.0 && p.omega_v > 0.0))
        throw InvalidParameter("CIR tree needs positive v0, kv, thetav, omegav");
    const double dt = horizon / steps;
    const double y0 = 2.0 * std::sqrt(p.v0) / p.omega_v;
    const double h = 1.5 * std::sqrt(dt);
    std::vector<std::vector<double>> values(steps + 1);
    for (int n = 0; n <= steps; ++n) {
        values[n].resize(TrinomialTree::level_size(n));
        for (int j = 0; j <= 2 * n; ++j) {
            const double y = y0 + h * (j - n);
            values[n][j] = y > 0.0 ? 0.25 * p.omega_v * p.omega_v * y * y : 0.0;
        }
    }
    std::vector<std::vector<Branch>> branches(steps);
    for (int n = 0; n < steps; ++n) {
        branches[n].reserve(TrinomialTree::level_size(n));
        for (int j = 0; j <= 2 * n; ++j) {
            const auto spec = cir_moments(values[n][j], dt, p.kv, p.theta_v, p.omega_v);
            branches[n].push_back(branch_on_level(values[n + 1], spec));
        }
    }
    return TrinomialTree(Process::cir, steps, dt, std::move(values), std::move(branches));
}

inline TrinomialTree build_tree(Process process, const HhwParams& p, int steps, double horizon) {
    return process == Process::ornstein_uhlenbeck ? build_ou_tree(p.kr, steps, horizon)
                                                  : build_cir_tree(p, steps, horizon);
}

struct IndexRange {
    int lo = 0;
    int hi = -1;

    int size() const { return hi - lo + 1; }
    bool contains(int j) const { return j >= lo && j <= hi; }
    int clamp(int j) const { return std::clamp(j, lo, hi); }
};

/// Per-level index range of nodes whose forward probability is at least
/// `tolerance`. The pricer only carries values on these windows; branches
/// that leave a window are redirected to its edge.
inline std::vector<IndexRange> active_windows(const TrinomialTree& tree, double tolerance) {
    const auto prob = tree.forward_probabilities();
    std::vector<IndexRange> out(prob.size());
    for (std::size_t n = 0; n < prob.size(); ++n) {
        const auto& level = prob[n];
        int lo = 0;
        int hi = static_cast<int>(level.size()) - 1;
        while (lo < hi && level[lo] < tolerance) ++lo;
        while (hi > lo && level[hi] < tolerance) --hi;
        out[n] = IndexRange{lo, hi};
    }
    return out;
}

}  // namespace gmwb::lattice
