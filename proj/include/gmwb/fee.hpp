#pragma once

// No-arbitrage fee: the alpha at which the contract value equals the premium.

#include <cmath>
#include <functional>

#include "gmwb/errors.hpp"

namespace gmwb {

struct FeeOptions {
    double lower = 0.0;      // search bracket for alpha
    double upper = 0.10;
    double first = 0.02;     // secant starting points
    double second = 0.06;
    double tolerance = 1e-3; // |V - P| <= tolerance * P
    int max_iterations = 100;
};

struct FeeResult {
    double alpha = 0.0;
    double value = 0.0;      // V(alpha)
    int evaluations = 0;
    bool bisected = false;   // secant left the bracket and bisection finished the job

    double bps() const { return alpha * 1e4; }
};

/// Secant on V(alpha) - P from (first, second). If an iterate leaves the
/// bracket, falls back to bisection on [lower, upper].
inline FeeResult no_arbitrage_fee(const std::function<double(double)>& value, double premium,
                                  const FeeOptions& o = {}) {
    if (!(premium > 0.0)) throw InvalidParameter("premium must be positive");
    if (!(o.lower < o.upper) || !(o.tolerance > 0.0)) throw InvalidParameter("invalid fee search settings");
    const double tol = o.tolerance * premium;
    FeeResult res;
    auto eval = [&](double a) {
        ++res.evaluations;
        const double v = value(a);
        if (!std::isfinite(v)) throw NonFiniteValue("non-finite contract value in fee search");
        return v - premium;
    };

    double a0 = o.first, f0 = eval(a0);
    if (std::abs(f0) <= tol) return {a0, f0 + premium, res.evaluations, false};
    double a1 = o.second, f1 = eval(a1);
    if (std::abs(f1) <= tol) return {a1, f1 + premium, res.evaluations, false};

    for (int it = 0; it < o.max_iterations; ++it) {
        if (f1 == f0) break;
        const double a2 = a1 - f1 * (a1 - a0) / (f1 - f0);
        if (!(a2 >= o.lower && a2 <= o.upper)) break;
        const double f2 = eval(a2);
        if (std::abs(f2) <= tol) return {a2, f2 + premium, res.evaluations, false};
        a0 = a1;
        f0 = f1;
        a1 = a2;
        f1 = f2;
        if (it + 1 == o.max_iterations) throw MaxIterations("fee secant did not converge");
    }

    // Bisection on the bracket.
    double lo = o.lower, hi = o.upper;
    double flo = eval(lo);
    if (std::abs(flo) <= tol) return {lo, flo + premium, res.evaluations, true};
    if (flo < 0.0) throw NoRoot("contract is worth less than the premium even without fees");
    double fhi = eval(hi);
    if (std::abs(fhi) <= tol) return {hi, fhi + premium, res.evaluations, true};
    if (fhi > 0.0) throw NoRoot("no fee in the search bracket equates value and premium");
    for (int it = 0; it < o.max_iterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = eval(mid);
        if (std::abs(fm) <= tol) return {mid, fm + premium, res.evaluations, true};
        if (fm > 0.0) lo = mid;
        else hi = mid;
    }
    throw MaxIterations("fee bisection did not converge");
}

}  // namespace gmwb
