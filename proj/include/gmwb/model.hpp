#pragma once

// Heston Hull-White parameterization, flat-curve shift and the sampling box.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "gmwb/errors.hpp"

namespace gmwb {

/// Stochastic-model parameters. Rates and variances are annualized.
struct HhwParams {
    double v0 = 0.0;       // initial variance
    double kv = 0.0;       // variance mean-reversion speed
    double theta_v = 0.0;  // long-run variance
    double omega_v = 0.0;  // vol-of-vol
    double rho_v = 0.0;    // corr(Z, W^v)
    double r0 = 0.0;       // initial short rate
    double kr = 0.0;       // rate mean-reversion speed
    double omega_r = 0.0;  // rate volatility
    double rho_r = 0.0;    // corr(Z, W^r)
};

inline void validate(const HhwParams& p) {
    auto positive = [](double x, const char* name) {
        if (!(x > 0.0) || !std::isfinite(x))
            throw InvalidParameter(std::string(name) + " must be positive and finite");
    };
    positive(p.v0, "v0");
    positive(p.kv, "kv");
    positive(p.theta_v, "thetav");
    positive(p.omega_v, "omegav");
    positive(p.kr, "kr");
    positive(p.omega_r, "omegar");
    if (!std::isfinite(p.r0) || !std::isfinite(p.rho_v) || !std::isfinite(p.rho_r))
        throw InvalidParameter("r0, rhov and rhor must be finite");
    if (!(p.rho_v * p.rho_v + p.rho_r * p.rho_r < 1.0))
        throw InvalidParameter("rhov^2 + rhor^2 must be < 1");
}

/// Loading of Z on the Brownian motion orthogonal to W^v and W^r.
inline double residual_correlation(const HhwParams& p) {
    return std::sqrt(1.0 - p.rho_v * p.rho_v - p.rho_r * p.rho_r);
}

/// Deterministic shift of the short rate that reprices the flat curve
/// P(0, t) = exp(-r0 t).
inline double phi(double t, const HhwParams& p) {
    const double decay = 1.0 - std::exp(-p.kr * t);
    return p.r0 + p.omega_r * p.omega_r / (2.0 * p.kr * p.kr) * decay * decay;
}

/// r = omega_r * x + phi(t), with x the driftless-at-zero OU factor.
inline double short_rate(double x, double t, const HhwParams& p) {
    return p.omega_r * x + phi(t, p);
}

inline double flat_curve_discount(double t, const HhwParams& p) { return std::exp(-p.r0 * t); }

// ---------------------------------------------------------------------------
// Predictors: the nine model parameters plus fee rate and penalty.

inline constexpr std::size_t kNumPredictors = 11;

inline constexpr std::array<std::string_view, kNumPredictors> kPredictorNames = {
    "v0", "kv", "thetav", "omegav", "rhov", "r0", "kr", "omegar", "rhor", "alpha", "kappa"};

struct ParameterPoint {
    HhwParams model;
    double alpha = 0.0;
    double kappa = 0.0;

    std::array<double, kNumPredictors> to_array() const {
        return {model.v0, model.kv,      model.theta_v, model.omega_v, model.rho_v, model.r0,
                model.kr, model.omega_r, model.rho_r,   alpha,         kappa};
    }

    static ParameterPoint from_array(const std::array<double, kNumPredictors>& a) {
        ParameterPoint p;
        p.model = HhwParams{a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]};
        p.alpha = a[9];
        p.kappa = a[10];
        return p;
    }
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Closed box over the eleven predictors.
struct ParameterBox {
    std::array<Interval, kNumPredictors> ranges{};

    const Interval& operator[](std::size_t i) const { return ranges[i]; }
    Interval& operator[](std::size_t i) { return ranges[i]; }

    /// Affine map of a unit-cube point into the box.
    template <class UnitPoint>
    ParameterPoint map(const UnitPoint& u) const {
        std::array<double, kNumPredictors> a{};
        for (std::size_t i = 0; i < kNumPredictors; ++i)
            a[i] = ranges[i].lo + u[i] * (ranges[i].hi - ranges[i].lo);
        return ParameterPoint::from_array(a);
    }

    bool contains(const ParameterPoint& p) const {
        const auto a = p.to_array();
        for (std::size_t i = 0; i < kNumPredictors; ++i)
            if (!ranges[i].contains(a[i])) return false;
        return true;
    }
};

/// Checks ordering and that every point of the box is a valid model.
inline void validate(const ParameterBox& box) {
    for (std::size_t i = 0; i < kNumPredictors; ++i) {
        if (!(box[i].lo <= box[i].hi))
            throw InvalidParameter("box: lo > hi for " + std::string(kPredictorNames[i]));
    }
    for (std::size_t i : {0u, 1u, 2u, 3u, 6u, 7u}) {
        if (!(box[i].lo > 0.0))
            throw InvalidParameter("box: " + std::string(kPredictorNames[i]) + " must be positive");
    }
    auto max_sq = [](const Interval& r) { return std::max(r.lo * r.lo, r.hi * r.hi); };
    if (!(max_sq(box[4]) + max_sq(box[8]) < 1.0))
        throw InvalidParameter("box: rhov^2 + rhor^2 must stay below 1");
    if (box[10].lo < 0.0 || box[10].hi > 1.0) throw InvalidParameter("box: kappa must lie in [0,1]");
}

inline HhwParams table1_params() {
    return HhwParams{0.05, 2.00, 0.05, 0.50, -0.55, 0.02, 0.15, 0.015, 0.20};
}

inline ParameterPoint table1_point() { return ParameterPoint{table1_params(), 0.035, 0.10}; }

inline ParameterBox table3_box() {
    ParameterBox b;
    b.ranges = {Interval{0.01, 0.10},  Interval{1.40, 2.60},   Interval{0.01, 0.10},
                Interval{0.45, 0.75},  Interval{-0.70, -0.40}, Interval{0.01, 0.03},
                Interval{0.05, 0.25},  Interval{0.005, 0.025}, Interval{0.05, 0.35},
                Interval{0.00, 0.10},  Interval{0.00, 0.20}};
    return b;
}

}  // namespace gmwb
