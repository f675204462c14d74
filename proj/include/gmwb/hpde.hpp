#pragma once

// Hybrid tree / finite-difference pricer for the GMWB contract.
//
// The variance v and the rate factor x move on trinomial trees; the account
// value is carried in the coordinate z = log(A/P) - (rho_v/omega_v) v, whose
// increment has no W^v component. Between tree levels, each (v, x) node
// takes the tree expectation of the next level, evaluating the next values at
// z + rho_r sqrt(v) (x' - E[x']) + mu dt, i.e. the W^r part of the increment
// plus the drift
//
//     mu = r - alpha - v/2 - (rho_v/omega_v) k_v (theta_v - v),
//
// and then performs one Crank-Nicolson step of
//
//     u_t + 1/2 rho_3^2 v u_zz - r u = 0.
//
// At each anniversary the withdrawal control is applied on a uniform grid of
// base-benefit values.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "gmwb/contract.hpp"
#include "gmwb/errors.hpp"
#include "gmwb/lattice.hpp"
#include "gmwb/model.hpp"
#include "gmwb/parallel.hpp"

namespace gmwb::hpde {

struct GridConfig {
    int time_steps = 250;       // N, a multiple of the maturity in years
    int space_steps = 250;      // M, z-grid points
    int benefit_steps = 100;    // N_B, the B-grid has N_B + 1 points on [0, P]
    double half_width = 6.0;    // L, in units of sqrt(max(v0, thetav) T)
    double window_tolerance = 1e-9;  // forward probability below which tree nodes are dropped
};

inline void validate(const GridConfig& g, int maturity) {
    if (g.time_steps < 1 || g.space_steps < 3 || g.benefit_steps < 1)
        throw InvalidParameter("grid needs N >= 1, M >= 3 and N_B >= 1");
    if (!(g.half_width > 0.0)) throw InvalidParameter("grid half-width must be positive");
    if (g.time_steps % maturity != 0)
        throw GridTooCoarse("time steps must be a multiple of the maturity so anniversaries fall on tree levels");
    if (!(g.window_tolerance >= 0.0 && g.window_tolerance < 1e-3))
        throw InvalidParameter("window tolerance must lie in [0, 1e-3)");
}

enum class WithdrawalMode { optimal, static_guarantee };

struct PricingOptions {
    WithdrawalMode mode = WithdrawalMode::optimal;
    std::optional<double> initial_account;  // defaults to the premium; B_0 is always P
    int workers = 1;
};

struct PricingResult {
    double price = 0.0;
    double delta = 0.0;
    double zero_account_value = 0.0;  // value at t = 0 with A = 0, B = P
    double premium = 0.0;
    double z_offset = 0.0;            // (rho_v/omega_v) v0
    std::vector<double> z_grid;
    std::vector<double> root_values;  // t = 0, B = P slice on the z-grid

    /// Value at t = 0 for another initial account (B_0 = P), read from the
    /// root slice by cubic interpolation.
    double value_at(double account) const;
};

// ---------------------------------------------------------------------------
// Storage

/// Contract values at one tree level. Each (v-node, x-node, B-index) row
/// holds M + 1 numbers: slot 0 is the A = 0 value, slots 1..M the z-grid.
class ValueSurface {
public:
    void reshape(lattice::IndexRange v, lattice::IndexRange x, int slices, int points) {
        v_ = v;
        x_ = x;
        slices_ = slices;
        stride_ = points + 1;
        const std::size_t need = static_cast<std::size_t>(v.size()) * x.size() * slices * stride_;
        if (data_.size() < need) data_.resize(need);
    }

    const lattice::IndexRange& v_range() const { return v_; }
    const lattice::IndexRange& x_range() const { return x_; }
    int slices() const { return slices_; }
    int points() const { return stride_ - 1; }

    std::span<double> row(int iv, int ix, int b) { return {data_.data() + offset(iv, ix, b), stride_}; }
    std::span<const double> row(int iv, int ix, int b) const {
        return {data_.data() + offset(iv, ix, b), stride_};
    }

private:
    std::size_t offset(int iv, int ix, int b) const {
        const std::size_t node = static_cast<std::size_t>(iv - v_.lo) * x_.size() + (ix - x_.lo);
        return (node * slices_ + b) * stride_;
    }

    lattice::IndexRange v_, x_;
    int slices_ = 0;
    std::size_t stride_ = 1;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Small numerical kernels

/// Position of an account value on the extended row [A=0, z_0 .. z_{M-1}].
/// Interior points use a four-point cubic in z limited to the bracketing
/// values; between A = 0 and the first grid point the value is linear in A,
/// and above the grid it is extrapolated linearly in z.
struct Locator {
    int j = 0;              // left bracketing slot
    bool cubic = false;
    std::array<double, 4> w{1.0, 0.0, 0.0, 0.0};  // cubic: slots j-1..j+2; linear: j, j+1

    double apply(const double* row) const {
        if (!cubic) return w[0] * row[j] + w[1] * row[j + 1];
        const double b = row[j], c = row[j + 1];
        const double val = w[0] * row[j - 1] + w[1] * b + w[2] * c + w[3] * row[j + 2];
        return std::min(std::max(val, std::min(b, c)), std::max(b, c));
    }
};

/// Four-point Lagrange stencil for u(z_k + shift), limited to the range of the
/// two bracketing values.
struct ShiftStencil {
    int offset = 0;  // floor(shift / dz)
    std::array<double, 4> w{};

    static ShiftStencil make(double shift, double dz) {
        ShiftStencil s;
        const double q = shift / dz;
        s.offset = static_cast<int>(std::floor(q));
        const double f = q - s.offset;
        s.w = {-f * (f - 1.0) * (f - 2.0) / 6.0, (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
               -(f + 1.0) * f * (f - 2.0) / 2.0, (f + 1.0) * f * (f - 1.0) / 6.0};
        return s;
    }
};

/// out[k] += p * u(z_k + shift) for k = 0..m-1; u is linearly extrapolated
/// beyond the grid ends.
inline void accumulate_shifted(const double* u, int m, const ShiftStencil& s, double p, double* out) {
    auto at = [&](int i) {
        if (i < 0) return u[0] + i * (u[1] - u[0]);
        if (i > m - 1) return u[m - 1] + (i - (m - 1)) * (u[m - 1] - u[m - 2]);
        return u[i];
    };
    const int first = std::max(0, 1 - s.offset);
    const int last = std::min(m - 1, m - 3 - s.offset);
    auto slow = [&](int k) {
        const int j = k + s.offset;
        const double a = at(j - 1), b = at(j), c = at(j + 1), d = at(j + 2);
        double val = s.w[0] * a + s.w[1] * b + s.w[2] * c + s.w[3] * d;
        val = std::clamp(val, std::min(b, c), std::max(b, c));
        out[k] += p * val;
    };
    for (int k = 0; k < std::min(first, m); ++k) slow(k);
    const double w0 = s.w[0], w1 = s.w[1], w2 = s.w[2], w3 = s.w[3];
    for (int k = first; k <= last; ++k) {
        const double* q = u + k + s.offset;
        const double b = q[0], c = q[1];
        double val = w0 * q[-1] + w1 * b + w2 * c + w3 * q[2];
        val = std::min(std::max(val, std::min(b, c)), std::max(b, c));
        out[k] += p * val;
    }
    for (int k = std::max(first, last + 1); k < m; ++k) slow(k);
}

/// Tridiagonal operator L on the z-grid: (L u)_k = lower_k u_{k-1} + diag_k u_k + upper_k u_{k+1}.
struct ZOperator {
    std::vector<double> lower, diag, upper;

    /// Drift mu, diffusion coefficient d (of u_zz) and reaction -r. Central
    /// differences unless the cell Peclet number exceeds 2, then upwind.
    /// Both ends use u_zz = 0 with a one-sided first derivative.
    void assemble(int m, double dz, double mu, double d, double r) {
        lower.assign(m, 0.0);
        diag.assign(m, 0.0);
        upper.assign(m, 0.0);
        const double a = d / (dz * dz);
        const bool upwind = d <= 0.0 || std::abs(mu) * dz > 2.0 * d;
        double lo, di, up;
        if (!upwind) {
            lo = a - mu / (2.0 * dz);
            up = a + mu / (2.0 * dz);
            di = -2.0 * a - r;
        } else if (mu >= 0.0) {
            lo = a;
            up = a + mu / dz;
            di = -2.0 * a - mu / dz - r;
        } else {
            lo = a - mu / dz;
            up = a;
            di = -2.0 * a + mu / dz - r;
        }
        for (int k = 1; k < m - 1; ++k) {
            lower[k] = lo;
            diag[k] = di;
            upper[k] = up;
        }
        diag[0] = -mu / dz - r;
        upper[0] = mu / dz;
        lower[m - 1] = -mu / dz;
        diag[m - 1] = mu / dz - r;
    }

    void apply(const double* u, int m, double scale, double* out) const {
        out[0] = u[0] + scale * (diag[0] * u[0] + upper[0] * u[1]);
        for (int k = 1; k < m - 1; ++k)
            out[k] = u[k] + scale * (lower[k] * u[k - 1] + diag[k] * u[k] + upper[k] * u[k + 1]);
        out[m - 1] = u[m - 1] + scale * (lower[m - 1] * u[m - 2] + diag[m - 1] * u[m - 1]);
    }
};

/// Factorization of I - scale * L for repeated Thomas solves.
struct TridiagonalFactor {
    std::vector<double> sub, inv_den, sup;

    void factor(const ZOperator& op, double scale) {
        const int m = static_cast<int>(op.diag.size());
        sub.resize(m);
        inv_den.resize(m);
        sup.resize(m);
        double prev = 0.0;  // modified super-diagonal of the previous row
        for (int k = 0; k < m; ++k) {
            sub[k] = -scale * op.lower[k];
            const double den = 1.0 - scale * op.diag[k] - sub[k] * prev;
            inv_den[k] = 1.0 / den;
            sup[k] = -scale * op.upper[k] * inv_den[k];
            prev = sup[k];
        }
    }

    void solve(double* x, int m) const {
        x[0] *= inv_den[0];
        for (int k = 1; k < m; ++k) x[k] = (x[k] - sub[k] * x[k - 1]) * inv_den[k];
        for (int k = m - 2; k >= 0; --k) x[k] -= sup[k] * x[k + 1];
    }
};

// ---------------------------------------------------------------------------

class HybridPricer {
public:
    HybridPricer(const HhwParams& model, const ContractParams& contract, const GridConfig& grid,
                 PricingOptions options = {})
        : model_(model), contract_(contract), grid_(grid), options_(options) {
        gmwb::validate(model_);
        gmwb::validate(contract_);
        hpde::validate(grid_, contract_.maturity);
        if (options_.initial_account && !(*options_.initial_account > 0.0))
            throw InvalidParameter("initial account must be positive");

        const double horizon = contract_.maturity;
        vtree_ = lattice::build_cir_tree(model_, grid_.time_steps, horizon);
        xtree_ = lattice::build_ou_tree(model_.kr, grid_.time_steps, horizon);
        vwin_ = lattice::active_windows(*vtree_, grid_.window_tolerance);
        xwin_ = lattice::active_windows(*xtree_, grid_.window_tolerance);
        dt_ = horizon / grid_.time_steps;
        steps_per_year_ = grid_.time_steps / contract_.maturity;

        coupling_ = model_.rho_v / model_.omega_v;
        rho3_ = residual_correlation(model_);
        const int m = grid_.space_steps;
        const double half = grid_.half_width * std::sqrt(std::max(model_.v0, model_.theta_v) * horizon);
        dz_ = 2.0 * half / (m - 1);
        center_ = (m - 1) / 2;
        z0_ = -coupling_ * model_.v0;
        z_.resize(m);
        for (int k = 0; k < m; ++k) z_[k] = z0_ + (k - center_) * dz_;

        db_ = contract_.premium / grid_.benefit_steps;
        const double g_steps = contract_.guarantee / db_;
        guarantee_aligned_ = std::abs(g_steps - std::round(g_steps)) < 1e-9;
        masks_ = benefit_masks();
    }

    PricingResult price() const;

    // Building blocks, exposed for testing.

    const lattice::TrinomialTree& variance_tree() const { return *vtree_; }
    const lattice::TrinomialTree& rate_tree() const { return *xtree_; }
    const lattice::IndexRange& variance_window(int n) const { return vwin_[n]; }
    const lattice::IndexRange& rate_window(int n) const { return xwin_[n]; }
    const std::vector<double>& z_grid() const { return z_; }
    double dz() const { return dz_; }
    double dt() const { return dt_; }
    int slices() const { return grid_.benefit_steps + 1; }
    double benefit(int b) const { return b * db_; }

    /// Account value at z-grid point k for variance v.
    double account(int k, double v) const { return contract_.premium * std::exp(z_[k] + coupling_ * v); }

    void reshape(ValueSurface& s, int level) const {
        s.reshape(vwin_[level], xwin_[level], slices(), grid_.space_steps);
    }

    /// Base-benefit slices that can be reached just before anniversary i
    /// (i = 1..T); the same slices are carried through period (t_{i-1}, t_i).
    const std::vector<int>& benefit_mask(int i) const { return masks_[i - 1]; }

    /// One backward step from level n+1 to level n on the given slices.
    /// `smoothing` replaces the Crank-Nicolson step by two implicit half steps.
    void pde_step(int n, const ValueSurface& next, ValueSurface& out, std::span<const int> slices,
                  bool smoothing) const;

    /// Applies the withdrawal control and death benefit of anniversary i in
    /// place: rows in benefit_mask(i) become values just before t_i. At i = T
    /// the continuation is the survivor-weighted final payoff and the surface
    /// content is not read.
    void anniversary(int i, ValueSurface& surface) const;

private:
    struct NodeCoefficients {
        double drift;
        double diffusion;
        double rate;
    };

    NodeCoefficients coefficients(double v, double x, double t) const {
        const double r = short_rate(x, t, model_);
        const double mu = r - contract_.alpha - 0.5 * v - coupling_ * model_.kv * (model_.theta_v - v);
        return {mu, 0.5 * rho3_ * rho3_ * v, r};
    }

    Locator locate(double a, double v) const {
        const int m = grid_.space_steps;
        Locator loc;
        if (a <= 0.0) return loc;
        const double pos = (std::log(a / contract_.premium) - coupling_ * v - z_.front()) / dz_;
        if (pos < 0.0) {
            const double t = a / account(0, v);
            loc.w = {1.0 - t, t, 0.0, 0.0};
            return loc;
        }
        if (pos >= m - 1) {
            const double f = pos - (m - 2);
            loc.j = m - 1;
            loc.w = {1.0 - f, f, 0.0, 0.0};
            return loc;
        }
        const int i = static_cast<int>(pos);
        const double f = pos - i;
        loc.j = i + 1;
        if (i >= 1 && i + 2 <= m - 1) {
            loc.cubic = true;
            loc.w = ShiftStencil::make(f * dz_, dz_).w;
        } else {
            loc.w = {1.0 - f, f, 0.0, 0.0};
        }
        return loc;
    }

    std::vector<std::vector<int>> benefit_masks() const;

    HhwParams model_;
    ContractParams contract_;
    GridConfig grid_;
    PricingOptions options_;
    std::optional<lattice::TrinomialTree> vtree_, xtree_;
    std::vector<lattice::IndexRange> vwin_, xwin_;
    double dt_ = 0.0;
    int steps_per_year_ = 1;
    double coupling_ = 0.0;
    double rho3_ = 1.0;
    double dz_ = 0.0;
    int center_ = 0;
    double z0_ = 0.0;
    std::vector<double> z_;
    double db_ = 0.0;
    bool guarantee_aligned_ = true;
    std::vector<std::vector<int>> masks_;
};

inline std::vector<std::vector<int>> HybridPricer::benefit_masks() const {
    const int T = contract_.maturity;
    const int top = grid_.benefit_steps;
    std::vector<std::vector<int>> masks(T);
    masks[0] = {top};
    for (int i = 1; i < T; ++i) {
        std::vector<int> next;
        if (options_.mode == WithdrawalMode::optimal) {
            const int hi = masks[i - 1].back();
            for (int b = 0; b <= hi; ++b) next.push_back(b);
        } else {
            for (int b : masks[i - 1]) {
                const double after = benefit(b) - std::min(contract_.guarantee, benefit(b));
                const double pos = after / db_;
                const int lo = static_cast<int>(std::floor(pos + 1e-9));
                next.push_back(std::clamp(lo, 0, top));
                if (std::abs(pos - std::round(pos)) > 1e-9) next.push_back(std::clamp(lo + 1, 0, top));
            }
            std::sort(next.begin(), next.end());
            next.erase(std::unique(next.begin(), next.end()), next.end());
        }
        masks[i] = std::move(next);
    }
    return masks;
}

inline void HybridPricer::pde_step(int n, const ValueSurface& next, ValueSurface& out,
                                   std::span<const int> slices_used, bool smoothing) const {
    const int m = grid_.space_steps;
    const int stride = m + 1;
    const auto& vw = out.v_range();
    const auto& xw = out.x_range();
    const auto& vnext = next.v_range();
    const auto& xnext = next.x_range();
    const double t = n * dt_;
    const int nslices = static_cast<int>(slices_used.size());
    const int workers = worker_count(static_cast<std::size_t>(vw.size()), options_.workers);

    struct Scratch {
        std::vector<double> y;    // v-averaged rows for every x-node of level n+1
        std::vector<double> tmp, rhs;
        ZOperator op;
        TridiagonalFactor factor;
    };
    std::vector<Scratch> scratch(workers);

    parallel_for(static_cast<std::size_t>(vw.size()), workers, [&](int worker, std::size_t idx) {
        Scratch& s = scratch[worker];
        const int iv = vw.lo + static_cast<int>(idx);
        const auto& vb = vtree_->branch(n, iv);
        const double v = vtree_->value(n, iv);
        std::array<int, 3> vt{};
        for (int a = 0; a < 3; ++a) vt[a] = vnext.clamp(vb.target[a]);

        // Average over the variance branches first; the z-shift only depends on x.
        s.y.resize(static_cast<std::size_t>(xnext.size()) * nslices * stride);
        for (int jx = xnext.lo; jx <= xnext.hi; ++jx) {
            for (int si = 0; si < nslices; ++si) {
                const int b = slices_used[si];
                double* dst = s.y.data() + (static_cast<std::size_t>(jx - xnext.lo) * nslices + si) * stride;
                const double* r0 = next.row(vt[0], jx, b).data();
                const double* r1 = next.row(vt[1], jx, b).data();
                const double* r2 = next.row(vt[2], jx, b).data();
                const double p0 = vb.prob[0], p1 = vb.prob[1], p2 = vb.prob[2];
                for (int k = 0; k < stride; ++k) dst[k] = p0 * r0[k] + p1 * r1[k] + p2 * r2[k];
            }
        }

        s.tmp.resize(m);
        s.rhs.resize(m);
        const double loading = model_.rho_r * std::sqrt(v);
        for (int ix = xw.lo; ix <= xw.hi; ++ix) {
            const auto& xb = xtree_->branch(n, ix);
            const double x = xtree_->value(n, ix);
            const auto coef = coefficients(v, x, t);
            std::array<ShiftStencil, 3> stencil;
            std::array<int, 3> xt{};
            for (int c = 0; c < 3; ++c) {
                const double innovation = xtree_->value(n + 1, xb.target[c]) - xb.matched.mean;
                stencil[c] = ShiftStencil::make(loading * innovation + coef.drift * dt_, dz_);
                xt[c] = xnext.clamp(xb.target[c]);
            }
            s.op.assemble(m, dz_, 0.0, coef.diffusion, coef.rate);
            double zero_factor;
            if (smoothing) {
                s.factor.factor(s.op, 0.5 * dt_);
                zero_factor = 1.0 / ((1.0 + 0.5 * coef.rate * dt_) * (1.0 + 0.5 * coef.rate * dt_));
            } else {
                s.factor.factor(s.op, 0.5 * dt_);
                zero_factor = (1.0 - 0.5 * coef.rate * dt_) / (1.0 + 0.5 * coef.rate * dt_);
            }

            double check = 0.0;
            for (int si = 0; si < nslices; ++si) {
                const int b = slices_used[si];
                std::fill(s.tmp.begin(), s.tmp.end(), 0.0);
                double zero = 0.0;
                for (int c = 0; c < 3; ++c) {
                    const double* src =
                        s.y.data() + (static_cast<std::size_t>(xt[c] - xnext.lo) * nslices + si) * stride;
                    zero += xb.prob[c] * src[0];
                    accumulate_shifted(src + 1, m, stencil[c], xb.prob[c], s.tmp.data());
                }
                double* dst = out.row(iv, ix, b).data();
                if (smoothing) {
                    s.factor.solve(s.tmp.data(), m);
                    s.factor.solve(s.tmp.data(), m);
                    std::copy(s.tmp.begin(), s.tmp.end(), dst + 1);
                } else {
                    s.op.apply(s.tmp.data(), m, 0.5 * dt_, dst + 1);
                    s.factor.solve(dst + 1, m);
                }
                dst[0] = zero * zero_factor;
                check += dst[0] + dst[1] + dst[m];
            }
            if (!std::isfinite(check))
                throw NonFiniteValue("finite-difference step produced a non-finite value");
        }
    });
}

inline void HybridPricer::anniversary(int i, ValueSurface& surface) const {
    const int T = contract_.maturity;
    const bool terminal = i == T;
    const auto& mask = benefit_mask(i);
    const auto& mortality = contract_.mortality;
    const double survive = mortality.survivor(i);
    const double died = mortality.survivor(i - 1) - survive;
    const double kappa = contract_.kappa;
    const double guarantee = contract_.guarantee;
    const int m = grid_.space_steps;
    const int n = i * steps_per_year_;
    const auto& vw = surface.v_range();
    const auto& xw = surface.x_range();
    const int top = mask.back();
    const bool optimal = options_.mode == WithdrawalMode::optimal;
    const int workers = worker_count(static_cast<std::size_t>(vw.size()), options_.workers);

    std::vector<double> cash(top + 1);
    for (int k = 0; k <= top; ++k) cash[k] = survive * net_cash_flow(benefit(k), guarantee, kappa);

    struct Scratch {
        std::vector<Locator> table;  // (withdrawal steps, z index) for aligned withdrawals
        std::vector<double> accounts, best, buffer;
    };
    std::vector<Scratch> scratch(workers);

    parallel_for(static_cast<std::size_t>(vw.size()), workers, [&](int worker, std::size_t idx) {
        Scratch& s = scratch[worker];
        const int iv = vw.lo + static_cast<int>(idx);
        const double v = vtree_->value(n, iv);
        s.accounts.resize(m);
        for (int k = 0; k < m; ++k) s.accounts[k] = account(k, v);
        if (!terminal) {
            s.table.resize(static_cast<std::size_t>(top + 1) * m);
            for (int w = 0; w <= top; ++w)
                for (int k = 0; k < m; ++k) s.table[static_cast<std::size_t>(w) * m + k] = locate(s.accounts[k] - benefit(w), v);
        }
        s.best.resize(m + 1);
        s.buffer.resize(m + 1);

        // Continuation after withdrawing w from (A, B): slot 0 of `best` is A = 0.
        auto continuation = [&](int ix, double a_after, double b_after) {
            if (terminal) return survive * std::max(std::max(a_after, 0.0), (1.0 - kappa) * b_after);
            const double pos = std::clamp(b_after / db_, 0.0, static_cast<double>(grid_.benefit_steps));
            const int lo = std::min(static_cast<int>(pos), grid_.benefit_steps - 1);
            const double f = pos - lo;
            const Locator loc = locate(a_after, v);
            const double lo_val = loc.apply(surface.row(iv, ix, lo).data());
            if (f == 0.0) return lo_val;
            return (1.0 - f) * lo_val + f * loc.apply(surface.row(iv, ix, lo + 1).data());
        };

        for (int ix = xw.lo; ix <= xw.hi; ++ix) {
            for (auto it = mask.rbegin(); it != mask.rend(); ++it) {
                const int b = *it;
                const double bval = benefit(b);
                std::fill(s.best.begin(), s.best.end(), -std::numeric_limits<double>::infinity());

                auto consider_generic = [&](double w) {
                    const double flow = survive * net_cash_flow(w, guarantee, kappa);
                    s.best[0] = std::max(s.best[0], continuation(ix, 0.0, bval - w) + flow);
                    for (int k = 0; k < m; ++k) {
                        const double val = continuation(ix, s.accounts[k] - w, bval - w) + flow;
                        if (val > s.best[k + 1]) s.best[k + 1] = val;
                    }
                };
                auto consider_aligned = [&](int w) {
                    const double flow = cash[w];
                    const double after = benefit(b - w);
                    if (terminal) {
                        const double floor_value = (1.0 - kappa) * after;
                        s.best[0] = std::max(s.best[0], survive * floor_value + flow);
                        const double wv = benefit(w);
                        for (int k = 0; k < m; ++k) {
                            const double val =
                                survive * std::max(std::max(s.accounts[k] - wv, 0.0), floor_value) + flow;
                            if (val > s.best[k + 1]) s.best[k + 1] = val;
                        }
                        return;
                    }
                    const double* row = surface.row(iv, ix, b - w).data();
                    const Locator* loc = s.table.data() + static_cast<std::size_t>(w) * m;
                    s.best[0] = std::max(s.best[0], row[0] + flow);
                    for (int k = 0; k < m; ++k) {
                        const double val = loc[k].apply(row) + flow;
                        if (val > s.best[k + 1]) s.best[k + 1] = val;
                    }
                };

                if (optimal) {
                    // Candidates in increasing w with strict improvement: ties go to the smallest w.
                    const double g_pos = guarantee / db_;
                    for (int w = 0; w <= b; ++w) {
                        consider_aligned(w);
                        if (!guarantee_aligned_ && guarantee < bval && g_pos > w && g_pos < w + 1)
                            consider_generic(guarantee);
                    }
                } else {
                    const double w = std::min(guarantee, bval);
                    const double pos = w / db_;
                    if (std::abs(pos - std::round(pos)) < 1e-9)
                        consider_aligned(static_cast<int>(std::round(pos)));
                    else
                        consider_generic(w);
                }

                s.buffer[0] = s.best[0] + died * (1.0 - kappa) * bval;
                for (int k = 0; k < m; ++k)
                    s.buffer[k + 1] = s.best[k + 1] + died * std::max(s.accounts[k], (1.0 - kappa) * bval);
                auto dst = surface.row(iv, ix, b);
                std::copy(s.buffer.begin(), s.buffer.end(), dst.begin());
            }
        }
    });
}

inline PricingResult HybridPricer::price() const {
    const int N = grid_.time_steps;
    const int T = contract_.maturity;
    const int m = grid_.space_steps;
    ValueSurface current, next;

    reshape(next, N);
    anniversary(T, next);
    for (int n = N - 1; n >= 0; --n) {
        const int period = n / steps_per_year_ + 1;
        const bool after_anniversary = (n + 1) % steps_per_year_ == 0;
        reshape(current, n);
        pde_step(n, next, current, benefit_mask(period), after_anniversary);
        if (n > 0 && n % steps_per_year_ == 0) anniversary(n / steps_per_year_, current);
        std::swap(current, next);
    }

    // `next` now holds level 0.
    const auto root = next.row(0, 0, grid_.benefit_steps);
    PricingResult result;
    result.premium = contract_.premium;
    result.z_offset = coupling_ * model_.v0;
    result.z_grid = z_;
    result.root_values.assign(root.begin() + 1, root.end());
    result.zero_account_value = root[0];

    const double a0 = options_.initial_account.value_or(contract_.premium);
    if (a0 == contract_.premium) {
        result.price = result.root_values[center_];
        result.delta = (result.root_values[center_ + 1] - result.root_values[center_ - 1]) / (2.0 * dz_) / a0;
    } else {
        result.price = result.value_at(a0);
        const double zq = std::log(a0 / contract_.premium) - result.z_offset;
        const double pos = (zq - z_.front()) / dz_;
        const int j = std::clamp(static_cast<int>(std::floor(pos)), 1, m - 3);
        const double f = pos - j;
        const double* u = result.root_values.data() + j - 1;
        // derivative of the cubic through u[j-1..j+2]
        const double d0 = -(3 * f * f - 6 * f + 2) / 6.0;
        const double d1 = (3 * f * f - 4 * f - 1) / 2.0;
        const double d2 = -(3 * f * f - 2 * f - 2) / 2.0;
        const double d3 = (3 * f * f - 1) / 6.0;
        const double dudz = (d0 * u[0] + d1 * u[1] + d2 * u[2] + d3 * u[3]) / dz_;
        result.delta = dudz / a0;
    }
    if (!std::isfinite(result.price) || !std::isfinite(result.delta))
        throw NonFiniteValue("non-finite price or delta");
    return result;
}

inline double PricingResult::value_at(double a) const {
    const int m = static_cast<int>(z_grid.size());
    const double dz = z_grid[1] - z_grid[0];
    const double zq = std::log(a / premium) - z_offset;
    const double pos = (zq - z_grid.front()) / dz;
    const int j = std::clamp(static_cast<int>(std::floor(pos)), 1, m - 3);
    const double f = pos - j;
    const auto s = ShiftStencil::make(f * dz, dz);
    const double* u = root_values.data() + j - 1;
    return s.w[0] * u[0] + s.w[1] * u[1] + s.w[2] * u[2] + s.w[3] * u[3];
}

inline PricingResult price_gmwb(const HhwParams& model, const ContractParams& contract,
                                const GridConfig& grid, PricingOptions options = {}) {
    return HybridPricer(model, contract, grid, options).price();
}

/// Central bump-and-reprice Delta, B_0 held at P.
inline double bump_delta(const HhwParams& model, const ContractParams& contract, const GridConfig& grid,
                         PricingOptions options = {}, double h = 0.01) {
    const double a0 = options.initial_account.value_or(contract.premium);
    options.initial_account = a0 * (1.0 + h);
    const double up = price_gmwb(model, contract, grid, options).price;
    options.initial_account = a0 * (1.0 - h);
    const double down = price_gmwb(model, contract, grid, options).price;
    return (up - down) / (2.0 * a0 * h);
}

}  // namespace gmwb::hpde
