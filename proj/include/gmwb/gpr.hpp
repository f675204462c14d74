#pragma once

// Gaussian process regression with an ARD squared-exponential kernel and a
// linear mean fitted by least squares. Hyperparameters maximize the log
// marginal likelihood of the mean residuals.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "gmwb/errors.hpp"

namespace gmwb::gpr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// sigma_f, length scales in unit-cube coordinates, sigma_n.
struct Hyperparameters {
    double signal = 1.0;
    VectorXd lengths;
    double noise = 0.0;

    /// Packed as log(sigma_f), log(l_1..l_D), log(sigma_n).
    VectorXd to_log() const {
        VectorXd t(lengths.size() + 2);
        t(0) = std::log(signal);
        t.segment(1, lengths.size()) = lengths.array().log();
        t(t.size() - 1) = std::log(noise);
        return t;
    }
    static Hyperparameters from_log(const VectorXd& t) {
        Hyperparameters h;
        h.signal = std::exp(t(0));
        h.lengths = t.segment(1, t.size() - 2).array().exp();
        h.noise = std::exp(t(t.size() - 1));
        return h;
    }
};

/// k(a, b) = sigma_f^2 exp(-1/2 sum_k (a_k - b_k)^2 / l_k^2).
inline double kernel(const double* a, const double* b, const Hyperparameters& h) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < h.lengths.size(); ++k) {
        const double d = (a[k] - b[k]) / h.lengths(k);
        s += d * d;
    }
    return h.signal * h.signal * std::exp(-0.5 * s);
}

inline double kernel(const VectorXd& a, const VectorXd& b, const Hyperparameters& h) {
    return kernel(a.data(), b.data(), h);
}

/// Rows of `x` are points. Returns K(X, X) without the noise term.
inline MatrixXd gram(const MatrixXd& x, const Hyperparameters& h) {
    const Eigen::Index n = x.rows();
    const MatrixXd xt = x.transpose();  // column access is contiguous
    MatrixXd k(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        k(j, j) = h.signal * h.signal;
        for (Eigen::Index i = j + 1; i < n; ++i) k(i, j) = k(j, i) = kernel(xt.col(i).data(), xt.col(j).data(), h);
    }
    return k;
}

struct Factorization {
    Eigen::LLT<MatrixXd> llt;
    double jitter = 0.0;
};

/// Cholesky of `k`, adding jitter 1e-10 * mean(diag) doubled up to
/// 1e-4 * mean(diag) when the plain factorization fails.
inline Factorization factorize(MatrixXd k, bool allow_jitter = true) {
    Factorization f;
    f.llt.compute(k);
    if (f.llt.info() == Eigen::Success) return f;
    if (allow_jitter) {
        const double scale = k.diagonal().mean();
        for (double j = 1e-10 * scale; j <= 1e-4 * scale * (1.0 + 1e-12); j *= 2.0) {
            k.diagonal().array() += j - f.jitter;
            f.jitter = j;
            f.llt.compute(k);
            if (f.llt.info() == Eigen::Success) return f;
        }
    }
    throw SingularGram("Gram matrix is not positive definite");
}

/// Log marginal likelihood of residuals `r` at log-hyperparameters `theta`;
/// optionally its gradient with respect to theta.
inline double log_marginal_likelihood(const MatrixXd& x, const VectorXd& r, const VectorXd& theta,
                                      VectorXd* gradient = nullptr, bool allow_jitter = true) {
    const auto h = Hyperparameters::from_log(theta);
    const Eigen::Index n = x.rows(), d = x.cols();
    const MatrixXd kf = gram(x, h);
    MatrixXd k = kf;
    k.diagonal().array() += h.noise * h.noise;
    const auto f = factorize(k, allow_jitter);
    const VectorXd alpha = f.llt.solve(r);
    const MatrixXd& l = f.llt.matrixLLT();
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    const double value = -0.5 * r.dot(alpha) - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
    if (gradient) {
        // dL/dtheta = 1/2 tr((alpha alpha^T - K^{-1}) dK/dtheta)
        MatrixXd w = f.llt.solve(MatrixXd::Identity(n, n));
        w = alpha * alpha.transpose() - w;
        gradient->resize(d + 2);
        (*gradient)(0) = (w.array() * kf.array()).sum();  // dK/dlog sf = 2 Kf
        (*gradient)(d + 1) = h.noise * h.noise * w.trace();
        const MatrixXd xt = x.transpose();
        VectorXd acc = VectorXd::Zero(d);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = j + 1; i < n; ++i) {
                const double c = w(i, j) * kf(i, j);  // counted twice by symmetry, times 1/2
                for (Eigen::Index q = 0; q < d; ++q) {
                    const double diff = xt(q, i) - xt(q, j);
                    acc(q) += c * diff * diff;
                }
            }
        for (Eigen::Index q = 0; q < d; ++q) (*gradient)(q + 1) = acc(q) / (h.lengths(q) * h.lengths(q));
    }
    return value;
}

// ---------------------------------------------------------------------------
// Bound-constrained local optimizers (minimization).

struct Bounds {
    VectorXd lo, hi;
    VectorXd clamp(const VectorXd& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
};

using Objective = std::function<double(const VectorXd&, VectorXd*)>;

/// Projected BFGS with Armijo backtracking.
inline VectorXd minimize_bfgs(const Objective& f, VectorXd x, const Bounds& b, int max_iter = 200) {
    x = b.clamp(x);
    VectorXd g;
    double fx = f(x, &g);
    if (!std::isfinite(fx)) return x;
    const Eigen::Index n = x.size();
    MatrixXd h = MatrixXd::Identity(n, n);
    for (int it = 0; it < max_iter; ++it) {
        // Freeze coordinates pushed against their bound.
        VectorXd d = -(h * g);
        for (Eigen::Index i = 0; i < n; ++i)
            if ((x(i) <= b.lo(i) && d(i) < 0) || (x(i) >= b.hi(i) && d(i) > 0)) d(i) = 0.0;
        if (g.dot(d) >= 0.0) {
            h.setIdentity();
            d = -g;
            for (Eigen::Index i = 0; i < n; ++i)
                if ((x(i) <= b.lo(i) && d(i) < 0) || (x(i) >= b.hi(i) && d(i) > 0)) d(i) = 0.0;
        }
        if (d.lpNorm<Eigen::Infinity>() < 1e-10) break;
        const double cap = 2.0 / std::max(1.0, d.lpNorm<Eigen::Infinity>());  // at most 2 log-units per step
        double t = std::min(1.0, cap);
        VectorXd xn, gn;
        double fn = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
            xn = b.clamp(x + t * d);
            fn = f(xn, &gn);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * g.dot(xn - x)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (h.isIdentity()) break;
            h.setIdentity();
            continue;
        }
        const VectorXd s = xn - x, y = gn - g;
        const double sy = s.dot(y);
        const double improvement = fx - fn;
        x = xn;
        g = gn;
        fx = fn;
        if (sy > 1e-12) {
            const double rho = 1.0 / sy;
            const MatrixXd v = MatrixXd::Identity(n, n) - rho * s * y.transpose();
            h = v * h * v.transpose() + rho * s * s.transpose();
        }
        if (s.lpNorm<Eigen::Infinity>() < 1e-8 || improvement < 1e-10 * (1.0 + std::abs(fx))) break;
    }
    return x;
}

/// Nelder-Mead simplex on the projected objective.
inline VectorXd minimize_simplex(const Objective& f, VectorXd x0, const Bounds& b, int max_evals = 2000) {
    const Eigen::Index n = x0.size();
    auto eval = [&](const VectorXd& x) {
        const double v = f(b.clamp(x), nullptr);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };
    std::vector<VectorXd> pts(n + 1, b.clamp(x0));
    for (Eigen::Index i = 0; i < n; ++i) pts[i + 1](i) += 0.5;
    std::vector<double> vals(n + 1);
    for (Eigen::Index i = 0; i <= n; ++i) vals[i] = eval(pts[i]);
    int evals = static_cast<int>(n + 1);
    std::vector<int> order(n + 1);
    while (evals < max_evals) {
        for (int i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int c) { return vals[a] < vals[c]; });
        const int best = order[0], worst = order[n], second = order[n - 1];
        if (std::abs(vals[worst] - vals[best]) < 1e-10 * (1.0 + std::abs(vals[best]))) break;
        VectorXd centroid = VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) centroid += pts[order[i]];
        centroid /= static_cast<double>(n);
        const VectorXd xr = centroid + (centroid - pts[worst]);
        const double fr = eval(xr);
        ++evals;
        if (fr < vals[best]) {
            const VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
            const double fe = eval(xe);
            ++evals;
            if (fe < fr) pts[worst] = xe, vals[worst] = fe;
            else pts[worst] = xr, vals[worst] = fr;
        } else if (fr < vals[second]) {
            pts[worst] = xr, vals[worst] = fr;
        } else {
            const VectorXd xc = centroid + 0.5 * (pts[worst] - centroid);
            const double fc = eval(xc);
            ++evals;
            if (fc < vals[worst]) {
                pts[worst] = xc, vals[worst] = fc;
            } else {
                for (int i = 1; i <= n; ++i) {
                    pts[order[i]] = pts[best] + 0.5 * (pts[order[i]] - pts[best]);
                    vals[order[i]] = eval(pts[order[i]]);
                    ++evals;
                }
            }
        }
    }
    const auto it = std::min_element(vals.begin(), vals.end());
    return b.clamp(pts[static_cast<std::size_t>(it - vals.begin())]);
}

/// Largest relative difference between the analytic gradient and central
/// differences with step h.
inline double gradient_check(const Objective& f, const VectorXd& x, double h = 1e-5) {
    VectorXd g;
    f(x, &g);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        VectorXd up = x, down = x;
        up(i) += h;
        down(i) -= h;
        const double fd = (f(up, nullptr) - f(down, nullptr)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - g(i)) / std::max(1e-8, std::max(std::abs(fd), std::abs(g(i)))));
    }
    return worst;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
    int restarts = 5;                       // local optimizations, the first from the default start
    unsigned seed = 7;                      // restart perturbations
    bool optimize = true;                   // false: keep `initial` (or the default start) as is
    std::optional<Hyperparameters> initial;
    bool allow_jitter = true;
    bool fix_zero_noise = false;            // sigma_n = 0 exactly (interpolation mode)
};

class GprModel {
public:
    GprModel() = default;

    /// Trains on raw inputs (rows of x) normalized by the box [lo, hi].
    static GprModel train(const MatrixXd& x, const VectorXd& y, const VectorXd& lo, const VectorXd& hi,
                          const TrainOptions& options = {});

    double predict(const VectorXd& point) const;
    VectorXd predict_rows(const MatrixXd& points) const;

    Eigen::Index dimension() const { return lo_.size(); }
    Eigen::Index size() const { return x_.rows(); }
    const Hyperparameters& hyperparameters() const { return hyper_; }
    const VectorXd& beta() const { return beta_; }
    const VectorXd& dual_weights() const { return dual_; }
    const VectorXd& lower() const { return lo_; }
    const VectorXd& upper() const { return hi_; }
    const MatrixXd& normalized_inputs() const { return x_; }
    double jitter() const { return jitter_; }
    double log_likelihood() const { return log_likelihood_; }
    /// Log likelihood at each optimization start point.
    const std::vector<double>& start_log_likelihoods() const { return start_ll_; }
    bool degenerate() const { return degenerate_; }

    /// True when any coordinate lies outside the box.
    bool extrapolates(const VectorXd& point) const {
        for (Eigen::Index k = 0; k < lo_.size(); ++k)
            if (point(k) < lo_(k) || point(k) > hi_(k)) return true;
        return false;
    }

    VectorXd normalize(const VectorXd& point) const {
        VectorXd u(point.size());
        for (Eigen::Index k = 0; k < point.size(); ++k) {
            const double w = hi_(k) - lo_(k);
            u(k) = w > 0.0 ? (point(k) - lo_(k)) / w : 0.0;
        }
        return u;
    }

    /// Rebuilds a model from stored parts (used by deserialization).
    static GprModel assemble(VectorXd lo, VectorXd hi, VectorXd beta, Hyperparameters hyper, MatrixXd x,
                             VectorXd dual, double jitter, bool degenerate) {
        GprModel m;
        m.lo_ = std::move(lo);
        m.hi_ = std::move(hi);
        m.beta_ = std::move(beta);
        m.hyper_ = std::move(hyper);
        m.x_ = std::move(x);
        m.dual_ = std::move(dual);
        m.jitter_ = jitter;
        m.degenerate_ = degenerate;
        return m;
    }

private:
    VectorXd lo_, hi_;
    VectorXd beta_;
    Hyperparameters hyper_;
    MatrixXd x_;
    VectorXd dual_;
    double jitter_ = 0.0;
    double log_likelihood_ = 0.0;
    std::vector<double> start_ll_;
    bool degenerate_ = false;
};

inline GprModel GprModel::train(const MatrixXd& raw, const VectorXd& y, const VectorXd& lo, const VectorXd& hi,
                                const TrainOptions& options) {
    const Eigen::Index n = raw.rows(), d = raw.cols();
    if (y.size() != n) throw InvalidParameter("training inputs and outputs differ in length");
    if (lo.size() != d || hi.size() != d) throw InvalidParameter("box dimension does not match the inputs");
    if (n < 2) throw InvalidParameter("need at least two training points");
    if (!raw.allFinite() || !y.allFinite()) throw InvalidParameter("training data must be finite");

    GprModel m;
    m.lo_ = lo;
    m.hi_ = hi;
    m.x_.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) m.x_.row(i) = m.normalize(raw.row(i).transpose()).transpose();

    MatrixXd design(n, d + 1);
    design.col(0).setOnes();
    design.rightCols(d) = m.x_;
    m.beta_ = design.colPivHouseholderQr().solve(y);
    const VectorXd resid = y - design * m.beta_;

    const double spread = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
    const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
    if (spread <= 1e-12 * scale) {
        m.degenerate_ = true;
        m.hyper_ = Hyperparameters{1.0, VectorXd::Ones(d), 0.0};
        m.dual_ = VectorXd::Zero(n);
        return m;
    }

    Hyperparameters start = options.initial.value_or(Hyperparameters{spread, VectorXd::Ones(d), 0.01 * spread});
    if (options.fix_zero_noise) start.noise = 0.0;

    if (options.optimize) {
        // Noise stays in the log-parametrization with a small floor; with
        // fix_zero_noise it is dropped from the search and set to 0 afterwards.
        const double noise_floor = 1e-6 * spread;
        Bounds bounds;
        bounds.lo.resize(d + 2);
        bounds.hi.resize(d + 2);
        bounds.lo(0) = std::log(1e-3 * spread);
        bounds.hi(0) = std::log(1e3 * spread);
        bounds.lo.segment(1, d).setConstant(std::log(1e-2));
        bounds.hi.segment(1, d).setConstant(std::log(1e2));
        bounds.lo(d + 1) = std::log(noise_floor);
        bounds.hi(d + 1) = std::log(spread);
        if (options.fix_zero_noise) bounds.hi(d + 1) = bounds.lo(d + 1);

        const Objective objective = [&](const VectorXd& theta, VectorXd* grad) {
            try {
                VectorXd g;
                const double v = log_marginal_likelihood(m.x_, resid, theta, grad ? &g : nullptr,
                                                         options.allow_jitter);
                if (grad) *grad = -g;
                return -v;
            } catch (const SingularGram&) {
                if (grad) *grad = VectorXd::Zero(theta.size());
                return std::numeric_limits<double>::infinity();
            }
        };

        Hyperparameters first = start;
        if (first.noise < noise_floor) first.noise = noise_floor;
        const VectorXd theta0 = bounds.clamp(first.to_log());
        std::mt19937_64 rng(options.seed);
        std::uniform_real_distribution<double> perturb(std::log(0.1), std::log(10.0));

        const bool gradients_ok = gradient_check(objective, theta0) < 1e-4;
        VectorXd best = theta0;
        double best_value = std::numeric_limits<double>::infinity();
        for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
            VectorXd t0 = theta0;
            if (restart > 0)
                for (Eigen::Index i = 0; i < t0.size(); ++i) t0(i) += perturb(rng);
            t0 = bounds.clamp(t0);
            const double v0 = objective(t0, nullptr);
            m.start_ll_.push_back(-v0);
            if (v0 < best_value) {
                best_value = v0;
                best = t0;
            }
            const VectorXd t = gradients_ok ? minimize_bfgs(objective, t0, bounds) : minimize_simplex(objective, t0, bounds);
            const double v = objective(t, nullptr);
            if (v < best_value) {
                best_value = v;
                best = t;
            }
        }
        m.hyper_ = Hyperparameters::from_log(best);
        if (options.fix_zero_noise) m.hyper_.noise = 0.0;
    } else {
        m.hyper_ = start;
    }

    MatrixXd k = gram(m.x_, m.hyper_);
    k.diagonal().array() += m.hyper_.noise * m.hyper_.noise;
    const auto f = factorize(k, options.allow_jitter);
    m.jitter_ = f.jitter;
    m.dual_ = f.llt.solve(resid);
    const MatrixXd& l = f.llt.matrixLLT();
    m.log_likelihood_ = -0.5 * resid.dot(m.dual_) - l.diagonal().array().log().sum() -
                        0.5 * n * std::log(2.0 * std::numbers::pi);
    return m;
}

inline double GprModel::predict(const VectorXd& point) const {
    if (point.size() != dimension()) throw InvalidParameter("prediction point has the wrong dimension");
    const VectorXd u = normalize(point);
    double mean = beta_(0) + beta_.tail(beta_.size() - 1).dot(u);
    if (degenerate_) return mean;
    const Eigen::Index n = x_.rows(), d = x_.cols();
    const double s2 = hyper_.signal * hyper_.signal;
    VectorXd inv_l2 = hyper_.lengths.array().square().inverse();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) {
            const double diff = u(k) - x_(i, k);
            s += diff * diff * inv_l2(k);
        }
        acc += dual_(i) * std::exp(-0.5 * s);
    }
    return mean + s2 * acc;
}

inline VectorXd GprModel::predict_rows(const MatrixXd& points) const {
    VectorXd out(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) out(i) = predict(VectorXd(points.row(i).transpose()));
    return out;
}

// ---------------------------------------------------------------------------

struct Metrics {
    double rmse = 0.0;
    double rmsre = 0.0;
    double max_ae = 0.0;
    double max_re = 0.0;
};

inline Metrics evaluate(const std::vector<double>& predicted, const std::vector<double>& truth) {
    if (predicted.size() != truth.size() || truth.empty())
        throw InvalidParameter("evaluate needs equal, non-empty prediction and truth vectors");
    Metrics m;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 0.0) throw ZeroTruth("relative error undefined for a zero truth value");
        const double e = std::abs(predicted[i] - truth[i]);
        const double r = e / std::abs(truth[i]);
        m.rmse += e * e;
        m.rmsre += r * r;
        m.max_ae = std::max(m.max_ae, e);
        m.max_re = std::max(m.max_re, r);
    }
    m.rmse = std::sqrt(m.rmse / static_cast<double>(truth.size()));
    m.rmsre = std::sqrt(m.rmsre / static_cast<double>(truth.size()));
    return m;
}

}  // namespace gmwb::gpr
