#pragma once

// Faure low-discrepancy points and their affine image in a parameter box.

#include <cstdint>
#include <vector>

#include "gmwb/errors.hpp"
#include "gmwb/model.hpp"

namespace gmwb::qmc {

inline bool is_prime(int n) {
    if (n < 2) return false;
    for (int d = 2; d * d <= n; ++d)
        if (n % d == 0) return false;
    return true;
}

/// Smallest prime >= max(dimension, 2).
inline int faure_base(int dimension) {
    int b = dimension < 2 ? 2 : dimension;
    while (!is_prime(b)) ++b;
    return b;
}

class FaureGenerator {
public:
    explicit FaureGenerator(int dimension) : dim_(dimension), base_(faure_base(dimension)) {
        if (dimension < 1) throw InvalidParameter("Faure dimension must be positive");
    }

    int dimension() const { return dim_; }
    int base() const { return base_; }

    /// Point with index i >= 1.
    std::vector<double> point(std::uint64_t i) const {
        if (i < 1) throw InvalidParameter("Faure indices start at 1");
        std::vector<int> digits;
        for (std::uint64_t n = i; n > 0; n /= base_) digits.push_back(static_cast<int>(n % base_));
        const int len = static_cast<int>(digits.size());

        // Binomial coefficients mod b for the Pascal-matrix powers.
        std::vector<std::vector<int>> binom(len, std::vector<int>(len, 0));
        for (int m = 0; m < len; ++m) {
            binom[m][0] = 1;
            for (int j = 1; j <= m; ++j) binom[m][j] = (binom[m - 1][j - 1] + (j < m ? binom[m - 1][j] : 0)) % base_;
        }

        std::vector<double> out(dim_);
        std::vector<int> c(len);
        for (int d = 0; d < dim_; ++d) {
            // powers of d mod b
            std::vector<int> pw(len, 1);
            for (int k = 1; k < len; ++k) pw[k] = pw[k - 1] * (d % base_) % base_;
            for (int j = 0; j < len; ++j) {
                long long acc = 0;
                for (int m = j; m < len; ++m)
                    acc += static_cast<long long>(binom[m][j]) * pw[m - j] * digits[m];
                c[j] = static_cast<int>(acc % base_);
            }
            double x = 0.0, scale = 1.0 / base_;
            for (int j = 0; j < len; ++j, scale /= base_) x += c[j] * scale;
            out[d] = x;
        }
        return out;
    }

private:
    int dim_;
    int base_;
};

inline std::vector<double> faure_point(std::uint64_t i, int dimension) {
    return FaureGenerator(dimension).point(i);
}

/// Points 1..n of the 11-dimensional Faure sequence mapped into the box.
inline std::vector<ParameterPoint> sample_box(const ParameterBox& box, std::size_t n) {
    const FaureGenerator gen(static_cast<int>(kNumPredictors));
    std::vector<ParameterPoint> out;
    out.reserve(n);
    for (std::size_t i = 1; i <= n; ++i) out.push_back(box.map(gen.point(i)));
    return out;
}

}  // namespace gmwb::qmc
