#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnnprop {

using Vec = std::vector<double>;

/// Dense row-major matrix. Kept deliberately small: the nets and layouts in
/// this library are tiny, so we trade BLAS for zero dependencies.
struct Mat {
    int rows = 0;
    int cols = 0;
    Vec data;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    Vec row(int r) const {
        return Vec(data.begin() + static_cast<size_t>(r) * cols,
                   data.begin() + static_cast<size_t>(r + 1) * cols);
    }

    bool operator==(const Mat& o) const = default;
};

inline Vec matvec(const Mat& a, const Vec& x) {
    Vec y(a.rows, 0.0);
    for (int r = 0; r < a.rows; ++r) {
        double acc = 0.0;
        const double* row = a.data.data() + static_cast<size_t>(r) * a.cols;
        for (int c = 0; c < a.cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat out(a.rows, b.cols, 0.0);
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

inline double dot(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline int argmax_lowest(const Vec& v, int lo, int hi) {
    int best = lo;
    for (int i = lo + 1; i < hi; ++i)
        if (v[i] > v[best]) best = i;  // ties keep the lowest index
    return best - lo;
}

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad input data or bad arguments (CLI exit code 2).
struct ValidationError : Error {
    using Error::Error;
};

/// Malformed files.
struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

/// Internal numerical failure (LP pivot budget and the like).
struct NumericError : Error {
    using Error::Error;
};

// Sentinel used when a max-aggregation runs over an empty neighborhood.
inline constexpr double kEmptyMaxSentinel = -1e9;

}  // namespace gnnprop
