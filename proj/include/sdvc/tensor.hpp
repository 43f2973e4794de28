#pragma once

#include <cassert>
#include <cmath>
#include <span>
#include <vector>

#include "sdvc/common.hpp"

namespace sdvc {

using Vec = std::vector<double>;

// Dense row-major matrix. All model math runs in double so finite-difference
// gradient checks are not limited by float noise.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> d;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), d(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return d[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return d[static_cast<std::size_t>(r) * cols + c]; }

    std::span<double> row(int r) { return {d.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const { return {d.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }

    void zero() { std::fill(d.begin(), d.end(), 0.0); }

    std::size_t size() const { return d.size(); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline Mat gaussian_mat(int rows, int cols, double stddev, Rng& rng) {
    Mat m(rows, cols);
    for (auto& v : m.d) v = stddev * rng.normal();
    return m;
}

// out = a * b, [m x k] * [k x n]
inline Mat matmul(const Mat& a, const Mat& b) {
    assert(a.cols == b.rows);
    Mat out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
        }
    }
    return out;
}

// accumulate a^T * b into out, [k x m]^T * [k x n] -> [m x n]
inline void add_at_b(Mat& out, const Mat& a, const Mat& b) {
    assert(a.rows == b.rows && out.rows == a.cols && out.cols == b.cols);
    for (int k = 0; k < a.rows; ++k)
        for (int i = 0; i < a.cols; ++i) {
            const double aki = a.at(k, i);
            if (aki == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out.at(i, j) += aki * b.at(k, j);
        }
}

// out = a * b^T, [m x k] * [n x k]^T -> [m x n]
inline Mat matmul_bt(const Mat& a, const Mat& b) {
    assert(a.cols == b.cols);
    Mat out(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.rows; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(j, k);
            out.at(i, j) = acc;
        }
    return out;
}

inline Vec softmax(std::span<const double> z) {
    Vec out(z.size());
    double m = kNegInf;
    for (double v : z) m = std::max(m, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - m);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

inline Vec log_softmax(std::span<const double> z) {
    Vec out(z.size());
    double m = kNegInf;
    for (double v : z) m = std::max(m, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
    return out;
}

inline double leaky_relu(double x, double slope = 0.01) {
    return x >= 0.0 ? x : slope * x;
}

inline double leaky_relu_grad(double x, double slope = 0.01) {
    return x >= 0.0 ? 1.0 : slope;
}

}  // namespace sdvc
