#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "lsrigru/error.hpp"

namespace lsrigru {

using Vec = std::vector<double>;

/// Dense row-major matrix. Also used as the gradient buffer of a parameter of the same shape.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// y += A·x
inline void gemv_acc(const Matrix& a, std::span<const double> x, std::span<double> y) {
    if (x.size() != a.cols || y.size() != a.rows) throw ConfigError("gemv shape mismatch");
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* ar = a.data.data() + r * a.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) acc += ar[c] * x[c];
        y[r] += acc;
    }
}

/// x_grad += Aᵀ·y_grad
inline void gemv_t_acc(const Matrix& a, std::span<const double> y_grad, std::span<double> x_grad) {
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double g = y_grad[r];
        if (g == 0.0) continue;
        const double* ar = a.data.data() + r * a.cols;
        for (std::size_t c = 0; c < a.cols; ++c) x_grad[c] += ar[c] * g;
    }
}

/// A_grad += y_grad ⊗ x
inline void outer_acc(Matrix& a_grad, std::span<const double> y_grad, std::span<const double> x) {
    for (std::size_t r = 0; r < a_grad.rows; ++r) {
        const double g = y_grad[r];
        if (g == 0.0) continue;
        double* ar = a_grad.data.data() + r * a_grad.cols;
        for (std::size_t c = 0; c < a_grad.cols; ++c) ar[c] += g * x[c];
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

/// Fills with uniform(-bound, bound) draws.
inline void fill_uniform(std::span<double> v, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : v) x = dist(rng);
}

}  // namespace lsrigru
