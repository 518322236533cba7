#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "enkd/errors.hpp"

namespace enkd {

enum class TaskKind { classification, regression };

// Dense row-major matrix of doubles. Everything in the library runs on
// 64-bit floats; the models are tiny and the gradient checks need the
// precision.
class Matrix {
  public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values)) {
        if (values_.size() != rows_ * cols_) {
            throw ShapeError("Matrix: value count does not match rows*cols");
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix row_vector(std::vector<double> values) {
        const std::size_t n = values.size();
        return Matrix(1, n, std::move(values));
    }

    static Matrix column_vector(std::vector<double> values) {
        const std::size_t n = values.size();
        return Matrix(n, 1, std::move(values));
    }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }

    std::span<double> data() { return values_; }
    std::span<const double> data() const { return values_; }

    std::span<double> row(std::size_t r) {
        return std::span<double>(values_.data() + r * cols_, cols_);
    }
    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(values_.data() + r * cols_, cols_);
    }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    void fill(double v) {
        for (double& x : values_) x = v;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

// y = x * W^T + b for a batch of row vectors. x is (batch, in), weight is
// (out, in), bias is (1, out).
Matrix affine(const Matrix& x, const Matrix& weight, const Matrix& bias);

bool all_finite(const Matrix& m);

}  // namespace enkd
