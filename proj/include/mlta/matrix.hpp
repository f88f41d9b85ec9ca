#pragma once

#include <cblas.h>

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "mlta/errors.hpp"
#include "mlta/rng.hpp"

namespace mlta {

// Dense row-major matrix of doubles. Value semantics throughout.
class Matrix {
public:
    Matrix() = default;

    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw ShapeMismatch("negative matrix dimension");
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = static_cast<int>(rows.size());
        cols_ = rows_ > 0 ? static_cast<int>(rows.begin()->size()) : 0;
        data_.reserve(static_cast<std::size_t>(rows_) * cols_);
        for (const auto& r : rows) {
            if (static_cast<int>(r.size()) != cols_)
                throw ShapeMismatch("ragged initializer list");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

    double scalar() const {
        if (!is_scalar()) throw ShapeMismatch("matrix is not 1x1");
        return data_[0];
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const {
        return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
    }

    static Matrix zeros_like(const Matrix& m) { return Matrix(m.rows(), m.cols()); }

    // Glorot-style symmetric uniform init, range +-sqrt(6 / (fan_in + fan_out)).
    static Matrix glorot(int rows, int cols, Rng& rng) {
        Matrix m(rows, cols);
        const double bound = std::sqrt(6.0 / (rows + cols));
        for (std::size_t i = 0; i < m.data_.size(); ++i)
            m.data_[i] = rng.uniform(-bound, bound);
        return m;
    }

    static Matrix uniform(int rows, int cols, double lo, double hi, Rng& rng) {
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < m.data_.size(); ++i) m.data_[i] = rng.uniform(lo, hi);
        return m;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C = A * B via dgemm.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeMismatch("matmul: " + a.shape_str() + " * " + b.shape_str());
    Matrix c(a.rows(), b.cols());
    if (a.rows() == 0 || b.cols() == 0 || a.cols() == 0) return c;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, a.rows(), b.cols(), a.cols(), 1.0,
                a.data(), a.cols(), b.data(), b.cols(), 0.0, c.data(), c.cols());
    return c;
}

// C += A^T * B (used by backward rules).
inline void add_matmul_at_b(Matrix& c, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols())
        throw ShapeMismatch("matmul_at_b: " + a.shape_str() + "^T * " + b.shape_str() + " -> " +
                            c.shape_str());
    if (c.size() == 0 || a.rows() == 0) return;
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, a.cols(), b.cols(), a.rows(), 1.0,
                a.data(), a.cols(), b.data(), b.cols(), 1.0, c.data(), c.cols());
}

// C += A * B^T (used by backward rules).
inline void add_matmul_a_bt(Matrix& c, const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols() || c.rows() != a.rows() || c.cols() != b.rows())
        throw ShapeMismatch("matmul_a_bt: " + a.shape_str() + " * " + b.shape_str() + "^T -> " +
                            c.shape_str());
    if (c.size() == 0 || a.cols() == 0) return;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, a.rows(), b.rows(), a.cols(), 1.0,
                a.data(), a.cols(), b.data(), b.cols(), 1.0, c.data(), c.cols());
}

inline Matrix transposed(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
    return t;
}

}  // namespace mlta
