#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace mnet {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols)
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * static_cast<size_t>(cols), 0.0) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    double* row(int r) { return data_.data() + static_cast<size_t>(r) * static_cast<size_t>(cols_); }
    const double* row(int r) const {
        return data_.data() + static_cast<size_t>(r) * static_cast<size_t>(cols_);
    }
    double& at(int r, int c) { return row(r)[c]; }
    double at(int r, int c) const { return row(r)[c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v);

    bool operator==(const Matrix&) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

/// c += a * b with shapes (m x k)(k x n)(m x n).
void gemm_accumulate(Matrix& c, const Matrix& a, const Matrix& b);

/// c += a^T * b where a is (batch x m) and b is (batch x n); the sum of the
/// per-row outer products.
void accumulate_outer(Matrix& c, const Matrix& a, const Matrix& b);

Matrix transposed(const Matrix& a);

}  // namespace mnet
