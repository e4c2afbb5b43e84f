#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mdann {

/// Dense row-major matrix of doubles. This is the only numeric container the
/// training engine uses; all shapes are checked at the operation boundaries.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return rows_ == 0 || cols_ == 0; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() { return {data_.data(), data_.size()}; }
    std::span<const double> flat() const { return {data_.data(), data_.size()}; }

    void fill(double v);
    bool all_finite() const;

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// out = a * b^T. a is n x k, b is m x k, out is n x m.
Matrix mul_abt(const Matrix& a, const Matrix& b);

/// out = a^T * b. a is n x k, b is n x m, out is k x m.
Matrix mul_atb(const Matrix& a, const Matrix& b);

/// out = a * b. a is n x k, b is k x m, out is n x m.
Matrix mul_ab(const Matrix& a, const Matrix& b);

/// Extract the rows of `m` listed in `idx`, in order.
Matrix take_rows(const Matrix& m, std::span<const std::size_t> idx);

}  // namespace mdann
