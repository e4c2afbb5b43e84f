#include "mdann/matrix.hpp"

#include <cmath>
#include <utility>

#include "mdann/errors.hpp"

namespace mdann {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data size does not match rows*cols");
    }
}

void Matrix::fill(double v) {
    for (double& x : data_) x = v;
}

bool Matrix::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Matrix mul_abt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("mul_abt: inner dimensions differ");
    }
    const std::size_t n = a.rows(), m = b.rows(), k = a.cols();
    Matrix out(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.row(i).data();
        double* oi = out.row(i).data();
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.row(j).data();
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
            oi[j] = acc;
        }
    }
    return out;
}

Matrix mul_atb(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("mul_atb: row counts differ");
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix out(k, m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.row(i).data();
        const double* bi = b.row(i).data();
        for (std::size_t r = 0; r < k; ++r) {
            const double s = ai[r];
            if (s == 0.0) continue;
            double* orow = out.row(r).data();
            for (std::size_t c = 0; c < m; ++c) orow[c] += s * bi[c];
        }
    }
    return out;
}

Matrix mul_ab(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("mul_ab: inner dimensions differ");
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix out(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.row(i).data();
        double* oi = out.row(i).data();
        for (std::size_t t = 0; t < k; ++t) {
            const double s = ai[t];
            if (s == 0.0) continue;
            const double* bt = b.row(t).data();
            for (std::size_t c = 0; c < m; ++c) oi[c] += s * bt[c];
        }
    }
    return out;
}

Matrix take_rows(const Matrix& m, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= m.rows()) throw ShapeError("take_rows: index out of range");
        auto src = m.row(idx[i]);
        auto dst = out.row(i);
        for (std::size_t c = 0; c < m.cols(); ++c) dst[c] = src[c];
    }
    return out;
}

}  // namespace mdann
