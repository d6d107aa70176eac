#include "sgds/matrix.hpp"

#include "sgds/errors.hpp"
#include "sgds/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace sgds {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "Matrix: data length does not match rows*cols");
}

Matrix Matrix::row_vector(std::span<const double> v) {
    return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Matrix::squared_norm() const noexcept { return kernels::dot(data_, data_); }

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) kernels::axpy(a(i, k), b.row(k), dst);
    }
    return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), "matmul_bt: column counts differ");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = kernels::dot(a.row(i), b.row(j));
    return out;
}

Vector vec_mat(std::span<const double> x, const Matrix& w) {
    require(x.size() == w.rows(), "vec_mat: |x| != W.rows");
    Vector y(w.cols(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] != 0.0) kernels::axpy(x[i], w.row(i), y);
    }
    return y;
}

double l2_norm(std::span<const double> v) noexcept { return std::sqrt(kernels::dot(v, v)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "cosine_similarity: length mismatch");
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    require(na > 0.0 && nb > 0.0, "cosine_similarity: zero-norm vector");
    return kernels::dot(a, b) / (na * nb);
}

}  // namespace sgds
