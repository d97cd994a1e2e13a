#include "fevl/mat.hpp"

#include <algorithm>
#include <cmath>

namespace fevl {

static void check_gemm_dims(const Mat& a, const Mat& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument(
            "gemm: dimension mismatch, lhs is " + std::to_string(a.rows) + "x" +
            std::to_string(a.cols) + " but rhs is " + std::to_string(b.rows) + "x" +
            std::to_string(b.cols));
}

Mat gemm(const Mat& a, const Mat& b) {
    check_gemm_dims(a, b);
    Mat c(a.rows, b.cols);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const double* arow = a.row_ptr(static_cast<std::size_t>(i));
        double* crow = c.row_ptr(static_cast<std::size_t>(i));
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Mat gemm_serial(const Mat& a, const Mat& b) {
    check_gemm_dims(a, b);
    Mat c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

Mat transpose(const Mat& m) {
    Mat t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

std::vector<double> row_norms(const Mat& m, double eps) {
    std::vector<double> norms(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double sq = 0.0;
        const double* row = m.row_ptr(i);
        for (std::size_t j = 0; j < m.cols; ++j) sq += row[j] * row[j];
        norms[i] = std::max(std::sqrt(sq), eps);
    }
    return norms;
}

Mat l2_normalize_rows(const Mat& m, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("l2_normalize_rows: eps must be > 0");
    Mat out = m;
    const auto norms = row_norms(m, eps);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double inv = 1.0 / norms[i];
        double* row = out.row_ptr(i);
        for (std::size_t j = 0; j < m.cols; ++j) row[j] *= inv;
    }
    return out;
}

double max_abs_diff(const Mat& a, const Mat& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        d = std::max(d, std::abs(a.data[i] - b.data[i]));
    return d;
}

}  // namespace fevl
