#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace fevl {

// Dense row-major matrix of doubles. Small and boring on purpose.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}
    Mat(std::initializer_list<std::initializer_list<double>> init) {
        rows = init.size();
        cols = rows ? init.begin()->size() : 0;
        data.reserve(rows * cols);
        for (const auto& row : init) {
            if (row.size() != cols)
                throw std::invalid_argument("Mat: ragged initializer");
            data.insert(data.end(), row.begin(), row.end());
        }
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row_ptr(std::size_t i) { return data.data() + i * cols; }
    const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

// OpenMP-parallel matrix product (rows are independent, so the result is
// bitwise deterministic regardless of thread count).
Mat gemm(const Mat& a, const Mat& b);

// Serial triple-loop reference, kept for testing and benchmarking.
Mat gemm_serial(const Mat& a, const Mat& b);

Mat transpose(const Mat& m);

// Row-wise L2 norm with the zero-row guard applied: max(||row||, eps).
std::vector<double> row_norms(const Mat& m, double eps = 1e-12);

// Divides each row by max(||row||2, eps). eps guards the zero row.
Mat l2_normalize_rows(const Mat& m, double eps = 1e-12);

double max_abs_diff(const Mat& a, const Mat& b);

}  // namespace fevl
