#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fevl/gradcheck.hpp"
#include "fevl/mat.hpp"
#include "fevl/prng.hpp"

using namespace fevl;

namespace {

Mat random_mat(std::size_t r, std::size_t c, Prng& rng, double lo = -1.0, double hi = 1.0) {
    Mat m(r, c);
    for (double& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

// Independent naive triple-loop product, the oracle for gemm.
Mat naive_product(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    return c;
}

}  // namespace

TEST_CASE("gemm identity") {
    Prng rng(1);
    const Mat m = random_mat(3, 4, rng);
    CHECK(max_abs_diff(gemm(Mat::identity(3), m), m) == 0.0);
}

TEST_CASE("gemm hand example") {
    const Mat a{{1, 2}, {3, 4}};
    const Mat b{{0}, {1}};
    const Mat c = gemm(a, b);
    CHECK(c.rows == 2);
    CHECK(c.cols == 1);
    CHECK(c(0, 0) == 2.0);
    CHECK(c(1, 0) == 4.0);
}

TEST_CASE("gemm vs naive oracle and serial reference") {
    Prng rng(7);
    const Mat a = random_mat(7, 5, rng);
    const Mat b = random_mat(5, 3, rng);
    CHECK(max_abs_diff(gemm(a, b), naive_product(a, b)) < 1e-12);
    CHECK(max_abs_diff(gemm_serial(a, b), naive_product(a, b)) < 1e-12);
}

TEST_CASE("gemm dimension mismatch rejected") {
    CHECK_THROWS_AS(gemm(Mat(2, 3), Mat(2, 3)), std::invalid_argument);
}

TEST_CASE("gemm associativity on random matrices") {
    Prng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const Mat a = random_mat(4, 5, rng);
        const Mat b = random_mat(5, 3, rng);
        const Mat c = random_mat(3, 6, rng);
        CHECK(max_abs_diff(gemm(gemm(a, b), c), gemm(a, gemm(b, c))) < 1e-9);
    }
}

TEST_CASE("l2_normalize_rows basics") {
    const Mat m{{3, 4}};
    const Mat n = l2_normalize_rows(m);
    CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-12));

    const Mat unit{{1, 0, 0}};
    CHECK(max_abs_diff(l2_normalize_rows(unit), unit) < 1e-15);

    const Mat zero(1, 3);
    CHECK(max_abs_diff(l2_normalize_rows(zero), zero) == 0.0);
}

TEST_CASE("l2_normalize_rows is idempotent") {
    Prng rng(3);
    const Mat m = random_mat(6, 9, rng, -5.0, 5.0);
    const Mat once = l2_normalize_rows(m);
    CHECK(max_abs_diff(once, l2_normalize_rows(once)) < 1e-12);
}

TEST_CASE("finite_diff_grad quadratic and linear") {
    const Mat x{{1, 2}};
    auto sqnorm = [](const Mat& m) {
        double s = 0.0;
        for (double v : m.data) s += v * v;
        return s;
    };
    const Mat g = finite_diff_grad(sqnorm, x);
    CHECK(g(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(g(0, 1) == doctest::Approx(4.0).epsilon(1e-6));

    auto sum = [](const Mat& m) {
        double s = 0.0;
        for (double v : m.data) s += v;
        return s;
    };
    const Mat g2 = finite_diff_grad(sum, Mat(2, 3, 0.5));
    for (double v : g2.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("finite_diff_grad rejects non-finite evaluations") {
    auto bad = [](const Mat&) { return std::nan(""); };
    CHECK_THROWS_AS(finite_diff_grad(bad, Mat(1, 1)), std::runtime_error);
}

TEST_CASE("prng golden vector for seed 42") {
    const std::uint64_t golden[8] = {
        1546998764402558742ull,  6990951692964543102ull, 12544586762248559009ull,
        17057574109182124193ull, 18295552978065317476ull, 14199186830065750584ull,
        13267978908934200754ull, 15679888225317814407ull,
    };
    Prng rng(42);
    for (std::uint64_t g : golden) CHECK(rng.next_u64() == g);
}

TEST_CASE("prng determinism and split independence") {
    Prng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Prng base(9);
    Prng s0 = base.split(0);
    Prng s1 = base.split(1);
    CHECK(s0.next_u64() != s1.next_u64());
    CHECK(base.split(0).next_u64() == base.split(0).next_u64());
}

TEST_CASE("prng uniform01 range and normal moments") {
    Prng rng(5);
    double mean = 0.0, var = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        mean += z;
        var += z * z;
    }
    mean /= n;
    var = var / n - mean * mean;
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(var - 1.0) < 0.05);
}
