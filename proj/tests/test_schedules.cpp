#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fevl/prng.hpp"
#include "fevl/schedules.hpp"

using namespace fevl;

TEST_CASE("cosine schedule endpoints and midpoint") {
    Schedule s;
    s.kind = ScheduleKind::WarmupCosine;
    s.eta0 = 0.1;
    s.warmup_steps = 0;
    s.total_steps = 100;
    CHECK(lr_at(s, 0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(lr_at(s, 100) == doctest::Approx(0.0));
    CHECK(lr_at(s, 50) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("warmup ramp") {
    Schedule s;
    s.kind = ScheduleKind::WarmupCosine;
    s.eta0 = 0.4;
    s.warmup_steps = 5;
    s.total_steps = 50;
    for (int t = 0; t < 5; ++t)
        CHECK(lr_at(s, t) == doctest::Approx(0.4 * (t + 1) / 5.0).epsilon(1e-12));
    CHECK(lr_at(s, 4) == doctest::Approx(0.4).epsilon(1e-12));
    // Continuity at the boundary: first cosine step equals eta0.
    CHECK(std::abs(lr_at(s, 5) - 0.4) < 0.4 * 0.01);
}

TEST_CASE("step schedule counting rule") {
    Schedule s;
    s.kind = ScheduleKind::WarmupStep;
    s.eta0 = 1.0;
    s.warmup_steps = 0;
    s.total_steps = 100;
    s.step_milestones = {30, 60};
    s.step_factor = 0.1;
    CHECK(lr_at(s, 0) == doctest::Approx(1.0));
    CHECK(lr_at(s, 29) == doctest::Approx(1.0));
    CHECK(lr_at(s, 30) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(lr_at(s, 45) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(lr_at(s, 60) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(lr_at(s, 99) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("cosine is non-increasing after warmup") {
    Schedule s;
    s.kind = ScheduleKind::WarmupCosine;
    s.eta0 = 0.25;
    s.warmup_steps = 10;
    s.total_steps = 200;
    double prev = lr_at(s, 10);
    for (int t = 11; t <= 200; ++t) {
        const double cur = lr_at(s, t);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
}

TEST_CASE("lr_at rejects out-of-range steps") {
    Schedule s;
    s.total_steps = 10;
    CHECK_THROWS_AS(lr_at(s, -1), std::invalid_argument);
    CHECK_THROWS_AS(lr_at(s, 11), std::invalid_argument);
}

TEST_CASE("smooth_labels values and normalization") {
    const auto onehot = smooth_labels(2, 5, 0.0);
    for (int j = 0; j < 5; ++j) CHECK(onehot[j] == (j == 2 ? 1.0 : 0.0));

    const auto q = smooth_labels(3, 1000, 0.1);
    CHECK(q[3] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(q[0] == doctest::Approx(0.1 / 999.0).epsilon(1e-15));

    Prng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + static_cast<int>(rng.uniform_int(50));
        const int y = static_cast<int>(rng.uniform_int(k));
        const double eps = rng.uniform(0.01, 0.9);
        const auto v = smooth_labels(y, k, eps);
        const double sum = std::accumulate(v.begin(), v.end(), 0.0);
        CHECK(std::abs(sum - 1.0) < 1e-14);
        for (double e : v) CHECK(e > 0.0);
    }

    CHECK_THROWS_AS(smooth_labels(0, 1, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(smooth_labels(5, 3, 0.1), std::invalid_argument);
}

TEST_CASE("ls_optimal_gap closed form") {
    CHECK(ls_optimal_gap(0.1, 1000) == doctest::Approx(std::log(8991.0)).epsilon(1e-15));
    CHECK(ls_optimal_gap(0.1, 1000) == doctest::Approx(9.1040).epsilon(2e-5));
    CHECK(ls_optimal_gap(0.5, 2) == doctest::Approx(0.0));
}

TEST_CASE("gradient descent on smoothed CE converges to the optimal gap") {
    // Minimize CE(softmax(z), q) over free logits z with q the smoothed
    // one-hot; the optimum has z_y - z_j = ls_optimal_gap for all j != y.
    const int k = 1000;
    const double eps = 0.1;
    const auto q = smooth_labels(0, k, eps);
    std::vector<double> z(k, 0.0);
    for (int it = 0; it < 4000; ++it) {
        double mx = z[0];
        for (double v : z) mx = std::max(mx, v);
        double denom = 0.0;
        for (double v : z) denom += std::exp(v - mx);
        for (int j = 0; j < k; ++j) {
            const double p = std::exp(z[j] - mx) / denom;
            z[j] -= 20.0 * (p - q[j]);
        }
    }
    const double gap = z[0] - z[1];
    CHECK(std::abs(gap - ls_optimal_gap(eps, k)) < 1e-3);
}
