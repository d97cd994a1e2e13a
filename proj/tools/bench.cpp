// Compares the OpenMP kernels against their serial references and checks the
// results agree while timing both.
#include <chrono>
#include <cstdio>

#include "fevl/heads.hpp"
#include "fevl/mat.hpp"
#include "fevl/prng.hpp"
#include "fevl/sharded.hpp"

using namespace fevl;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Mat random_mat(std::size_t r, std::size_t c, Prng& rng) {
    Mat m(r, c);
    for (double& v : m.data) v = rng.uniform(-1.0, 1.0);
    return m;
}

void bench_gemm(std::size_t n, int reps) {
    Prng rng(1);
    const Mat a = random_mat(n, n, rng);
    const Mat b = random_mat(n, n, rng);

    auto t0 = Clock::now();
    Mat serial;
    for (int r = 0; r < reps; ++r) serial = gemm_serial(a, b);
    const double serial_ms = ms_since(t0) / reps;

    t0 = Clock::now();
    Mat parallel;
    for (int r = 0; r < reps; ++r) parallel = gemm(a, b);
    const double parallel_ms = ms_since(t0) / reps;

    std::printf("gemm %4zux%-4zu serial %8.2f ms  parallel %8.2f ms  speedup %5.2fx  "
                "maxdiff %.1e\n",
                n, n, serial_ms, parallel_ms, serial_ms / parallel_ms,
                max_abs_diff(serial, parallel));
}

void bench_sharded(std::size_t B, std::size_t C, std::size_t D, std::size_t p, int reps) {
    Prng rng(2);
    const Mat x = random_mat(B, D, rng);
    const Mat w = random_mat(C, D, rng);
    std::vector<int> y(B);
    for (auto& v : y) v = static_cast<int>(rng.uniform_int(C));
    const HeadConfig cfg = make_head_config(HeadKind::ArcFace);
    const HeadState st = init_head_state(cfg, C);

    auto t0 = Clock::now();
    LossGrad dense;
    for (int r = 0; r < reps; ++r) dense = head_loss_and_grad(x, w, y, cfg, st);
    const double dense_ms = ms_since(t0) / reps;

    const auto shards = make_shards(w, p);
    t0 = Clock::now();
    LossGrad shd;
    for (int r = 0; r < reps; ++r) shd = sharded_loss_and_grad(x, shards, y, cfg, st);
    const double shard_ms = ms_since(t0) / reps;

    std::printf("head B=%zu C=%-6zu D=%zu  dense %8.2f ms  sharded(p=%zu) %8.2f ms  "
                "loss diff %.1e  grad diff %.1e\n",
                B, C, D, dense_ms, p, shard_ms, std::abs(dense.loss - shd.loss),
                max_abs_diff(dense.d_weights, shd.d_weights));
}

}  // namespace

int main() {
    std::printf("== gemm: serial reference vs OpenMP ==\n");
    bench_gemm(128, 20);
    bench_gemm(256, 10);
    bench_gemm(512, 3);

    std::printf("\n== classifier head: dense vs sharded ==\n");
    bench_sharded(64, 2000, 64, 4, 5);
    bench_sharded(64, 10000, 64, 8, 3);
    return 0;
}
