#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fevl/eval.hpp"
#include "fevl/prng.hpp"

using namespace fevl;

namespace {

PairSet make_pairs(const std::vector<double>& scores, const std::vector<bool>& same) {
    PairSet p;
    for (std::size_t i = 0; i < scores.size(); ++i)
        p.pairs.push_back({0, 0, static_cast<bool>(same[i])});
    p.scores = scores;
    return p;
}

PairSet gaussian_pairs(std::size_t n, std::uint64_t seed) {
    Prng rng(seed);
    PairSet p;
    for (std::size_t i = 0; i < n; ++i) {
        const bool same = i % 2 == 0;
        p.pairs.push_back({0, 0, same});
        p.scores.push_back(same ? rng.normal(0.7, 0.1) : rng.normal(0.3, 0.1));
    }
    return p;
}

// Brute-force re-implementation of the k-fold protocol, written directly from
// the protocol description and sharing no code with verify_kfold.
KFoldResult brute_force_kfold(const PairSet& p, std::size_t k) {
    const std::size_t n = p.pairs.size();
    std::vector<std::size_t> fold_of(n);
    const std::size_t base = n / k, extra = n % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) fold_of[pos++] = f;
    }

    auto accuracy_at = [&](double thr, std::size_t fold, bool held_out) {
        std::size_t correct = 0, total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if ((fold_of[i] == fold) != held_out) continue;
            ++total;
            const bool predict_same = p.scores[i] >= thr;
            if (predict_same == p.pairs[i].same) ++correct;
        }
        return total ? static_cast<double>(correct) / total : 0.0;
    };

    KFoldResult r;
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<double> train_scores;
        for (std::size_t i = 0; i < n; ++i)
            if (fold_of[i] != f) train_scores.push_back(p.scores[i]);
        std::sort(train_scores.begin(), train_scores.end());
        train_scores.erase(std::unique(train_scores.begin(), train_scores.end()),
                           train_scores.end());
        std::vector<double> candidates;
        candidates.push_back(train_scores.front() - 1.0);
        for (std::size_t i = 0; i + 1 < train_scores.size(); ++i)
            candidates.push_back(0.5 * (train_scores[i] + train_scores[i + 1]));
        candidates.push_back(train_scores.back() + 1.0);

        double best_thr = candidates.front(), best_acc = -1.0;
        for (double thr : candidates) {
            const double acc = accuracy_at(thr, f, false);
            if (acc > best_acc) {  // strict: ties keep the lowest threshold
                best_acc = acc;
                best_thr = thr;
            }
        }
        r.fold_thresholds.push_back(best_thr);
        r.fold_accuracies.push_back(accuracy_at(best_thr, f, true));
    }
    double mean = 0.0;
    for (double a : r.fold_accuracies) mean += a;
    mean /= k;
    double var = 0.0;
    for (double a : r.fold_accuracies) var += (a - mean) * (a - mean);
    r.mean_accuracy = mean;
    r.std_accuracy = std::sqrt(var / k);
    return r;
}

}  // namespace

TEST_CASE("score_pairs cosine values") {
    const Mat emb{{1, 0}, {2, 0}, {-3, 0}, {0, 5}};
    PairSet p;
    p.pairs = {{0, 1, true}, {0, 2, false}, {0, 3, false}};
    const PairSet s = score_pairs(emb, p);
    REQUIRE(s.scores.size() == 3);
    CHECK(s.scores[0] == doctest::Approx(1.0).epsilon(1e-12));   // same direction
    CHECK(s.scores[1] == doctest::Approx(-1.0).epsilon(1e-12));  // antipodal
    CHECK(s.scores[2] == doctest::Approx(0.0));                  // orthogonal

    PairSet bad;
    bad.pairs = {{0, 9, true}};
    CHECK_THROWS_AS(score_pairs(emb, bad), std::invalid_argument);
}

TEST_CASE("score_pairs vs normalized-dot oracle") {
    Prng rng(13);
    Mat emb(10, 6);
    for (double& v : emb.data) v = rng.uniform(-1.0, 1.0);
    PairSet p;
    for (int i = 0; i < 20; ++i)
        p.pairs.push_back({rng.uniform_int(10), rng.uniform_int(10), true});
    const PairSet s = score_pairs(emb, p);
    for (std::size_t i = 0; i < p.pairs.size(); ++i) {
        const std::size_t a = p.pairs[i].index_a, b = p.pairs[i].index_b;
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t d = 0; d < 6; ++d) {
            dot += emb(a, d) * emb(b, d);
            na += emb(a, d) * emb(a, d);
            nb += emb(b, d) * emb(b, d);
        }
        CHECK(std::abs(s.scores[i] - dot / std::sqrt(na * nb)) < 1e-12);
    }
}

TEST_CASE("verify_kfold on perfectly separated scores") {
    std::vector<double> scores;
    std::vector<bool> same;
    for (int i = 0; i < 100; ++i) {
        scores.push_back(i % 2 ? 0.9 : 0.1);
        same.push_back(i % 2 == 1);
    }
    const KFoldResult r = verify_kfold(make_pairs(scores, same), 10);
    CHECK(r.mean_accuracy == doctest::Approx(1.0));
    CHECK(r.std_accuracy == doctest::Approx(0.0));
}

TEST_CASE("verify_kfold with all scores equal and balanced labels") {
    std::vector<double> scores(100, 0.5);
    std::vector<bool> same;
    for (int i = 0; i < 100; ++i) same.push_back(i % 2 == 0);
    const KFoldResult r = verify_kfold(make_pairs(scores, same), 10);
    CHECK(r.mean_accuracy == doctest::Approx(0.5));
}

TEST_CASE("verify_kfold equals the brute-force oracle on 600 pairs") {
    const PairSet p = gaussian_pairs(600, 99);
    const KFoldResult fast = verify_kfold(p, 10);
    const KFoldResult slow = brute_force_kfold(p, 10);
    REQUIRE(fast.fold_accuracies.size() == 10);
    CHECK(fast.mean_accuracy == slow.mean_accuracy);
    CHECK(fast.std_accuracy == slow.std_accuracy);
    for (std::size_t f = 0; f < 10; ++f) {
        CHECK(fast.fold_accuracies[f] == slow.fold_accuracies[f]);
        CHECK(fast.fold_thresholds[f] == slow.fold_thresholds[f]);
    }
}

TEST_CASE("verify_kfold oracle agreement on uneven fold sizes") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const PairSet p = gaussian_pairs(137, seed);  // 137 = 10*13 + 7
        const KFoldResult fast = verify_kfold(p, 10);
        const KFoldResult slow = brute_force_kfold(p, 10);
        CHECK(fast.mean_accuracy == slow.mean_accuracy);
        for (std::size_t f = 0; f < 10; ++f)
            CHECK(fast.fold_thresholds[f] == slow.fold_thresholds[f]);
    }
}

TEST_CASE("verify_kfold is invariant under monotone score transforms") {
    const PairSet p = gaussian_pairs(300, 7);
    PairSet q = p;
    for (double& s : q.scores) s = std::tanh(3.0 * s) + 2.0;  // strictly increasing
    const KFoldResult a = verify_kfold(p, 10);
    const KFoldResult b = verify_kfold(q, 10);
    CHECK(a.mean_accuracy == b.mean_accuracy);
    CHECK(a.std_accuracy == b.std_accuracy);
}

TEST_CASE("verify_kfold rejects bad input") {
    const PairSet p = gaussian_pairs(5, 1);
    CHECK_THROWS_AS(verify_kfold(p, 10), std::invalid_argument);
    CHECK_THROWS_AS(verify_kfold(p, 1), std::invalid_argument);
    PairSet unscored;
    unscored.pairs = {{0, 1, true}, {0, 2, false}};
    CHECK_THROWS_AS(verify_kfold(unscored, 2), std::invalid_argument);
}

TEST_CASE("roc curve on perfect separation") {
    std::vector<double> scores;
    std::vector<bool> same;
    for (int i = 0; i < 50; ++i) {
        scores.push_back(i % 2 ? 0.8 : 0.2);
        same.push_back(i % 2 == 1);
    }
    const auto roc = roc_points(make_pairs(scores, same));
    bool has_perfect = false, has_origin = false;
    double prev_far = -1.0, prev_tar = -1.0;
    for (const auto& pt : roc) {
        if (pt.far == 0.0 && pt.tar == 1.0) has_perfect = true;
        if (pt.far == 0.0 && pt.tar == 0.0) has_origin = true;
        CHECK(pt.far >= prev_far);
        CHECK(pt.tar >= prev_tar);
        prev_far = pt.far;
        prev_tar = pt.tar;
    }
    CHECK(has_perfect);
    CHECK(has_origin);
}

TEST_CASE("roc area is about one half under the null") {
    Prng rng(17);
    PairSet p;
    for (int i = 0; i < 2000; ++i) {
        p.pairs.push_back({0, 0, i % 2 == 0});
        p.scores.push_back(rng.normal(0.5, 0.1));  // label-independent
    }
    const auto roc = roc_points(p);
    double area = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i)
        area += 0.5 * (roc[i].tar + roc[i - 1].tar) * (roc[i].far - roc[i - 1].far);
    CHECK(std::abs(area - 0.5) < 0.03);
}

TEST_CASE("roc rejects single-class input") {
    PairSet p;
    p.pairs = {{0, 0, true}, {0, 0, true}};
    p.scores = {0.5, 0.6};
    CHECK_THROWS_AS(roc_points(p), std::invalid_argument);
}

TEST_CASE("tar_at_far interpolates") {
    std::vector<RocPoint> roc = {{0.0, 0.0, 1.0}, {0.1, 0.6, 0.5}, {1.0, 1.0, 0.0}};
    CHECK(tar_at_far(roc, 0.1) == doctest::Approx(0.6));
    CHECK(tar_at_far(roc, 0.05) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(tar_at_far(roc, 0.55) == doctest::Approx(0.8).epsilon(1e-12));
}
