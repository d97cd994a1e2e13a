#include "fevl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fevl {

PairSet score_pairs(const Mat& embeddings, const PairSet& pairs) {
    PairSet out = pairs;
    out.scores.resize(pairs.pairs.size());
    const auto norms = row_norms(embeddings);
    for (std::size_t i = 0; i < pairs.pairs.size(); ++i) {
        const Pair& p = pairs.pairs[i];
        if (p.index_a >= embeddings.rows || p.index_b >= embeddings.rows)
            throw std::invalid_argument("score_pairs: pair index out of range");
        double dot = 0.0;
        for (std::size_t d = 0; d < embeddings.cols; ++d)
            dot += embeddings(p.index_a, d) * embeddings(p.index_b, d);
        out.scores[i] = dot / (norms[p.index_a] * norms[p.index_b]);
    }
    return out;
}

namespace {

double accuracy_at(const std::vector<double>& scores, const std::vector<bool>& same,
                   const std::vector<std::size_t>& idx, double threshold) {
    std::size_t correct = 0;
    for (std::size_t i : idx)
        if ((scores[i] >= threshold) == same[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace

KFoldResult verify_kfold(const PairSet& p, std::size_t k) {
    const std::size_t n = p.pairs.size();
    if (p.scores.size() != n)
        throw std::invalid_argument("verify_kfold: scores missing");
    if (k < 2) throw std::invalid_argument("verify_kfold: k must be >= 2");
    if (n < k) throw std::invalid_argument("verify_kfold: fewer pairs than folds");

    std::vector<bool> same(n);
    for (std::size_t i = 0; i < n; ++i) same[i] = p.pairs[i].same;

    // Contiguous folds: floor(n/k) each, remainder spread from fold 0.
    std::vector<std::size_t> fold_begin(k + 1, 0);
    const std::size_t base = n / k, extra = n % k;
    for (std::size_t f = 0; f < k; ++f)
        fold_begin[f + 1] = fold_begin[f] + base + (f < extra ? 1 : 0);

    KFoldResult res;
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < n; ++i) {
            if (i >= fold_begin[f] && i < fold_begin[f + 1])
                test.push_back(i);
            else
                train.push_back(i);
        }
        std::vector<double> uniq;
        uniq.reserve(train.size());
        for (std::size_t i : train) uniq.push_back(p.scores[i]);
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

        std::vector<double> candidates;
        candidates.push_back(uniq.front() - 1.0);
        for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
            candidates.push_back(0.5 * (uniq[i] + uniq[i + 1]));
        candidates.push_back(uniq.back() + 1.0);

        double best_thr = candidates.front();
        double best_acc = -1.0;
        for (double thr : candidates) {
            const double acc = accuracy_at(p.scores, same, train, thr);
            if (acc > best_acc) {  // ties keep the lowest threshold
                best_acc = acc;
                best_thr = thr;
            }
        }
        res.fold_thresholds.push_back(best_thr);
        res.fold_accuracies.push_back(accuracy_at(p.scores, same, test, best_thr));
    }

    double mean = 0.0;
    for (double a : res.fold_accuracies) mean += a;
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (double a : res.fold_accuracies) var += (a - mean) * (a - mean);
    res.mean_accuracy = mean;
    res.std_accuracy = std::sqrt(var / static_cast<double>(k));
    return res;
}

std::vector<RocPoint> roc_points(const PairSet& p) {
    const std::size_t n = p.pairs.size();
    if (p.scores.size() != n) throw std::invalid_argument("roc_points: scores missing");
    std::size_t n_same = 0, n_diff = 0;
    for (const auto& pr : p.pairs) (pr.same ? n_same : n_diff)++;
    if (n_same == 0 || n_diff == 0)
        throw std::invalid_argument("roc_points: both label classes must be non-empty");

    std::vector<double> uniq = p.scores;
    std::sort(uniq.begin(), uniq.end(), std::greater<>());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

    std::vector<RocPoint> out;
    // Endpoint above all scores: nothing accepted, (0,0).
    out.push_back({0.0, 0.0, uniq.front() + 1.0});
    for (double thr : uniq) {
        std::size_t ta = 0, fa = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (p.scores[i] >= thr) (p.pairs[i].same ? ta : fa)++;
        out.push_back({static_cast<double>(fa) / static_cast<double>(n_diff),
                       static_cast<double>(ta) / static_cast<double>(n_same), thr});
    }
    return out;
}

double tar_at_far(const std::vector<RocPoint>& roc, double far) {
    if (roc.empty()) throw std::invalid_argument("tar_at_far: empty curve");
    if (far <= roc.front().far) return roc.front().tar;
    for (std::size_t i = 0; i + 1 < roc.size(); ++i) {
        if (far >= roc[i].far && far <= roc[i + 1].far) {
            const double span = roc[i + 1].far - roc[i].far;
            if (span <= 0.0) return roc[i + 1].tar;
            const double w = (far - roc[i].far) / span;
            return roc[i].tar + w * (roc[i + 1].tar - roc[i].tar);
        }
    }
    return roc.back().tar;
}

}  // namespace fevl
