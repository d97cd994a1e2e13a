#pragma once

#include <cstddef>
#include <vector>

#include "fevl/mat.hpp"

namespace fevl {

struct Pair {
    std::size_t index_a = 0;
    std::size_t index_b = 0;
    bool same = false;
};

struct PairSet {
    std::vector<Pair> pairs;
    std::vector<double> scores;  // empty until scored; else one per pair
};

// Fills scores with cosine similarity of the two embeddings per pair.
PairSet score_pairs(const Mat& embeddings, const PairSet& pairs);

struct KFoldResult {
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    std::vector<double> fold_thresholds;
    std::vector<double> fold_accuracies;
};

// Standard k-fold verification protocol: contiguous folds in file order
// (sizes floor(n/k) with the remainder spread from fold 0); per fold the
// threshold maximizing accuracy on the other k-1 folds is chosen from
// {min-1} + midpoints of sorted unique training scores + {max+1}, ties going
// to the lowest threshold; accuracy is reported on the held-out fold.
KFoldResult verify_kfold(const PairSet& p, std::size_t k);

struct RocPoint {
    double far = 0.0;
    double tar = 0.0;
    double threshold = 0.0;
};

// Threshold sweep over unique scores descending; TAR/FAR are the fractions of
// same/diff pairs scoring >= threshold. Output is non-decreasing in both
// coordinates and includes the (0,0) endpoint.
std::vector<RocPoint> roc_points(const PairSet& p);

// TAR at the given FAR by linear interpolation between adjacent ROC points.
double tar_at_far(const std::vector<RocPoint>& roc, double far);

}  // namespace fevl
