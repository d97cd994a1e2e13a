#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fevl/heads.hpp"
#include "fevl/mat.hpp"

namespace fevl {

// One contiguous slice of the classifier weight matrix. Shards partition
// [0, C) in ascending shard_index.
struct WeightShard {
    std::size_t shard_index = 0;
    std::size_t class_offset = 0;
    Mat weights;  // C_p x D
};

// Ordered log of the simulated collective: phases max -> sumexp -> grad,
// each shard exactly once per phase, ascending shard order.
struct ReduceTrace {
    struct Entry {
        std::string phase;
        std::size_t shard_index;
        double payload;  // per-phase summary value
    };
    std::vector<Entry> entries;

    // One line per entry: "<phase> <shard> <payload>".
    std::string to_text() const;
};

// Contiguous partition with shard sizes ceil(C/p) then floor(C/p).
std::vector<WeightShard> make_shards(const Mat& weights, std::size_t p);

// Model-parallel loss/grad over weight shards: two-pass stable softmax with
// a fixed sequential reduction in ascending shard_index. Matches the dense
// head_loss_and_grad within 1e-12 and bit-for-bit at p=1. Margin kinds are
// limited to those touching only the target column (NormSoftmax, ArcFace,
// CosFace, AmSoftmax); everything else belongs on the dense path.
LossGrad sharded_loss_and_grad(const Mat& embeddings,
                               const std::vector<WeightShard>& shards,
                               const std::vector<int>& labels, const HeadConfig& cfg,
                               const HeadState& state, ReduceTrace* trace = nullptr);

}  // namespace fevl
