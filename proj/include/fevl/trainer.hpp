#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fevl/heads.hpp"
#include "fevl/mat.hpp"
#include "fevl/prng.hpp"
#include "fevl/schedules.hpp"

namespace fevl {

// Minimal pluggable backbone: linear or one hidden tanh layer.
struct Backbone {
    enum class Kind { Linear, OneHidden };
    Kind kind = Kind::Linear;
    Mat w1;  // D_in x H (or D_in x D for Linear)
    Mat w2;  // H x D (OneHidden only)

    std::size_t input_dim() const { return w1.rows; }
    std::size_t embedding_dim() const {
        return kind == Kind::Linear ? w1.cols : w2.cols;
    }
};

// Gaussian init with per-layer scale sqrt(2/fan_in), fixed by seed.
Backbone make_backbone(Backbone::Kind kind, std::size_t d_in, std::size_t hidden,
                       std::size_t d_emb, std::uint64_t seed);

struct BackboneCache {
    Mat hidden;  // pre-activation cache for OneHidden
};
Mat backbone_forward(const Backbone& bb, const Mat& x, BackboneCache* cache = nullptr);

struct BackboneGrads {
    Mat d_w1, d_w2;
};
BackboneGrads backbone_backward(const Backbone& bb, const Mat& x,
                                const BackboneCache& cache, const Mat& d_embeddings);

struct OptimState {
    std::map<std::string, Mat> momentum;
    std::size_t step = 0;
};

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
// Rejects non-finite gradients without advancing the step counter.
void sgd_step(std::map<std::string, Mat*> params, const std::map<std::string, Mat>& grads,
              OptimState& opt, double lr, double momentum, double weight_decay);

struct TrainConfig {
    HeadConfig head;
    Schedule schedule;
    std::size_t steps = 1000;
    std::size_t batch_size = 32;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t shard_count = 0;  // 0 or 1 = dense classifier path
    std::uint64_t seed = 0;
    double divergence_guard = 1e6;
};

struct MetricRow {
    std::size_t step;
    double lr;
    double loss;
};

struct TrainedModel {
    Backbone backbone;
    Mat head_weights;  // C x D
    HeadState head_state;
};

struct TrainResult {
    TrainedModel model;
    std::vector<MetricRow> log;
};

// Deterministic toy training loop over an in-memory dataset: weighted batch
// sampling, forward, head loss (dense or sharded), adaptive state update,
// SGD with the schedule's lr.
TrainResult train(const Mat& features, const std::vector<int>& labels,
                  const Backbone& init_backbone, const TrainConfig& cfg);

struct DistillResult {
    double loss;
    Mat d_student_logits;
};
// (1-beta)*CE(student, labels) + beta*T^2*KL(softmax(teacher/T) || softmax(student/T)).
DistillResult distill_loss(const Mat& student_logits, const Mat& teacher_logits,
                           double temperature, double beta,
                           const std::vector<int>& labels);

struct FilterReport {
    std::vector<std::size_t> kept_indices;
    std::vector<std::size_t> dropped_per_class;
    std::size_t total_dropped = 0;
};
// Drops samples where the teacher's softmax confidence (over scaled cosine
// logits) in the given label falls below tau.
FilterReport self_train_filter(const Mat& features, const std::vector<int>& labels,
                               const TrainedModel& teacher, double scale, double tau);

// Embeddings for a feature matrix under a trained model.
Mat embed(const TrainedModel& model, const Mat& features);

// Model file: magic FEVL1, named tensors, raw little-endian doubles.
// Round-trips bit-exactly.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

// Metric log as CSV `step,lr,loss`.
void save_metric_log(const std::vector<MetricRow>& log, const std::string& path);

// Gaussian class blobs for the toy experiments: class means are scaled
// one-hot directions with exact pairwise separation `separation` (in units
// of the per-coordinate sigma).
void make_blobs(std::size_t num_classes, std::size_t dim, std::size_t per_class,
                double separation, std::uint64_t seed, Mat* features,
                std::vector<int>* labels);

}  // namespace fevl
