#pragma once

#include <string>
#include <vector>

#include "fevl/mat.hpp"

namespace fevl {

// The margin-head zoo. CosFace and AmSoftmax share the additive cosine
// margin formula; the kind-equivalence test asserts it. See docs/heads.md
// for the formula each kind implements and where it comes from.
enum class HeadKind {
    NormSoftmax,
    SphereFace,
    CosFace,
    AmSoftmax,
    ArcFace,
    AdaCos,
    CurricularFace,
    MagFace,
    AdaMSoftmax,
    ArcNegFace,
    NPCFace,
    MVSoftmax,
};

const char* head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& name);

struct HeadConfig {
    HeadKind kind = HeadKind::ArcFace;
    double s = 64.0;      // logit scale (ignored by AdaCos, which owns its scale)
    double m = 0.5;       // margin; per-kind defaults via make_head_config
    int sphere_m = 4;     // SphereFace integer margin
    double sphere_lambda = 1500.0;        // current annealing lambda
    double sphere_lambda_floor = 5.0;
    double sphere_lambda_decay = 0.99;    // multiplicative decay per step
    double gamma = 0.0;       // focal exponent, 0 disables
    double epsilon = 0.0;     // label smoothing mass, 0 disables
    double lambda_adam = 1.0; // AdaMSoftmax margin-average weight
    double ema_alpha = 0.01;  // CurricularFace statistic momentum

    // MagFace: margin linear on [l_a,u_a] -> [l_m,u_m], plus g(a)=1/a+a/u_a^2
    // weighted by lambda_g.
    double mag_la = 10.0, mag_ua = 110.0;
    double mag_lm = 0.45, mag_um = 0.8;
    double mag_lambda_g = 35.0;

    // Emphasis heads (ArcNegFace, NPCFace, MVSoftmax). With emphasis=false the
    // extra terms go neutral and each reduces exactly to its base head.
    bool emphasis = true;
    double arcneg_alpha = 1.0;  // hard-negative reweight amplitude
    double arcneg_sigma = 2.0;  // reweight bandwidth
    double mv_t = 1.2;          // MVSoftmax mis-classified reweight (>= 1)
    double npc_m1 = 0.2;        // NPCFace hard-positive margin boost
    double npc_t = 1.1;         // NPCFace hard-negative reweight (>= 1)
};

// HeadConfig with the adopted per-kind margin defaults filled in.
HeadConfig make_head_config(HeadKind kind);

struct HeadState {
    double adacos_scale = 0.0;  // set by init_head_state
    double curricular_t = 0.0;
    Mat centers;                        // C x D, Center loss only
    std::vector<double> adam_margins;   // per-class, AdaMSoftmax only
};

// AdaCos initial scale is sqrt(2)*ln(C-1); AdaM margins start at cfg.m.
HeadState init_head_state(const HeadConfig& cfg, std::size_t num_classes);

struct LossGrad {
    double loss = 0.0;
    Mat d_embeddings;                   // B x D
    Mat d_weights;                      // C x D
    std::vector<double> d_adam_margins; // empty unless AdaMSoftmax
};

// result[i][j] = <x_i, w_j> after L2-normalizing both rows, clamped to [-1,1].
// degenerate_rows, when non-null, counts rows whose norm hit the eps guard.
Mat cosine_logits(const Mat& embeddings, const Mat& weights,
                  int* degenerate_rows = nullptr, double eps = 1e-12);

// Forward margin transform: target-column margin per kind, then everything
// multiplied by the effective scale. magnitudes are the pre-normalization
// embedding norms (MagFace only; may be empty for other kinds).
Mat margin_transform(const Mat& cos, const std::vector<int>& labels,
                     const HeadConfig& cfg, const HeadState& state,
                     const std::vector<double>& magnitudes);

// Cross-entropy over softmax(logits) with either label smoothing (epsilon) or
// focal modulation (gamma); combining both is rejected. Loss is the batch
// mean; d_logits is the exact analytic gradient.
struct XentResult {
    double loss;
    Mat d_logits;
};
XentResult softmax_xent(const Mat& logits, const std::vector<int>& labels,
                        double epsilon, double gamma);

// softmax_xent . margin_transform . cosine_logits with the full analytic
// backward, including the normalization Jacobian (I - x x^T)/||x|| and the
// MagFace magnitude path.
LossGrad head_loss_and_grad(const Mat& embeddings, const Mat& weights,
                            const std::vector<int>& labels, const HeadConfig& cfg,
                            const HeadState& state);

struct CenterResult {
    double loss;
    Mat d_embeddings;
    Mat new_centers;
};
CenterResult center_loss_step(const Mat& embeddings, const std::vector<int>& labels,
                              const Mat& centers, double alpha);

struct TripletResult {
    double loss;
    Mat d_anchor, d_positive, d_negative;
};
TripletResult triplet_loss(const Mat& anchor, const Mat& positive,
                           const Mat& negative, double margin);

struct CircleResult {
    double loss;
    std::vector<double> d_sp, d_sn;
};
// alpha_p/alpha_n are constants in the backward pass (detached), as in the
// original method.
CircleResult circle_loss(const std::vector<double>& sp, const std::vector<double>& sn,
                         double m, double gamma);

// One post-forward statistics update per optimizer step (AdaCos scale,
// CurricularFace t). Pure: returns the new state.
HeadState adaptive_state_update(const HeadState& state, const Mat& cos,
                                const Mat& logits, const std::vector<int>& labels,
                                const HeadConfig& cfg);

}  // namespace fevl
