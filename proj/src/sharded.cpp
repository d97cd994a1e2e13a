#include "fevl/sharded.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fevl {

std::string ReduceTrace::to_text() const {
    std::ostringstream os;
    for (const auto& e : entries)
        os << e.phase << ' ' << e.shard_index << ' ' << e.payload << '\n';
    return os.str();
}

std::vector<WeightShard> make_shards(const Mat& weights, std::size_t p) {
    const std::size_t C = weights.rows;
    if (p < 1 || p > C)
        throw std::invalid_argument("make_shards: need 1 <= p <= C, got p=" +
                                    std::to_string(p) + " C=" + std::to_string(C));
    std::vector<WeightShard> shards(p);
    const std::size_t base = C / p, extra = C % p;
    std::size_t offset = 0;
    for (std::size_t s = 0; s < p; ++s) {
        const std::size_t size = base + (s < extra ? 1 : 0);
        shards[s].shard_index = s;
        shards[s].class_offset = offset;
        shards[s].weights = Mat(size, weights.cols);
        for (std::size_t r = 0; r < size; ++r)
            for (std::size_t d = 0; d < weights.cols; ++d)
                shards[s].weights(r, d) = weights(offset + r, d);
        offset += size;
    }
    return shards;
}

namespace {

constexpr double kPi = 3.141592653589793238462643383279;

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// Same target-column margin math as the dense path (supported kinds only).
void target_margin(HeadKind kind, double m, double c, double* f, double* df) {
    switch (kind) {
        case HeadKind::NormSoftmax:
            *f = c;
            *df = 1.0;
            return;
        case HeadKind::CosFace:
        case HeadKind::AmSoftmax:
            *f = c - m;
            *df = 1.0;
            return;
        case HeadKind::ArcFace: {
            const double cc = clamp(c, -1.0, 1.0);
            if (m == 0.0) {
                *f = cc;
                *df = 1.0;
                return;
            }
            const double theta = std::acos(cc);
            if (theta + m <= kPi) {
                const double st = std::max(std::sqrt(std::max(0.0, 1.0 - cc * cc)), 1e-8);
                *f = std::cos(theta + m);
                *df = std::cos(m) + cc * std::sin(m) / st;
            } else {
                *f = cc - m * std::sin(m);
                *df = 1.0;
            }
            return;
        }
        default:
            throw std::invalid_argument(
                std::string("sharded_loss_and_grad: head kind '") + head_kind_name(kind) +
                "' is not shardable; use the dense head_loss_and_grad path");
    }
}

}  // namespace

LossGrad sharded_loss_and_grad(const Mat& embeddings, const std::vector<WeightShard>& shards,
                               const std::vector<int>& labels, const HeadConfig& cfg,
                               const HeadState& state, ReduceTrace* trace) {
    (void)state;
    if (cfg.kind != HeadKind::NormSoftmax && cfg.kind != HeadKind::ArcFace &&
        cfg.kind != HeadKind::CosFace && cfg.kind != HeadKind::AmSoftmax)
        throw std::invalid_argument(
            std::string("sharded_loss_and_grad: head kind '") +
            head_kind_name(cfg.kind) +
            "' is not shardable; use the dense head_loss_and_grad path");
    if (shards.empty()) throw std::invalid_argument("sharded_loss_and_grad: no shards");
    std::size_t C = 0;
    for (std::size_t s = 0; s < shards.size(); ++s) {
        if (shards[s].shard_index != s || shards[s].class_offset != C)
            throw std::invalid_argument("sharded_loss_and_grad: shards must be a "
                                        "contiguous ascending partition");
        C += shards[s].weights.rows;
    }
    const std::size_t B = embeddings.rows, D = embeddings.cols;
    const std::size_t p = shards.size();
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw std::invalid_argument("sharded_loss_and_grad: label out of range");
    if (labels.size() != B)
        throw std::invalid_argument("sharded_loss_and_grad: label count mismatch");

    const double eps = 1e-12;
    const auto xnorm = row_norms(embeddings, eps);
    const Mat xhat = l2_normalize_rows(embeddings, eps);

    // Shard-local forward: margin-adjusted logits and derivative coefficients.
    // These are independent per shard; the reductions below are the only
    // sequencing points.
    struct Local {
        Mat what;
        std::vector<double> wnorm;
        Mat logits;  // B x C_s, scaled
        Mat dsame;
        std::vector<double> local_max;     // per sample
        std::vector<double> local_sumexp;  // per sample
    };
    std::vector<Local> locals(p);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(p); ++si) {
        Local& L = locals[si];
        const WeightShard& sh = shards[si];
        L.wnorm = row_norms(sh.weights, eps);
        L.what = l2_normalize_rows(sh.weights, eps);
        Mat cos = gemm(xhat, transpose(L.what));
        for (double& v : cos.data) v = clamp(v, -1.0, 1.0);
        L.logits = cos;
        L.dsame = Mat(B, sh.weights.rows, 1.0);
        for (std::size_t i = 0; i < B; ++i) {
            const std::size_t y = static_cast<std::size_t>(labels[i]);
            if (y >= sh.class_offset && y < sh.class_offset + sh.weights.rows) {
                const std::size_t jy = y - sh.class_offset;
                double f, df;
                target_margin(cfg.kind, cfg.m, cos(i, jy), &f, &df);
                L.logits(i, jy) = f;
                L.dsame(i, jy) = df;
            }
        }
        for (double& v : L.logits.data) v *= cfg.s;
        for (double& v : L.dsame.data) v *= cfg.s;
        L.local_max.assign(B, 0.0);
        for (std::size_t i = 0; i < B; ++i) {
            double mx = L.logits(i, 0);
            for (std::size_t j = 1; j < sh.weights.rows; ++j)
                mx = std::max(mx, L.logits(i, j));
            L.local_max[i] = mx;
        }
    }

    // Phase 1: global max, fixed sequential reduction in ascending shard order.
    std::vector<double> gmax(B);
    for (std::size_t i = 0; i < B; ++i) gmax[i] = locals[0].local_max[i];
    for (std::size_t si = 0; si < p; ++si) {
        double payload = 0.0;
        for (std::size_t i = 0; i < B; ++i) {
            if (si > 0) gmax[i] = std::max(gmax[i], locals[si].local_max[i]);
            payload += locals[si].local_max[i];
        }
        if (trace) trace->entries.push_back({"max", si, payload});
    }

    // Phase 2: global softmax denominator, same reduction order.
    std::vector<double> denom(B, 0.0);
    for (std::size_t si = 0; si < p; ++si) {
        Local& L = locals[si];
        L.local_sumexp.assign(B, 0.0);
        double payload = 0.0;
        for (std::size_t i = 0; i < B; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < L.logits.cols; ++j)
                s += std::exp(L.logits(i, j) - gmax[i]);
            L.local_sumexp[i] = s;
            payload += s;
        }
        for (std::size_t i = 0; i < B; ++i) denom[i] += L.local_sumexp[i];
        if (trace) trace->entries.push_back({"sumexp", si, payload});
    }

    // Per-sample loss. z_y and q.z partials come from the owner shard /
    // shard-ordered partial sums so the p=1 case reproduces the dense
    // arithmetic exactly.
    std::vector<double> lse(B), py(B), zy(B);
    for (std::size_t i = 0; i < B; ++i) lse[i] = gmax[i] + std::log(denom[i]);
    for (std::size_t i = 0; i < B; ++i) {
        const std::size_t y = static_cast<std::size_t>(labels[i]);
        for (const auto& sh : shards)
            if (y >= sh.class_offset && y < sh.class_offset + sh.weights.rows)
                zy[i] = locals[sh.shard_index].logits(i, y - sh.class_offset);
        py[i] = std::exp(zy[i] - lse[i]);
    }

    if (cfg.epsilon > 0.0 && cfg.gamma > 0.0)
        throw std::invalid_argument(
            "sharded_loss_and_grad: focal and label smoothing cannot be combined");

    double total = 0.0;
    std::vector<double> coeff(B, 1.0);  // focal gradient coefficient
    if (cfg.epsilon > 0.0) {
        const double q_other = cfg.epsilon / static_cast<double>(C - 1);
        for (std::size_t i = 0; i < B; ++i) {
            double qz = 0.0;
            for (std::size_t si = 0; si < p; ++si) {
                const Local& L = locals[si];
                for (std::size_t j = 0; j < L.logits.cols; ++j) {
                    const std::size_t gj = shards[si].class_offset + j;
                    qz += (gj == static_cast<std::size_t>(labels[i]) ? 1.0 - cfg.epsilon
                                                                     : q_other) *
                          L.logits(i, j);
                }
            }
            total += lse[i] - qz;
        }
    } else {
        for (std::size_t i = 0; i < B; ++i) {
            const double ce = lse[i] - zy[i];
            double li = ce;
            if (cfg.gamma > 0.0) {
                const double one_minus = std::max(1.0 - py[i], 0.0);
                const double focal = std::pow(one_minus, cfg.gamma);
                li = focal * ce;
                coeff[i] = focal;
                if (one_minus > 1e-300)
                    coeff[i] += cfg.gamma * std::pow(one_minus, cfg.gamma - 1.0) * py[i] * ce;
            }
            total += li;
        }
    }
    const double invB = 1.0 / static_cast<double>(B);

    LossGrad lg;
    lg.loss = total * invB;
    lg.d_embeddings = Mat(B, D);
    lg.d_weights = Mat(C, D);

    // Phase 3: per-shard gradients; dxhat accumulates in ascending shard order,
    // which is the same summation order as the dense gemm over all classes.
    Mat dxhat(B, D);
    const double q_other =
        cfg.epsilon > 0.0 ? cfg.epsilon / static_cast<double>(C - 1) : 0.0;
    for (std::size_t si = 0; si < p; ++si) {
        const Local& L = locals[si];
        const WeightShard& sh = shards[si];
        Mat dlog(B, L.logits.cols);
        for (std::size_t i = 0; i < B; ++i) {
            for (std::size_t j = 0; j < L.logits.cols; ++j) {
                const std::size_t gj = sh.class_offset + j;
                const double pij = std::exp(L.logits(i, j) - lse[i]);
                const double is_y = gj == static_cast<std::size_t>(labels[i]) ? 1.0 : 0.0;
                double d;
                if (cfg.epsilon > 0.0)
                    d = pij - (is_y != 0.0 ? 1.0 - cfg.epsilon : q_other);
                else
                    d = coeff[i] * (pij - is_y);
                dlog(i, j) = d * invB;
            }
        }
        Mat dcos(B, L.logits.cols);
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < L.logits.cols; ++j)
                dcos(i, j) = dlog(i, j) * L.dsame(i, j);

        const Mat dxhat_part = gemm(dcos, L.what);
        for (std::size_t k = 0; k < dxhat.data.size(); ++k)
            dxhat.data[k] += dxhat_part.data[k];

        const Mat dwhat = gemm(transpose(dcos), xhat);
        double payload = 0.0;
        for (std::size_t j = 0; j < sh.weights.rows; ++j) {
            double dot = 0.0;
            for (std::size_t d = 0; d < D; ++d) dot += dwhat(j, d) * L.what(j, d);
            for (std::size_t d = 0; d < D; ++d) {
                const double g = (dwhat(j, d) - dot * L.what(j, d)) / L.wnorm[j];
                lg.d_weights(sh.class_offset + j, d) = g;
                payload += std::abs(g);
            }
        }
        if (trace) trace->entries.push_back({"grad", si, payload});
    }

    for (std::size_t i = 0; i < B; ++i) {
        double dot = 0.0;
        for (std::size_t d = 0; d < D; ++d) dot += dxhat(i, d) * xhat(i, d);
        for (std::size_t d = 0; d < D; ++d)
            lg.d_embeddings(i, d) = (dxhat(i, d) - dot * xhat(i, d)) / xnorm[i];
    }
    return lg;
}

}  // namespace fevl
