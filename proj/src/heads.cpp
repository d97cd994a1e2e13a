#include "fevl/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fevl {

namespace {

constexpr double kPi = 3.141592653589793238462643383279;

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// sin(theta) from cos(theta), guarded away from 0 for the derivative path.
double safe_sin(double c) {
    return std::max(std::sqrt(std::max(0.0, 1.0 - c * c)), 1e-8);
}

struct MarginValue {
    double f;      // transformed (unscaled) target value
    double df_dc;  // d f / d cos(theta)
    double df_dm;  // d f / d m
};

// cos(theta + m) with the monotonic fallback cos(theta) - m*sin(m) once
// theta + m passes pi.
MarginValue arc_margin(double c, double m) {
    const double cc = clamp(c, -1.0, 1.0);
    const double theta = std::acos(cc);
    if (m == 0.0) return {cc, 1.0, -std::sin(theta)};  // exact m=0 identity
    if (theta + m <= kPi) {
        const double st = safe_sin(cc);
        return {std::cos(theta + m), std::cos(m) + cc * std::sin(m) / st,
                -std::sin(theta + m)};
    }
    return {cc - m * std::sin(m), 1.0, -(std::sin(m) + m * std::cos(m))};
}

// SphereFace psi(theta) = (-1)^k cos(m*theta) - 2k on [k*pi/m, (k+1)*pi/m].
void sphere_psi(double c, int m, double* psi, double* dpsi_dc) {
    const double cc = clamp(c, -1.0, 1.0);
    const double theta = std::acos(cc);
    int k = static_cast<int>(std::floor(theta * m / kPi));
    k = std::min(k, m - 1);
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    *psi = sign * std::cos(m * theta) - 2.0 * k;
    *dpsi_dc = sign * m * std::sin(m * theta) / safe_sin(cc);
}

struct MarginPack {
    Mat logits;  // B x C, scaled
    Mat dsame;   // d logit[i][j] / d cos[i][j]
    // Cross terms, zero at j = y_i:
    Mat dtarget_dcos;      // d logit[i][y] / d cos[i][j]   (NPCFace margin boost)
    Mat dnontarget_dcosy;  // d logit[i][j] / d cos[i][y]   (ArcNegFace reweight)
    std::vector<double> dtarget_dmag;  // d logit[i][y] / d a_i (MagFace)
    std::vector<double> d_extra_dmag;  // regularizer gradient, already /B
    double extra_loss = 0.0;
    bool has_adam = false;  // target derivative w.r.t. m_{y_i} is -scale
    double scale = 1.0;
};

void check_labels(const std::vector<int>& labels, std::size_t batch, std::size_t classes) {
    if (labels.size() != batch)
        throw std::invalid_argument("labels size does not match batch size");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw std::invalid_argument("label " + std::to_string(y) + " out of range");
}

MarginPack margin_pack(const Mat& cos, const std::vector<int>& labels,
                       const HeadConfig& cfg, const HeadState& state,
                       const std::vector<double>& magnitudes) {
    const std::size_t B = cos.rows, C = cos.cols;
    check_labels(labels, B, C);

    MarginPack p;
    p.logits = cos;
    p.dsame = Mat(B, C, 1.0);
    p.dtarget_dcos = Mat(B, C, 0.0);
    p.dnontarget_dcosy = Mat(B, C, 0.0);
    p.scale = cfg.kind == HeadKind::AdaCos ? state.adacos_scale : cfg.s;
    if (p.scale <= 0.0) throw std::invalid_argument("margin_transform: scale must be > 0");

    switch (cfg.kind) {
        case HeadKind::NormSoftmax:
        case HeadKind::AdaCos:
            break;

        case HeadKind::CosFace:
        case HeadKind::AmSoftmax:
            for (std::size_t i = 0; i < B; ++i) p.logits(i, labels[i]) -= cfg.m;
            break;

        case HeadKind::AdaMSoftmax: {
            if (state.adam_margins.size() != C)
                throw std::invalid_argument("AdaMSoftmax: adam_margins size mismatch");
            p.has_adam = true;
            double mean_m = 0.0;
            for (std::size_t i = 0; i < B; ++i) {
                p.logits(i, labels[i]) -= state.adam_margins[labels[i]];
                mean_m += state.adam_margins[labels[i]];
            }
            p.extra_loss = -cfg.lambda_adam * mean_m / static_cast<double>(B);
            break;
        }

        case HeadKind::ArcFace:
            for (std::size_t i = 0; i < B; ++i) {
                const auto mv = arc_margin(cos(i, labels[i]), cfg.m);
                p.logits(i, labels[i]) = mv.f;
                p.dsame(i, labels[i]) = mv.df_dc;
            }
            break;

        case HeadKind::SphereFace: {
            if (cfg.sphere_m < 1)
                throw std::invalid_argument("SphereFace: margin must be a positive integer");
            const double lam = std::max(cfg.sphere_lambda, cfg.sphere_lambda_floor);
            for (std::size_t i = 0; i < B; ++i) {
                const double c = cos(i, labels[i]);
                double psi, dpsi;
                sphere_psi(c, cfg.sphere_m, &psi, &dpsi);
                p.logits(i, labels[i]) = (lam * c + psi) / (1.0 + lam);
                p.dsame(i, labels[i]) = (lam + dpsi) / (1.0 + lam);
            }
            break;
        }

        case HeadKind::CurricularFace: {
            const double t = state.curricular_t;
            for (std::size_t i = 0; i < B; ++i) {
                const int y = labels[i];
                const auto mv = arc_margin(cos(i, y), cfg.m);
                for (std::size_t j = 0; j < C; ++j) {
                    if (static_cast<int>(j) == y) continue;
                    const double cj = cos(i, j);
                    if (mv.f < cj) {  // hard negative
                        p.logits(i, j) = cj * (t + cj);
                        p.dsame(i, j) = t + 2.0 * cj;
                    }
                }
                p.logits(i, y) = mv.f;
                p.dsame(i, y) = mv.df_dc;
            }
            break;
        }

        case HeadKind::MagFace: {
            if (magnitudes.size() != B)
                throw std::invalid_argument("MagFace: magnitudes must have one entry per sample");
            p.dtarget_dmag.assign(B, 0.0);
            p.d_extra_dmag.assign(B, 0.0);
            const double slope = (cfg.mag_um - cfg.mag_lm) / (cfg.mag_ua - cfg.mag_la);
            for (std::size_t i = 0; i < B; ++i) {
                const double a = magnitudes[i];
                const double ac = clamp(a, cfg.mag_la, cfg.mag_ua);
                const double m = cfg.mag_lm + (ac - cfg.mag_la) * slope;
                const double dm_da = (a > cfg.mag_la && a < cfg.mag_ua) ? slope : 0.0;
                const auto mv = arc_margin(cos(i, labels[i]), m);
                p.logits(i, labels[i]) = mv.f;
                p.dsame(i, labels[i]) = mv.df_dc;
                p.dtarget_dmag[i] = mv.df_dm * dm_da;  // scaled below
                p.extra_loss += cfg.mag_lambda_g * (1.0 / a + a / (cfg.mag_ua * cfg.mag_ua)) /
                                static_cast<double>(B);
                p.d_extra_dmag[i] = cfg.mag_lambda_g *
                                    (-1.0 / (a * a) + 1.0 / (cfg.mag_ua * cfg.mag_ua)) /
                                    static_cast<double>(B);
            }
            break;
        }

        case HeadKind::ArcNegFace: {
            // Target: ArcFace margin. Non-target j: reweight t_ij that peaks
            // where cos(theta_j) approaches the margined target value, applied
            // as t*(cos+1)-1. t depends on both cosines; both derivative paths
            // are carried so the analytic gradient is exact.
            for (std::size_t i = 0; i < B; ++i) {
                const int y = labels[i];
                const auto mv = arc_margin(cos(i, y), cfg.m);
                p.logits(i, y) = mv.f;
                p.dsame(i, y) = mv.df_dc;
                if (!cfg.emphasis) continue;
                for (std::size_t j = 0; j < C; ++j) {
                    if (static_cast<int>(j) == y) continue;
                    const double cj = cos(i, j);
                    const double d = cj - mv.f;
                    const double t = cfg.arcneg_alpha * std::exp(-d * d / cfg.arcneg_sigma);
                    const double dt_dd = t * (-2.0 * d / cfg.arcneg_sigma);
                    p.logits(i, j) = t * (cj + 1.0) - 1.0;
                    p.dsame(i, j) = t + (cj + 1.0) * dt_dd;
                    // d = cj - f(cy), so d/dcy flows through -df_dc
                    p.dnontarget_dcosy(i, j) = (cj + 1.0) * dt_dd * (-mv.df_dc);
                }
            }
            break;
        }

        case HeadKind::NPCFace: {
            // Hard negatives N_i = {j : cos_j > cos(theta_y + m)}. Target gets
            // the boosted margin m + m1 * mean_{N_i} cos_j; hard negatives get
            // the t*cos+t-1 reweight. Emphasis off (m1=0, t=1) is plain ArcFace.
            const double m1 = cfg.emphasis ? cfg.npc_m1 : 0.0;
            const double t = cfg.emphasis ? cfg.npc_t : 1.0;
            for (std::size_t i = 0; i < B; ++i) {
                const int y = labels[i];
                const double cy = cos(i, y);
                const auto base = arc_margin(cy, cfg.m);
                std::vector<std::size_t> hard;
                double hard_sum = 0.0;
                for (std::size_t j = 0; j < C; ++j) {
                    if (static_cast<int>(j) == y) continue;
                    if (cos(i, j) > base.f) {
                        hard.push_back(j);
                        hard_sum += cos(i, j);
                    }
                }
                double mt = cfg.m;
                double dmt_dcj = 0.0;
                if (!hard.empty() && m1 != 0.0) {
                    mt += m1 * hard_sum / static_cast<double>(hard.size());
                    dmt_dcj = m1 / static_cast<double>(hard.size());
                }
                const auto mv = arc_margin(cy, mt);
                p.logits(i, y) = mv.f;
                p.dsame(i, y) = mv.df_dc;
                if (t != 1.0)  // t=1 is an exact no-op on negatives
                    for (std::size_t j : hard) {
                        p.logits(i, j) = t * cos(i, j) + t - 1.0;
                        p.dsame(i, j) = t;
                    }
                // Boosted margin couples the target logit to hard-negative cosines.
                if (dmt_dcj != 0.0)
                    for (std::size_t j : hard)
                        p.dtarget_dcos(i, j) = mv.df_dm * dmt_dcj;
            }
            break;
        }

        case HeadKind::MVSoftmax: {
            // ArcFace base; mis-classified negatives (cos_j beats the margined
            // target) reweighted as t*cos+t-1. Emphasis off (t=1) is ArcFace.
            const double t = cfg.emphasis ? cfg.mv_t : 1.0;
            for (std::size_t i = 0; i < B; ++i) {
                const int y = labels[i];
                const auto mv = arc_margin(cos(i, y), cfg.m);
                if (t != 1.0)
                    for (std::size_t j = 0; j < C; ++j) {
                        if (static_cast<int>(j) == y) continue;
                        if (cos(i, j) > mv.f) {
                            p.logits(i, j) = t * cos(i, j) + t - 1.0;
                            p.dsame(i, j) = t;
                        }
                    }
                p.logits(i, y) = mv.f;
                p.dsame(i, y) = mv.df_dc;
            }
            break;
        }
    }

    for (double& v : p.logits.data) v *= p.scale;
    for (double& v : p.dsame.data) v *= p.scale;
    for (double& v : p.dtarget_dcos.data) v *= p.scale;
    for (double& v : p.dnontarget_dcosy.data) v *= p.scale;
    if (!p.dtarget_dmag.empty())
        for (double& v : p.dtarget_dmag) v *= p.scale;
    return p;
}

}  // namespace

const char* head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::NormSoftmax: return "norm_softmax";
        case HeadKind::SphereFace: return "sphereface";
        case HeadKind::CosFace: return "cosface";
        case HeadKind::AmSoftmax: return "am_softmax";
        case HeadKind::ArcFace: return "arcface";
        case HeadKind::AdaCos: return "adacos";
        case HeadKind::CurricularFace: return "curricularface";
        case HeadKind::MagFace: return "magface";
        case HeadKind::AdaMSoftmax: return "adam_softmax";
        case HeadKind::ArcNegFace: return "arcnegface";
        case HeadKind::NPCFace: return "npcface";
        case HeadKind::MVSoftmax: return "mv_softmax";
    }
    return "unknown";
}

HeadKind head_kind_from_name(const std::string& name) {
    static const std::pair<const char*, HeadKind> table[] = {
        {"norm_softmax", HeadKind::NormSoftmax}, {"sphereface", HeadKind::SphereFace},
        {"cosface", HeadKind::CosFace},          {"am_softmax", HeadKind::AmSoftmax},
        {"arcface", HeadKind::ArcFace},          {"adacos", HeadKind::AdaCos},
        {"curricularface", HeadKind::CurricularFace}, {"magface", HeadKind::MagFace},
        {"adam_softmax", HeadKind::AdaMSoftmax}, {"arcnegface", HeadKind::ArcNegFace},
        {"npcface", HeadKind::NPCFace},          {"mv_softmax", HeadKind::MVSoftmax},
    };
    for (const auto& [n, k] : table)
        if (name == n) return k;
    throw std::invalid_argument("unknown head kind: " + name);
}

HeadConfig make_head_config(HeadKind kind) {
    HeadConfig cfg;
    cfg.kind = kind;
    switch (kind) {
        case HeadKind::ArcFace:
        case HeadKind::CurricularFace:
        case HeadKind::ArcNegFace:
        case HeadKind::MVSoftmax:
        case HeadKind::NPCFace:
            cfg.m = 0.5;
            break;
        case HeadKind::CosFace:
        case HeadKind::AmSoftmax:
        case HeadKind::AdaMSoftmax:
            cfg.m = 0.35;
            break;
        default:
            cfg.m = 0.0;
            break;
    }
    return cfg;
}

HeadState init_head_state(const HeadConfig& cfg, std::size_t num_classes) {
    HeadState st;
    if (num_classes >= 2)
        st.adacos_scale = std::sqrt(2.0) * std::log(static_cast<double>(num_classes - 1));
    else
        st.adacos_scale = 1.0;
    st.curricular_t = 0.0;
    if (cfg.kind == HeadKind::AdaMSoftmax)
        st.adam_margins.assign(num_classes, cfg.m);
    return st;
}

Mat cosine_logits(const Mat& embeddings, const Mat& weights, int* degenerate_rows,
                  double eps) {
    if (embeddings.cols != weights.cols)
        throw std::invalid_argument("cosine_logits: embedding dim mismatch");
    int degenerate = 0;
    for (const Mat* m : {&embeddings, &weights})
        for (std::size_t i = 0; i < m->rows; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < m->cols; ++j) sq += (*m)(i, j) * (*m)(i, j);
            if (std::sqrt(sq) < eps) ++degenerate;
        }
    if (degenerate_rows) *degenerate_rows = degenerate;
    Mat cos = gemm(l2_normalize_rows(embeddings, eps),
                   transpose(l2_normalize_rows(weights, eps)));
    for (double& v : cos.data) v = clamp(v, -1.0, 1.0);
    return cos;
}

Mat margin_transform(const Mat& cos, const std::vector<int>& labels,
                     const HeadConfig& cfg, const HeadState& state,
                     const std::vector<double>& magnitudes) {
    return margin_pack(cos, labels, cfg, state, magnitudes).logits;
}

XentResult softmax_xent(const Mat& logits, const std::vector<int>& labels,
                        double epsilon, double gamma) {
    const std::size_t B = logits.rows, C = logits.cols;
    check_labels(labels, B, C);
    if (epsilon < 0.0 || epsilon >= 1.0)
        throw std::invalid_argument("softmax_xent: epsilon must be in [0,1)");
    if (gamma < 0.0) throw std::invalid_argument("softmax_xent: gamma must be >= 0");
    if (epsilon > 0.0 && gamma > 0.0)
        throw std::invalid_argument(
            "softmax_xent: focal and label smoothing cannot be combined");
    if (epsilon > 0.0 && C < 2)
        throw std::invalid_argument("softmax_xent: smoothing needs at least 2 classes");

    XentResult out;
    out.d_logits = Mat(B, C);
    double total = 0.0;
    std::vector<double> p(C);
    for (std::size_t i = 0; i < B; ++i) {
        const double* z = logits.row_ptr(i);
        double zmax = z[0];
        for (std::size_t j = 1; j < C; ++j) zmax = std::max(zmax, z[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < C; ++j) denom += std::exp(z[j] - zmax);
        const double lse = zmax + std::log(denom);
        for (std::size_t j = 0; j < C; ++j) p[j] = std::exp(z[j] - lse);
        const int y = labels[i];

        if (epsilon > 0.0) {
            const double q_other = epsilon / static_cast<double>(C - 1);
            double qz = 0.0;
            for (std::size_t j = 0; j < C; ++j)
                qz += (static_cast<int>(j) == y ? 1.0 - epsilon : q_other) * z[j];
            total += lse - qz;
            for (std::size_t j = 0; j < C; ++j)
                out.d_logits(i, j) =
                    p[j] - (static_cast<int>(j) == y ? 1.0 - epsilon : q_other);
        } else {
            const double ce = lse - z[y];
            const double py = p[y];
            double coeff = 1.0;
            double li = ce;
            if (gamma > 0.0) {
                const double one_minus = std::max(1.0 - py, 0.0);
                const double focal = std::pow(one_minus, gamma);
                li = focal * ce;
                coeff = focal;
                if (one_minus > 1e-300)
                    coeff += gamma * std::pow(one_minus, gamma - 1.0) * py * ce;
            }
            total += li;
            for (std::size_t j = 0; j < C; ++j)
                out.d_logits(i, j) = coeff * (p[j] - (static_cast<int>(j) == y ? 1.0 : 0.0));
        }
    }
    const double invB = 1.0 / static_cast<double>(B);
    out.loss = total * invB;
    for (double& v : out.d_logits.data) v *= invB;
    return out;
}

LossGrad head_loss_and_grad(const Mat& embeddings, const Mat& weights,
                            const std::vector<int>& labels, const HeadConfig& cfg,
                            const HeadState& state) {
    const std::size_t B = embeddings.rows, C = weights.rows, D = embeddings.cols;
    if (weights.cols != D)
        throw std::invalid_argument("head_loss_and_grad: weight dim mismatch");

    const double eps = 1e-12;
    const auto xnorm = row_norms(embeddings, eps);
    const auto wnorm = row_norms(weights, eps);
    const Mat xhat = l2_normalize_rows(embeddings, eps);
    const Mat what = l2_normalize_rows(weights, eps);
    Mat cos = gemm(xhat, transpose(what));
    for (double& v : cos.data) v = clamp(v, -1.0, 1.0);

    std::vector<double> mags;
    if (cfg.kind == HeadKind::MagFace) mags = row_norms(embeddings, eps);

    const MarginPack mp = margin_pack(cos, labels, cfg, state, mags);
    const XentResult xe = softmax_xent(mp.logits, labels, cfg.epsilon, cfg.gamma);

    // d loss / d cos, including the cross terms of the emphasis heads
    Mat dcos(B, C);
    for (std::size_t i = 0; i < B; ++i) {
        const int y = labels[i];
        const double gy = xe.d_logits(i, y);
        double into_target = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            dcos(i, j) = xe.d_logits(i, j) * mp.dsame(i, j) + gy * mp.dtarget_dcos(i, j);
            into_target += xe.d_logits(i, j) * mp.dnontarget_dcosy(i, j);
        }
        dcos(i, y) += into_target;
    }

    Mat dxhat = gemm(dcos, what);
    Mat dwhat = gemm(transpose(dcos), xhat);

    LossGrad lg;
    lg.loss = xe.loss + mp.extra_loss;
    lg.d_embeddings = Mat(B, D);
    lg.d_weights = Mat(C, D);

    for (std::size_t i = 0; i < B; ++i) {
        double dot = 0.0;
        for (std::size_t d = 0; d < D; ++d) dot += dxhat(i, d) * xhat(i, d);
        double da = 0.0;
        if (!mp.dtarget_dmag.empty())
            da = xe.d_logits(i, labels[i]) * mp.dtarget_dmag[i] + mp.d_extra_dmag[i];
        for (std::size_t d = 0; d < D; ++d)
            lg.d_embeddings(i, d) =
                (dxhat(i, d) - dot * xhat(i, d)) / xnorm[i] + da * xhat(i, d);
    }
    for (std::size_t j = 0; j < C; ++j) {
        double dot = 0.0;
        for (std::size_t d = 0; d < D; ++d) dot += dwhat(j, d) * what(j, d);
        for (std::size_t d = 0; d < D; ++d)
            lg.d_weights(j, d) = (dwhat(j, d) - dot * what(j, d)) / wnorm[j];
    }

    if (mp.has_adam) {
        lg.d_adam_margins.assign(C, 0.0);
        const double invB = 1.0 / static_cast<double>(B);
        for (std::size_t i = 0; i < B; ++i) {
            const int y = labels[i];
            lg.d_adam_margins[y] += xe.d_logits(i, y) * (-mp.scale);
            lg.d_adam_margins[y] -= cfg.lambda_adam * invB;
        }
    }
    return lg;
}

CenterResult center_loss_step(const Mat& embeddings, const std::vector<int>& labels,
                              const Mat& centers, double alpha) {
    if (alpha <= 0.0 || alpha > 1.0)
        throw std::invalid_argument("center_loss_step: alpha must be in (0,1]");
    const std::size_t B = embeddings.rows, D = embeddings.cols;
    if (centers.cols != D)
        throw std::invalid_argument("center_loss_step: center dim mismatch");
    check_labels(labels, B, centers.rows);

    CenterResult r;
    r.d_embeddings = Mat(B, D);
    r.new_centers = centers;
    r.loss = 0.0;
    std::vector<std::size_t> counts(centers.rows, 0);
    for (int y : labels) ++counts[y];

    const double invB = 1.0 / static_cast<double>(B);
    Mat delta(centers.rows, D);
    for (std::size_t i = 0; i < B; ++i) {
        const int y = labels[i];
        for (std::size_t d = 0; d < D; ++d) {
            const double diff = embeddings(i, d) - centers(y, d);
            r.loss += 0.5 * diff * diff * invB;
            r.d_embeddings(i, d) = diff * invB;
            delta(y, d) += alpha * (-diff) / (1.0 + static_cast<double>(counts[y]));
        }
    }
    for (std::size_t j = 0; j < centers.rows; ++j)
        for (std::size_t d = 0; d < D; ++d) r.new_centers(j, d) -= delta(j, d);
    return r;
}

TripletResult triplet_loss(const Mat& anchor, const Mat& positive, const Mat& negative,
                           double margin) {
    if (!anchor.same_shape(positive) || !anchor.same_shape(negative))
        throw std::invalid_argument("triplet_loss: shape mismatch");
    if (margin < 0.0) throw std::invalid_argument("triplet_loss: margin must be >= 0");
    const std::size_t B = anchor.rows, D = anchor.cols;
    TripletResult r;
    r.d_anchor = Mat(B, D);
    r.d_positive = Mat(B, D);
    r.d_negative = Mat(B, D);
    r.loss = 0.0;
    const double invB = 1.0 / static_cast<double>(B);
    for (std::size_t i = 0; i < B; ++i) {
        double dp = 0.0, dn = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            const double ap = anchor(i, d) - positive(i, d);
            const double an = anchor(i, d) - negative(i, d);
            dp += ap * ap;
            dn += an * an;
        }
        const double li = dp - dn + margin;
        if (li <= 0.0) continue;  // inactive triplet, zero gradient
        r.loss += li * invB;
        for (std::size_t d = 0; d < D; ++d) {
            r.d_anchor(i, d) = 2.0 * (negative(i, d) - positive(i, d)) * invB;
            r.d_positive(i, d) = -2.0 * (anchor(i, d) - positive(i, d)) * invB;
            r.d_negative(i, d) = 2.0 * (anchor(i, d) - negative(i, d)) * invB;
        }
    }
    return r;
}

CircleResult circle_loss(const std::vector<double>& sp, const std::vector<double>& sn,
                         double m, double gamma) {
    if (sp.empty() || sn.empty())
        throw std::invalid_argument("circle_loss: sp and sn must be non-empty");
    if (m <= 0.0 || m >= 1.0) throw std::invalid_argument("circle_loss: m must be in (0,1)");
    if (gamma <= 0.0) throw std::invalid_argument("circle_loss: gamma must be > 0");

    const double delta_p = 1.0 - m, delta_n = m;
    // log-sum-exp form for numerical stability at large gamma
    auto logsum = [](const std::vector<double>& e) {
        double mx = e[0];
        for (double v : e) mx = std::max(mx, v);
        double s = 0.0;
        for (double v : e) s += std::exp(v - mx);
        return std::make_pair(mx + std::log(s), mx);
    };

    std::vector<double> en(sn.size()), ep(sp.size());
    for (std::size_t k = 0; k < sn.size(); ++k) {
        const double an = std::max(sn[k] + m, 0.0);
        en[k] = gamma * an * (sn[k] - delta_n);
    }
    for (std::size_t k = 0; k < sp.size(); ++k) {
        const double apk = std::max(1.0 + m - sp[k], 0.0);
        ep[k] = -gamma * apk * (sp[k] - delta_p);
    }
    const auto [ln_a, mxa] = logsum(en);
    const auto [ln_b, mxb] = logsum(ep);
    const double z = ln_a + ln_b;  // log(A*B)
    // L = log(1 + exp(z)), computed stably
    CircleResult r;
    r.loss = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    const double sigma = 1.0 / (1.0 + std::exp(-z));  // AB/(1+AB)

    r.d_sn.assign(sn.size(), 0.0);
    r.d_sp.assign(sp.size(), 0.0);
    for (std::size_t k = 0; k < sn.size(); ++k) {
        const double an = std::max(sn[k] + m, 0.0);  // detached alpha
        const double share = std::exp(en[k] - ln_a);
        r.d_sn[k] = sigma * share * gamma * an;
    }
    for (std::size_t k = 0; k < sp.size(); ++k) {
        const double apk = std::max(1.0 + m - sp[k], 0.0);
        const double share = std::exp(ep[k] - ln_b);
        r.d_sp[k] = -sigma * share * gamma * apk;
    }
    return r;
}

HeadState adaptive_state_update(const HeadState& state, const Mat& cos, const Mat& logits,
                                const std::vector<int>& labels, const HeadConfig& cfg) {
    HeadState next = state;
    const std::size_t B = cos.rows;
    check_labels(labels, B, cos.cols);
    if (cfg.kind == HeadKind::AdaCos) {
        double b_avg = 0.0;
        std::vector<double> thetas(B);
        for (std::size_t i = 0; i < B; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < cos.cols; ++j)
                if (static_cast<int>(j) != labels[i]) sum += std::exp(logits(i, j));
            b_avg += sum;
            thetas[i] = std::acos(clamp(cos(i, labels[i]), -1.0, 1.0));
        }
        b_avg /= static_cast<double>(B);
        std::nth_element(thetas.begin(), thetas.begin() + thetas.size() / 2, thetas.end());
        const double theta_med = thetas[thetas.size() / 2];
        next.adacos_scale = std::log(b_avg) / std::cos(std::min(kPi / 4.0, theta_med));
        if (!(next.adacos_scale > 0.0)) next.adacos_scale = state.adacos_scale;
    } else if (cfg.kind == HeadKind::CurricularFace) {
        double mean_cy = 0.0;
        for (std::size_t i = 0; i < B; ++i) mean_cy += cos(i, labels[i]);
        mean_cy /= static_cast<double>(B);
        next.curricular_t =
            clamp((1.0 - cfg.ema_alpha) * state.curricular_t + cfg.ema_alpha * mean_cy,
                  0.0, 1.0);
    }
    return next;
}

}  // namespace fevl
