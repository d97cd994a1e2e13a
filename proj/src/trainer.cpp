#include "fevl/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "fevl/data.hpp"
#include "fevl/sharded.hpp"

namespace fevl {

Backbone make_backbone(Backbone::Kind kind, std::size_t d_in, std::size_t hidden,
                       std::size_t d_emb, std::uint64_t seed) {
    Prng rng(seed);
    Backbone bb;
    bb.kind = kind;
    const std::size_t out1 = kind == Backbone::Kind::Linear ? d_emb : hidden;
    bb.w1 = Mat(d_in, out1);
    const double s1 = std::sqrt(2.0 / static_cast<double>(d_in));
    for (double& v : bb.w1.data) v = rng.normal(0.0, s1);
    if (kind == Backbone::Kind::OneHidden) {
        bb.w2 = Mat(hidden, d_emb);
        const double s2 = std::sqrt(2.0 / static_cast<double>(hidden));
        for (double& v : bb.w2.data) v = rng.normal(0.0, s2);
    }
    return bb;
}

Mat backbone_forward(const Backbone& bb, const Mat& x, BackboneCache* cache) {
    if (x.cols != bb.w1.rows)
        throw std::invalid_argument("backbone_forward: input dim mismatch");
    if (bb.kind == Backbone::Kind::Linear) return gemm(x, bb.w1);
    Mat h = gemm(x, bb.w1);
    for (double& v : h.data) v = std::tanh(v);
    if (cache) cache->hidden = h;
    return gemm(h, bb.w2);
}

BackboneGrads backbone_backward(const Backbone& bb, const Mat& x,
                                const BackboneCache& cache, const Mat& d_embeddings) {
    BackboneGrads g;
    if (bb.kind == Backbone::Kind::Linear) {
        g.d_w1 = gemm(transpose(x), d_embeddings);
        return g;
    }
    g.d_w2 = gemm(transpose(cache.hidden), d_embeddings);
    Mat dh = gemm(d_embeddings, transpose(bb.w2));
    for (std::size_t i = 0; i < dh.data.size(); ++i)
        dh.data[i] *= 1.0 - cache.hidden.data[i] * cache.hidden.data[i];
    g.d_w1 = gemm(transpose(x), dh);
    return g;
}

void sgd_step(std::map<std::string, Mat*> params, const std::map<std::string, Mat>& grads,
              OptimState& opt, double lr, double momentum, double weight_decay) {
    if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: lr must be > 0");
    for (const auto& [name, g] : grads)
        for (double v : g.data)
            if (!std::isfinite(v))
                throw std::runtime_error("sgd_step: non-finite gradient in " + name);
    for (auto& [name, param] : params) {
        const auto it = grads.find(name);
        if (it == grads.end()) continue;
        const Mat& g = it->second;
        if (!param->same_shape(g))
            throw std::invalid_argument("sgd_step: shape mismatch for " + name);
        Mat& v = opt.momentum.try_emplace(name, Mat(g.rows, g.cols)).first->second;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            v.data[i] = momentum * v.data[i] + g.data[i] + weight_decay * param->data[i];
            param->data[i] -= lr * v.data[i];
        }
    }
    ++opt.step;
}

TrainResult train(const Mat& features, const std::vector<int>& labels,
                  const Backbone& init_backbone, const TrainConfig& cfg) {
    if (features.rows != labels.size())
        throw std::invalid_argument("train: feature/label count mismatch");
    int num_classes = 0;
    for (int y : labels) num_classes = std::max(num_classes, y + 1);

    // Manifest over the in-memory rows, for weighted sampling.
    std::vector<ManifestRecord> rows(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        rows[i] = {"row" + std::to_string(i), labels[i]};
    const DatasetManifest manifest = make_manifest(rows);

    TrainResult out;
    out.model.backbone = init_backbone;
    const std::size_t D = init_backbone.embedding_dim();

    Prng rng(cfg.seed);
    Prng wrng = rng.split(1);
    out.model.head_weights = Mat(static_cast<std::size_t>(num_classes), D);
    const double ws = std::sqrt(1.0 / static_cast<double>(D));
    for (double& v : out.model.head_weights.data) v = wrng.normal(0.0, ws);
    out.model.head_state = init_head_state(cfg.head, static_cast<std::size_t>(num_classes));

    OptimState opt;
    Prng srng = rng.split(2);
    HeadConfig head_cfg = cfg.head;

    for (std::size_t t = 0; t < cfg.steps; ++t) {
        const double lr = lr_at(cfg.schedule, static_cast<int>(t));
        const auto idx = weighted_sample(manifest, srng, cfg.batch_size);

        Mat xb(cfg.batch_size, features.cols);
        std::vector<int> yb(cfg.batch_size);
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            for (std::size_t d = 0; d < features.cols; ++d)
                xb(i, d) = features(idx[i], d);
            yb[i] = manifest.records[idx[i]].label;
        }

        BackboneCache cache;
        const Mat emb = backbone_forward(out.model.backbone, xb, &cache);

        LossGrad lg;
        if (cfg.shard_count >= 2) {
            const auto shards = make_shards(out.model.head_weights, cfg.shard_count);
            lg = sharded_loss_and_grad(emb, shards, yb, head_cfg, out.model.head_state);
        } else {
            lg = head_loss_and_grad(emb, out.model.head_weights, yb, head_cfg,
                                    out.model.head_state);
        }
        if (!std::isfinite(lg.loss) || lg.loss > cfg.divergence_guard)
            throw std::runtime_error("train: diverged at step " + std::to_string(t) +
                                     " (loss " + std::to_string(lg.loss) + ")");

        if (head_cfg.kind == HeadKind::AdaCos || head_cfg.kind == HeadKind::CurricularFace) {
            const Mat cos = cosine_logits(emb, out.model.head_weights);
            const Mat logits = margin_transform(cos, yb, head_cfg, out.model.head_state, {});
            out.model.head_state =
                adaptive_state_update(out.model.head_state, cos, logits, yb, head_cfg);
        }
        if (head_cfg.kind == HeadKind::SphereFace)
            head_cfg.sphere_lambda = std::max(
                head_cfg.sphere_lambda * head_cfg.sphere_lambda_decay,
                head_cfg.sphere_lambda_floor);

        const auto bg = backbone_backward(out.model.backbone, xb, cache, lg.d_embeddings);
        std::map<std::string, Mat*> params = {{"backbone.w1", &out.model.backbone.w1},
                                              {"head.weights", &out.model.head_weights}};
        std::map<std::string, Mat> grads;
        grads.emplace("backbone.w1", bg.d_w1);
        grads.emplace("head.weights", lg.d_weights);
        if (out.model.backbone.kind == Backbone::Kind::OneHidden) {
            params.emplace("backbone.w2", &out.model.backbone.w2);
            grads.emplace("backbone.w2", bg.d_w2);
        }
        if (lr > 0.0)
            sgd_step(params, grads, opt, lr, cfg.momentum, cfg.weight_decay);

        if (!lg.d_adam_margins.empty() && lr > 0.0)
            for (std::size_t c = 0; c < lg.d_adam_margins.size(); ++c)
                out.model.head_state.adam_margins[c] = std::max(
                    0.0, out.model.head_state.adam_margins[c] - lr * lg.d_adam_margins[c]);

        out.log.push_back({t, lr, lg.loss});
    }
    return out;
}

DistillResult distill_loss(const Mat& student_logits, const Mat& teacher_logits,
                           double temperature, double beta,
                           const std::vector<int>& labels) {
    if (!student_logits.same_shape(teacher_logits))
        throw std::invalid_argument("distill_loss: shape mismatch");
    if (temperature <= 0.0)
        throw std::invalid_argument("distill_loss: temperature must be > 0");
    if (beta < 0.0 || beta > 1.0)
        throw std::invalid_argument("distill_loss: beta must be in [0,1]");
    const std::size_t B = student_logits.rows, C = student_logits.cols;

    auto softmax_row = [C](const double* z, double scale, std::vector<double>& p) {
        double mx = z[0] * scale;
        for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, z[j] * scale);
        double denom = 0.0;
        for (std::size_t j = 0; j < C; ++j) denom += std::exp(z[j] * scale - mx);
        const double lse = mx + std::log(denom);
        for (std::size_t j = 0; j < C; ++j) p[j] = std::exp(z[j] * scale - lse);
        return lse;
    };

    DistillResult r;
    r.loss = 0.0;
    r.d_student_logits = Mat(B, C);
    const double invB = 1.0 / static_cast<double>(B);
    const double invT = 1.0 / temperature;
    std::vector<double> p(C), pt(C), q(C);
    for (std::size_t i = 0; i < B; ++i) {
        const double* zs = student_logits.row_ptr(i);
        const double* zt = teacher_logits.row_ptr(i);
        const double lse1 = softmax_row(zs, 1.0, p);
        softmax_row(zs, invT, pt);
        softmax_row(zt, invT, q);
        const int y = labels.at(i);
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw std::invalid_argument("distill_loss: label out of range");

        const double ce = lse1 - zs[y];
        double kl = 0.0;
        for (std::size_t j = 0; j < C; ++j)
            if (q[j] > 0.0) kl += q[j] * (std::log(q[j]) - std::log(std::max(pt[j], 1e-300)));
        r.loss += ((1.0 - beta) * ce + beta * temperature * temperature * kl) * invB;
        for (std::size_t j = 0; j < C; ++j) {
            const double dce = p[j] - (static_cast<int>(j) == y ? 1.0 : 0.0);
            const double dkl = temperature * (pt[j] - q[j]);
            r.d_student_logits(i, j) = ((1.0 - beta) * dce + beta * dkl) * invB;
        }
    }
    return r;
}

Mat embed(const TrainedModel& model, const Mat& features) {
    return backbone_forward(model.backbone, features);
}

FilterReport self_train_filter(const Mat& features, const std::vector<int>& labels,
                               const TrainedModel& teacher, double scale, double tau) {
    if (tau <= 0.0 || tau >= 1.0)
        throw std::invalid_argument("self_train_filter: tau must be in (0,1)");
    const Mat emb = embed(teacher, features);
    const Mat cos = cosine_logits(emb, teacher.head_weights);
    const std::size_t C = cos.cols;

    FilterReport rep;
    rep.dropped_per_class.assign(C, 0);
    std::vector<double> p(C);
    for (std::size_t i = 0; i < cos.rows; ++i) {
        const int y = labels.at(i);
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw std::invalid_argument("self_train_filter: label out of range");
        double mx = cos(i, 0) * scale;
        for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, cos(i, j) * scale);
        double denom = 0.0;
        for (std::size_t j = 0; j < C; ++j) denom += std::exp(cos(i, j) * scale - mx);
        const double conf = std::exp(cos(i, y) * scale - mx) / denom;
        if (conf < tau) {
            ++rep.dropped_per_class[y];
            ++rep.total_dropped;
        } else {
            rep.kept_indices.push_back(i);
        }
    }
    if (rep.kept_indices.empty())
        throw std::runtime_error("self_train_filter: every record was dropped");
    return rep;
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}
void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}
std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Mat& m) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, m.rows);
    write_u64(out, m.cols);
    for (double v : m.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        write_u64(out, bits);
    }
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out.write("FEVL1", 5);

    std::map<std::string, Mat> tensors;
    tensors["backbone.kind"] =
        Mat{{model.backbone.kind == Backbone::Kind::Linear ? 0.0 : 1.0}};
    tensors["backbone.w1"] = model.backbone.w1;
    if (model.backbone.kind == Backbone::Kind::OneHidden)
        tensors["backbone.w2"] = model.backbone.w2;
    tensors["head.weights"] = model.head_weights;
    tensors["state.adacos_scale"] = Mat{{model.head_state.adacos_scale}};
    tensors["state.curricular_t"] = Mat{{model.head_state.curricular_t}};
    if (!model.head_state.adam_margins.empty()) {
        Mat m(1, model.head_state.adam_margins.size());
        m.data = model.head_state.adam_margins;
        tensors["state.adam_margins"] = m;
    }
    if (model.head_state.centers.rows > 0)
        tensors["state.centers"] = model.head_state.centers;

    write_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) write_tensor(out, name, m);
    if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "FEVL1", 5) != 0)
        throw std::runtime_error("load_model: bad magic in " + path);

    std::map<std::string, Mat> tensors;
    const std::uint32_t count = read_u32(in);
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t nlen = read_u32(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        const std::uint64_t rows = read_u64(in), cols = read_u64(in);
        Mat m(rows, cols);
        for (double& v : m.data) {
            const std::uint64_t bits = read_u64(in);
            std::memcpy(&v, &bits, 8);
        }
        if (!in) throw std::runtime_error("load_model: truncated file " + path);
        tensors[name] = std::move(m);
    }

    TrainedModel model;
    model.backbone.kind = tensors.at("backbone.kind").data[0] == 0.0
                              ? Backbone::Kind::Linear
                              : Backbone::Kind::OneHidden;
    model.backbone.w1 = tensors.at("backbone.w1");
    if (model.backbone.kind == Backbone::Kind::OneHidden)
        model.backbone.w2 = tensors.at("backbone.w2");
    model.head_weights = tensors.at("head.weights");
    model.head_state.adacos_scale = tensors.at("state.adacos_scale").data[0];
    model.head_state.curricular_t = tensors.at("state.curricular_t").data[0];
    if (auto it = tensors.find("state.adam_margins"); it != tensors.end())
        model.head_state.adam_margins = it->second.data;
    if (auto it = tensors.find("state.centers"); it != tensors.end())
        model.head_state.centers = it->second;
    return model;
}

void save_metric_log(const std::vector<MetricRow>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_metric_log: cannot open " + path);
    out << "step,lr,loss\n";
    out.precision(17);
    for (const auto& row : log)
        out << row.step << ',' << row.lr << ',' << row.loss << '\n';
}

void make_blobs(std::size_t num_classes, std::size_t dim, std::size_t per_class,
                double separation, std::uint64_t seed, Mat* features,
                std::vector<int>* labels) {
    if (num_classes > dim)
        throw std::invalid_argument("make_blobs: need dim >= num_classes");
    Prng rng(seed);
    const double a = separation / std::sqrt(2.0);  // ||a e_i - a e_j|| = separation
    *features = Mat(num_classes * per_class, dim);
    labels->assign(num_classes * per_class, 0);
    std::size_t row = 0;
    for (std::size_t c = 0; c < num_classes; ++c)
        for (std::size_t k = 0; k < per_class; ++k, ++row) {
            (*labels)[row] = static_cast<int>(c);
            for (std::size_t d = 0; d < dim; ++d)
                (*features)(row, d) = rng.normal(0.0, 1.0) + (d == c ? a : 0.0);
        }
}

}  // namespace fevl
