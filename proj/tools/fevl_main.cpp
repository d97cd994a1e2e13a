// fevl: batch front end over the library. Subcommands: align, prep, train,
// eval, schedule, version. Exit codes: 0 success, 1 usage/config error,
// 2 data error.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "fevl/align.hpp"
#include "fevl/data.hpp"
#include "fevl/eval.hpp"
#include "fevl/heads.hpp"
#include "fevl/image.hpp"
#include "fevl/schedules.hpp"
#include "fevl/sharded.hpp"
#include "fevl/trainer.hpp"

namespace {

constexpr const char* kVersion = "1.0.0";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using ConfigValue = std::variant<double, std::string>;

// Flat namespaced config with documented defaults; unknown keys rejected.
std::map<std::string, ConfigValue> default_config() {
    return {
        {"seed", 0.0},
        {"head.kind", std::string("arcface")},
        {"head.s", 64.0},
        {"head.m", -1.0},  // -1: use the per-kind default
        {"head.gamma", 0.0},
        {"head.epsilon", 0.0},
        {"sched.kind", std::string("cosine")},
        {"sched.eta0", 0.1},
        {"sched.warmup", 0.0},
        {"sched.factor", 0.1},
        {"sched.milestones", std::string("")},  // comma-separated ints
        {"train.steps", 1000.0},
        {"train.batch", 32.0},
        {"train.momentum", 0.9},
        {"train.wd", 5e-4},
        {"shard.p", 0.0},
        {"backbone.kind", std::string("linear")},
        {"backbone.hidden", 32.0},
        {"backbone.emb", 16.0},
        {"data.classes", 10.0},
        {"data.dim", 32.0},
        {"data.per_class", 20.0},
        {"data.separation", 4.0},
        {"data.num_min", 10.0},
    };
}

void merge_config_file(std::map<std::string, ConfigValue>& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw UsageError(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        const auto it = cfg.find(key);
        if (it == cfg.end()) throw UsageError("unknown config key: " + key);
        if (std::holds_alternative<double>(it->second)) {
            if (!value.is_number())
                throw UsageError("config key " + key + " must be a number");
            it->second = value.get<double>();
        } else {
            if (!value.is_string())
                throw UsageError("config key " + key + " must be a string");
            it->second = value.get<std::string>();
        }
    }
}

double num(const std::map<std::string, ConfigValue>& cfg, const std::string& key) {
    return std::get<double>(cfg.at(key));
}
std::string str(const std::map<std::string, ConfigValue>& cfg, const std::string& key) {
    return std::get<std::string>(cfg.at(key));
}

std::vector<int> parse_milestones(const std::string& s) {
    std::vector<int> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stoi(tok));
    return out;
}

fevl::Schedule schedule_from(const std::map<std::string, ConfigValue>& cfg, int total) {
    fevl::Schedule s;
    const std::string kind = str(cfg, "sched.kind");
    if (kind == "cosine")
        s.kind = fevl::ScheduleKind::WarmupCosine;
    else if (kind == "step")
        s.kind = fevl::ScheduleKind::WarmupStep;
    else
        throw UsageError("sched.kind must be cosine or step, got " + kind);
    s.eta0 = num(cfg, "sched.eta0");
    s.warmup_steps = static_cast<int>(num(cfg, "sched.warmup"));
    s.total_steps = total;
    s.step_factor = num(cfg, "sched.factor");
    s.step_milestones = parse_milestones(str(cfg, "sched.milestones"));
    return s;
}

std::ostream& open_or_stdout(std::ofstream& file, const std::string& path) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw std::runtime_error("cannot open output " + path);
    return file;
}

int cmd_schedule(const std::map<std::string, ConfigValue>& cfg, int total,
                 const std::string& out_path) {
    const fevl::Schedule s = schedule_from(cfg, total);
    std::ofstream file;
    std::ostream& out = open_or_stdout(file, out_path);
    out << "t,lr\n";
    out.precision(17);
    for (int t = 0; t <= total; ++t) out << t << ',' << lr_at(s, t) << '\n';
    return 0;
}

int cmd_prep(const std::string& manifest_path, const std::string& out_path,
             std::size_t num_min) {
    const fevl::DatasetManifest m = fevl::load_manifest(manifest_path);
    const fevl::DatasetManifest f = fevl::filter_low_shot(m, num_min);
    fevl::save_manifest(f, out_path);
    const std::size_t classes_removed = m.num_classes() - f.num_classes();
    const std::size_t records_removed = m.records.size() - f.records.size();
    std::cout << "removed " << classes_removed
              << (classes_removed == 1 ? " class / " : " classes / ")
              << records_removed << (records_removed == 1 ? " record" : " records")
              << "\n";
    return 0;
}

int cmd_align(const std::string& landmarks_path, const std::string& data_root,
              const std::string& out_dir) {
    std::ifstream in(landmarks_path);
    if (!in) throw std::runtime_error("cannot open landmark file " + landmarks_path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty landmark file");
    std::filesystem::create_directories(out_dir);
    std::size_t count = 0, lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string path;
        if (!std::getline(ls, path, ','))
            throw std::runtime_error("malformed landmark row at line " +
                                     std::to_string(lineno));
        fevl::LandmarkSet lm;
        std::string tok;
        for (int i = 0; i < 5; ++i) {
            if (!std::getline(ls, tok, ','))
                throw std::runtime_error("malformed landmark row at line " +
                                         std::to_string(lineno));
            lm.x[i] = std::stod(tok);
            if (!std::getline(ls, tok, ','))
                throw std::runtime_error("malformed landmark row at line " +
                                         std::to_string(lineno));
            lm.y[i] = std::stod(tok);
        }
        const std::filesystem::path src =
            data_root.empty() ? std::filesystem::path(path)
                              : std::filesystem::path(data_root) / path;
        const fevl::Image img = fevl::read_ppm(src.string());
        const fevl::Image aligned = fevl::align_face(img, lm);
        const std::filesystem::path dst =
            std::filesystem::path(out_dir) / std::filesystem::path(path).filename();
        fevl::write_ppm(aligned, dst.string());
        ++count;
    }
    std::cout << "aligned " << count << (count == 1 ? " image" : " images") << "\n";
    return 0;
}

fevl::TrainConfig train_config_from(const std::map<std::string, ConfigValue>& cfg) {
    fevl::TrainConfig tc;
    tc.head = fevl::make_head_config(fevl::head_kind_from_name(str(cfg, "head.kind")));
    tc.head.s = num(cfg, "head.s");
    if (num(cfg, "head.m") >= 0.0) tc.head.m = num(cfg, "head.m");
    tc.head.gamma = num(cfg, "head.gamma");
    tc.head.epsilon = num(cfg, "head.epsilon");
    tc.steps = static_cast<std::size_t>(num(cfg, "train.steps"));
    tc.batch_size = static_cast<std::size_t>(num(cfg, "train.batch"));
    tc.momentum = num(cfg, "train.momentum");
    tc.weight_decay = num(cfg, "train.wd");
    tc.shard_count = static_cast<std::size_t>(num(cfg, "shard.p"));
    tc.seed = static_cast<std::uint64_t>(num(cfg, "seed"));
    tc.schedule = schedule_from(cfg, static_cast<int>(tc.steps));
    return tc;
}

int cmd_train(const std::map<std::string, ConfigValue>& cfg, const std::string& model_out,
              const std::string& log_out, const std::string& trace_out) {
    const fevl::TrainConfig tc = train_config_from(cfg);
    const auto classes = static_cast<std::size_t>(num(cfg, "data.classes"));
    const auto dim = static_cast<std::size_t>(num(cfg, "data.dim"));
    const auto per_class = static_cast<std::size_t>(num(cfg, "data.per_class"));

    fevl::Mat features;
    std::vector<int> labels;
    fevl::make_blobs(classes, dim, per_class, num(cfg, "data.separation"), tc.seed,
                     &features, &labels);

    const std::string bk = str(cfg, "backbone.kind");
    fevl::Backbone::Kind kind;
    if (bk == "linear")
        kind = fevl::Backbone::Kind::Linear;
    else if (bk == "one_hidden")
        kind = fevl::Backbone::Kind::OneHidden;
    else
        throw UsageError("backbone.kind must be linear or one_hidden, got " + bk);
    const fevl::Backbone bb = fevl::make_backbone(
        kind, dim, static_cast<std::size_t>(num(cfg, "backbone.hidden")),
        static_cast<std::size_t>(num(cfg, "backbone.emb")), tc.seed + 1);

    const fevl::TrainResult r = fevl::train(features, labels, bb, tc);
    fevl::save_model(r.model, model_out);
    if (!log_out.empty()) fevl::save_metric_log(r.log, log_out);

    if (!trace_out.empty()) {
        if (tc.shard_count < 2)
            throw UsageError("--trace requires shard.p >= 2");
        // One sharded forward/backward over the full dataset with the trained
        // weights, logged phase by phase.
        const fevl::Mat emb = fevl::embed(r.model, features);
        const auto shards = fevl::make_shards(r.model.head_weights, tc.shard_count);
        fevl::ReduceTrace trace;
        fevl::sharded_loss_and_grad(emb, shards, labels, tc.head, r.model.head_state,
                                    &trace);
        std::ofstream out(trace_out);
        if (!out) throw std::runtime_error("cannot open trace output " + trace_out);
        out << trace.to_text();
    }
    std::cout << "trained " << tc.steps << " steps, final loss " << r.log.back().loss
              << ", model " << model_out << "\n";
    return 0;
}

// Features CSV: header then `path,f0,f1,...` rows; all rows the same width.
void load_features_csv(const std::string& path, std::vector<std::string>* names,
                       fevl::Mat* features) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open features " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty features file");
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        if (!std::getline(ls, tok, ','))
            throw std::runtime_error("malformed features row at line " +
                                     std::to_string(lineno));
        names->push_back(tok);
        std::vector<double> row;
        while (std::getline(ls, tok, ',')) row.push_back(std::stod(tok));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("ragged features row at line " +
                                     std::to_string(lineno));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("no feature rows in " + path);
    *features = fevl::Mat(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) (*features)(i, j) = rows[i][j];
}

int cmd_eval(const std::string& model_path, const std::string& features_path,
             const std::string& pairs_path, std::size_t k, const std::string& report_out,
             const std::string& roc_out) {
    const fevl::TrainedModel model = fevl::load_model(model_path);
    std::vector<std::string> names;
    fevl::Mat features;
    load_features_csv(features_path, &names, &features);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < names.size(); ++i) index[names[i]] = i;

    const auto raw = fevl::load_pairs_file(pairs_path);
    fevl::PairSet pairs;
    for (const auto& pr : raw) {
        const auto a = index.find(pr.path_a), b = index.find(pr.path_b);
        if (a == index.end() || b == index.end())
            throw std::runtime_error("pair references unknown path " +
                                     (a == index.end() ? pr.path_a : pr.path_b));
        pairs.pairs.push_back({a->second, b->second, pr.same});
    }

    const fevl::Mat emb = fevl::embed(model, features);
    const fevl::PairSet scored = fevl::score_pairs(emb, pairs);
    const fevl::KFoldResult kf = fevl::verify_kfold(scored, k);
    const auto roc = fevl::roc_points(scored);

    std::ofstream file;
    std::ostream& out = open_or_stdout(file, report_out);
    out.precision(17);
    out << "metric,value\n";
    out << "mean_accuracy," << kf.mean_accuracy << '\n';
    out << "std_accuracy," << kf.std_accuracy << '\n';
    out << "tar_at_far_1e-1," << fevl::tar_at_far(roc, 1e-1) << '\n';
    out << "tar_at_far_1e-2," << fevl::tar_at_far(roc, 1e-2) << '\n';

    if (!roc_out.empty()) {
        std::ofstream rf(roc_out);
        if (!rf) throw std::runtime_error("cannot open roc output " + roc_out);
        rf.precision(17);
        rf << "threshold,far,tar\n";
        for (const auto& pt : roc)
            rf << pt.threshold << ',' << pt.far << ',' << pt.tar << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fevl: face-embedding training and evaluation kit"};
    app.require_subcommand(1);

    std::string config_path;
    double seed = 0.0;
    bool seed_set = false;
    app.add_option("--config", config_path, "JSON config file (flat namespaced keys)");
    app.add_option("--seed", seed, "master random seed (overrides config)")
        ->default_val("0")
        ->each([&](const std::string&) { seed_set = true; });

    auto* sub_version = app.add_subcommand("version", "print the tool version");

    auto* sub_schedule =
        app.add_subcommand("schedule", "dump a learning-rate schedule as CSV t,lr");
    std::string sched_kind = "cosine", sched_milestones, sched_out;
    double sched_eta0 = 0.1, sched_factor = 0.1;
    int sched_warmup = 0, sched_total = 100;
    sub_schedule->add_option("--kind", sched_kind, "cosine or step")->capture_default_str();
    sub_schedule->add_option("--eta0", sched_eta0, "base learning rate")
        ->capture_default_str();
    sub_schedule->add_option("--warmup", sched_warmup, "warmup steps")
        ->capture_default_str();
    sub_schedule->add_option("--total", sched_total, "total steps")->capture_default_str();
    sub_schedule->add_option("--milestones", sched_milestones,
                             "step milestones, comma separated");
    sub_schedule->add_option("--factor", sched_factor, "step decay factor")
        ->capture_default_str();
    sub_schedule->add_option("--out", sched_out, "output CSV path (default stdout)");

    auto* sub_prep = app.add_subcommand("prep", "filter low-shot classes from a manifest");
    std::string prep_manifest, prep_out = "prepped.csv";
    std::size_t prep_num_min = 10;
    sub_prep->add_option("--manifest", prep_manifest, "input manifest CSV")->required();
    sub_prep->add_option("--out", prep_out, "output manifest CSV")->capture_default_str();
    sub_prep->add_option("--num-min", prep_num_min, "minimum images per class")
        ->capture_default_str();

    auto* sub_align = app.add_subcommand("align", "align faces from a landmark CSV");
    std::string align_landmarks, align_root, align_out = "aligned";
    sub_align
        ->add_option("--landmarks", align_landmarks,
                     "CSV path,x1,y1,...,x5,y5 with header")
        ->required();
    sub_align->add_option("--data-root", align_root, "prefix for image paths");
    sub_align->add_option("--out-dir", align_out, "output directory")
        ->capture_default_str();

    auto* sub_train = app.add_subcommand("train", "train a toy model on Gaussian blobs");
    std::string train_out = "model.bin", train_log, train_trace;
    double train_steps = -1.0;
    sub_train->add_option("--out", train_out, "model output path")->capture_default_str();
    sub_train->add_option("--log", train_log, "metric log CSV path");
    sub_train->add_option("--steps", train_steps, "training steps (overrides config)");
    sub_train->add_option("--trace", train_trace,
                          "write a sharded-softmax reduction trace (needs shard.p >= 2)");

    auto* sub_eval = app.add_subcommand("eval", "k-fold pair verification report");
    std::string eval_model, eval_features, eval_pairs, eval_report, eval_roc;
    std::size_t eval_k = 10;
    sub_eval->add_option("--model", eval_model, "FEVL1 model file")->required();
    sub_eval->add_option("--features", eval_features, "features CSV path,f0,f1,...")
        ->required();
    sub_eval->add_option("--pairs", eval_pairs, "pairs file path1 path2 flag")->required();
    sub_eval->add_option("--k", eval_k, "number of folds")->capture_default_str();
    sub_eval->add_option("--report", eval_report, "report CSV path (default stdout)");
    sub_eval->add_option("--roc", eval_roc, "ROC CSV path");

    // Let --config/--seed appear after the subcommand too.
    for (CLI::App* sub : {sub_version, sub_schedule, sub_prep, sub_align, sub_train,
                          sub_eval})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        auto cfg = default_config();
        if (!config_path.empty()) merge_config_file(cfg, config_path);
        if (seed_set) cfg["seed"] = seed;

        if (sub_version->parsed()) {
            std::cout << "fevl " << kVersion << "\n";
            return 0;
        }
        if (sub_schedule->parsed()) {
            cfg["sched.kind"] = sched_kind;
            cfg["sched.eta0"] = sched_eta0;
            cfg["sched.warmup"] = static_cast<double>(sched_warmup);
            cfg["sched.factor"] = sched_factor;
            cfg["sched.milestones"] = sched_milestones;
            return cmd_schedule(cfg, sched_total, sched_out);
        }
        if (sub_prep->parsed()) return cmd_prep(prep_manifest, prep_out, prep_num_min);
        if (sub_align->parsed()) return cmd_align(align_landmarks, align_root, align_out);
        if (sub_train->parsed()) {
            if (train_steps >= 0.0) cfg["train.steps"] = train_steps;
            return cmd_train(cfg, train_out, train_log, train_trace);
        }
        if (sub_eval->parsed())
            return cmd_eval(eval_model, eval_features, eval_pairs, eval_k, eval_report,
                            eval_roc);
        std::cerr << "no subcommand given\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
