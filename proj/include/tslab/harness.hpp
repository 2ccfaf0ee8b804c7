#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tslab/data.hpp"
#include "tslab/jsonio.hpp"
#include "tslab/losses.hpp"
#include "tslab/nn.hpp"
#include "tslab/optimizer.hpp"
#include "tslab/osr_eval.hpp"
#include "tslab/schedule.hpp"

// Experiment orchestration: a config describes dataset, loss, temperature
// schedule and optimizer; train() runs the schedule-wired loop (temperature
// and learning rate set once per epoch), attaches a linear-probe classifier
// for contrastively trained encoders, and evaluate() produces the open-set
// metrics plus a scores file.

namespace tslab {

enum class LossKind { CE, SupCon, SupConLS };

inline const char* to_string(LossKind k) {
    switch (k) {
        case LossKind::CE: return "ce";
        case LossKind::SupCon: return "supcon";
        case LossKind::SupConLS: return "supcon_ls";
    }
    return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "ce") return LossKind::CE;
    if (s == "supcon") return LossKind::SupCon;
    if (s == "supcon_ls") return LossKind::SupConLS;
    throw std::invalid_argument("unknown loss: '" + s + "'");
}

struct ProbeConfig {
    int epochs = 100;
    double learning_rate = 0.05;  // constant; the probe does not follow the cosine schedule
    double momentum = 0.9;
    double weight_decay = 0.0;
};

struct AugmentConfig {
    double sigma = 0.1;
    double scale_lo = 0.9;
    double scale_hi = 1.1;
};

struct NetworkConfig {
    std::vector<std::size_t> encoder_dims = {64, 64, 32};
    std::size_t projection_dim = 32;
};

struct ExperimentConfig {
    GeneratorSpec dataset;        // used when dataset_csv is empty
    std::string dataset_csv;      // non-empty: load dataset from files instead
    std::string dataset_manifest;
    LossKind loss = LossKind::CE;
    double alpha = 0.2;  // supcon_ls only
    ScheduleSpec schedule = const_schedule(1.0, 600);
    int epochs = 600;
    int batch_size = 32;
    OptimizerState optimizer;
    ProbeConfig probe;
    AugmentConfig augment;
    NetworkConfig network;
    std::uint64_t seed = 1;
    std::string output_dir;

    void validate() const {
        schedule.validate();
        optimizer.validate();
        if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
        if (schedule.total_epochs != epochs)
            throw std::invalid_argument("config: schedule.total_epochs must equal epochs");
        if (batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
        if (loss == LossKind::SupConLS && (alpha < 0.0 || alpha >= 1.0))
            throw std::invalid_argument("config: alpha must be in [0, 1)");
        if (probe.epochs < 0) throw std::invalid_argument("config: negative probe epochs");
        if (dataset_csv.empty()) dataset.validate();
    }
};

struct EpochLog {
    int epoch = 0;
    double temperature = 0.0;
    double lr = 0.0;
    double train_loss = 0.0;
};

struct RunRecord {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<EpochLog> epochs;
    EvalResult eval;
    double wall_seconds = 0.0;
};

// ---- config json -------------------------------------------------------------

inline json experiment_to_json(const ExperimentConfig& cfg) {
    json j;
    if (cfg.dataset_csv.empty()) {
        j["dataset"] = generator_to_json(cfg.dataset);
    } else {
        j["dataset"] = {{"file", cfg.dataset_csv}, {"manifest", cfg.dataset_manifest}};
    }
    j["loss"] = to_string(cfg.loss);
    if (cfg.loss == LossKind::SupConLS) j["alpha"] = cfg.alpha;
    j["schedule"] = schedule_to_json(cfg.schedule);
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["optimizer"] = {{"learning_rate_base", cfg.optimizer.learning_rate_base},
                      {"momentum", cfg.optimizer.momentum},
                      {"weight_decay", cfg.optimizer.weight_decay},
                      {"decay_biases", cfg.optimizer.decay_biases},
                      {"restart_epochs", cfg.optimizer.restart_epochs},
                      {"warmup_epochs", cfg.optimizer.warmup_epochs}};
    j["probe"] = {{"epochs", cfg.probe.epochs},
                  {"learning_rate", cfg.probe.learning_rate},
                  {"momentum", cfg.probe.momentum},
                  {"weight_decay", cfg.probe.weight_decay}};
    j["augment"] = {{"sigma", cfg.augment.sigma},
                    {"scale_lo", cfg.augment.scale_lo},
                    {"scale_hi", cfg.augment.scale_hi}};
    j["network"] = {{"encoder_dims", cfg.network.encoder_dims},
                    {"projection_dim", cfg.network.projection_dim}};
    j["seed"] = cfg.seed;
    if (!cfg.output_dir.empty()) j["output"] = cfg.output_dir;
    return j;
}

inline ExperimentConfig experiment_from_json(const json& j) {
    static const std::string ctx = "experiment config";
    check_keys(j,
               {"dataset", "loss", "alpha", "schedule", "epochs", "batch_size", "optimizer",
                "probe", "augment", "network", "seed", "output"},
               ctx);
    ExperimentConfig cfg;
    cfg.epochs = field_or<int>(j, "epochs", cfg.epochs, ctx);
    cfg.loss = loss_kind_from_string(field_or<std::string>(j, "loss", "ce", ctx));
    if (j.contains("alpha")) {
        if (cfg.loss != LossKind::SupConLS)
            throw ConfigError(ctx + ": 'alpha' is only valid for loss 'supcon_ls'");
        cfg.alpha = j.at("alpha").get<double>();
    }
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        require_object(d, ctx + ".dataset");
        if (d.contains("file")) {
            check_keys(d, {"file", "manifest"}, ctx + ".dataset");
            cfg.dataset_csv = require_field<std::string>(d, "file", ctx + ".dataset");
            cfg.dataset_manifest = require_field<std::string>(d, "manifest", ctx + ".dataset");
        } else {
            cfg.dataset = generator_from_json(d);
        }
    }
    if (j.contains("schedule")) cfg.schedule = schedule_from_json(j.at("schedule"), cfg.epochs);
    else cfg.schedule = const_schedule(1.0, cfg.epochs);
    cfg.batch_size = field_or<int>(j, "batch_size", cfg.batch_size, ctx);
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        check_keys(o,
                   {"learning_rate_base", "momentum", "weight_decay", "decay_biases",
                    "restart_epochs", "warmup_epochs"},
                   ctx + ".optimizer");
        auto& opt = cfg.optimizer;
        opt.learning_rate_base =
            field_or<double>(o, "learning_rate_base", opt.learning_rate_base, ctx);
        opt.momentum = field_or<double>(o, "momentum", opt.momentum, ctx);
        opt.weight_decay = field_or<double>(o, "weight_decay", opt.weight_decay, ctx);
        opt.decay_biases = field_or<bool>(o, "decay_biases", opt.decay_biases, ctx);
        opt.restart_epochs =
            field_or<std::vector<int>>(o, "restart_epochs", opt.restart_epochs, ctx);
        opt.warmup_epochs = field_or<int>(o, "warmup_epochs", opt.warmup_epochs, ctx);
    }
    if (j.contains("probe")) {
        const json& p = j.at("probe");
        check_keys(p, {"epochs", "learning_rate", "momentum", "weight_decay"}, ctx + ".probe");
        cfg.probe.epochs = field_or<int>(p, "epochs", cfg.probe.epochs, ctx);
        cfg.probe.learning_rate = field_or<double>(p, "learning_rate", cfg.probe.learning_rate, ctx);
        cfg.probe.momentum = field_or<double>(p, "momentum", cfg.probe.momentum, ctx);
        cfg.probe.weight_decay = field_or<double>(p, "weight_decay", cfg.probe.weight_decay, ctx);
    }
    if (j.contains("augment")) {
        const json& a = j.at("augment");
        check_keys(a, {"sigma", "scale_lo", "scale_hi"}, ctx + ".augment");
        cfg.augment.sigma = field_or<double>(a, "sigma", cfg.augment.sigma, ctx);
        cfg.augment.scale_lo = field_or<double>(a, "scale_lo", cfg.augment.scale_lo, ctx);
        cfg.augment.scale_hi = field_or<double>(a, "scale_hi", cfg.augment.scale_hi, ctx);
    }
    if (j.contains("network")) {
        const json& n = j.at("network");
        check_keys(n, {"encoder_dims", "projection_dim"}, ctx + ".network");
        cfg.network.encoder_dims =
            field_or<std::vector<std::size_t>>(n, "encoder_dims", cfg.network.encoder_dims, ctx);
        cfg.network.projection_dim =
            field_or<std::size_t>(n, "projection_dim", cfg.network.projection_dim, ctx);
    }
    cfg.seed = field_or<std::uint64_t>(j, "seed", cfg.seed, ctx);
    cfg.output_dir = field_or<std::string>(j, "output", "", ctx);
    cfg.validate();
    return cfg;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
    return hex64(fnv1a64(experiment_to_json(cfg).dump()));
}

// ---- training ----------------------------------------------------------------

struct TrainOutcome {
    Network net;                    // inference-ready: classifier head attached
    std::vector<int> class_labels;  // classifier index -> original class id
    RunRecord record;               // eval left empty; filled by evaluate()/run_experiment()
    DatasetSplit data;
};

namespace detail {

inline Tensor2 features_of(std::span<const LabeledSample> samples, int dim) {
    Tensor2 x(samples.size(), static_cast<std::size_t>(dim));
    for (std::size_t r = 0; r < samples.size(); ++r) {
        if (samples[r].features.size() != static_cast<std::size_t>(dim))
            throw std::invalid_argument("features_of: dim mismatch");
        for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) = samples[r].features[c];
    }
    return x;
}

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                           std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_key(seed, rng_tag::kBatchShuffle, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    const auto bs = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start < n; start += bs) {
        const std::size_t end = std::min(n, start + bs);
        if (end - start < 2) break;  // drop a trailing batch too small for view pairing
        batches.emplace_back(order.begin() + static_cast<long>(start),
                             order.begin() + static_cast<long>(end));
    }
    return batches;
}

}  // namespace detail

inline TrainOutcome train(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    DatasetSplit data = cfg.dataset_csv.empty()
                            ? generate(cfg.dataset)
                            : load_dataset(cfg.dataset_csv, cfg.dataset_manifest);
    if (data.train.empty()) throw std::runtime_error("train: dataset has no training samples");
    const auto n_classes = data.n_known_classes();
    const auto input_dim = static_cast<std::size_t>(data.dim);

    const bool contrastive = cfg.loss != LossKind::CE;
    Network net = contrastive
                      ? Network::make(input_dim, cfg.network.encoder_dims, HeadKind::Projection,
                                      cfg.network.projection_dim, cfg.seed)
                      : Network::make(input_dim, cfg.network.encoder_dims, HeadKind::Classifier,
                                      n_classes, cfg.seed);
    OptimizerState opt = cfg.optimizer;
    opt.velocity.assign(net.params().size(), 0.0);

    RunRecord record;
    record.config_hash = config_hash(cfg);
    record.seed = cfg.seed;
    record.epochs.reserve(static_cast<std::size_t>(cfg.epochs));

    std::vector<int> train_class_index(data.train.size());
    for (std::size_t i = 0; i < data.train.size(); ++i)
        train_class_index[i] = data.class_index(data.train[i].label);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double tau = temperature_at(cfg.schedule, epoch);
        const double lr = lr_at(opt, epoch, cfg.epochs);
        const auto batches =
            detail::epoch_batches(data.train.size(), cfg.batch_size, cfg.seed, epoch);
        if (batches.empty()) throw std::runtime_error("train: no usable batches");

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& idx = batches[b];
            try {
                LossOutput loss;
                Network::Cache cache;
                if (contrastive) {
                    std::vector<LabeledSample> chunk;
                    chunk.reserve(idx.size());
                    for (std::size_t i : idx) chunk.push_back(data.train[i]);
                    const std::uint64_t step =
                        static_cast<std::uint64_t>(epoch - 1) * batches.size() + b;
                    MultiViewBatch mv = two_view_batch(chunk, cfg.augment.sigma,
                                                       cfg.augment.scale_lo, cfg.augment.scale_hi,
                                                       cfg.seed, step);
                    auto fwd = net.forward(mv.views);
                    loss = cfg.loss == LossKind::SupCon
                               ? supcon_loss(fwd.outputs, mv.labels, tau)
                               : supcon_ls_loss(fwd.outputs, mv.labels, tau, cfg.alpha,
                                                static_cast<int>(n_classes));
                    cache = std::move(fwd.cache);
                } else {
                    Tensor2 x(idx.size(), input_dim);
                    std::vector<int> labels(idx.size());
                    for (std::size_t r = 0; r < idx.size(); ++r) {
                        for (std::size_t c = 0; c < input_dim; ++c)
                            x(r, c) = data.train[idx[r]].features[c];
                        labels[r] = train_class_index[idx[r]];
                    }
                    auto fwd = net.forward(x);
                    loss = ce_loss(fwd.outputs, labels, tau);
                    cache = std::move(fwd.cache);
                }
                net.backward(cache, loss.d_outputs);
                sgd_step(net, opt, lr);
                loss_sum += loss.value * static_cast<double>(idx.size());
                loss_count += idx.size();
            } catch (const std::exception& e) {
                throw std::runtime_error("train: epoch " + std::to_string(epoch) + " batch " +
                                         std::to_string(b) + ": " + e.what());
            }
        }
        record.epochs.push_back(
            {epoch, tau, lr, loss_sum / static_cast<double>(loss_count)});
    }

    TrainOutcome out;
    out.class_labels = data.known_classes;

    if (contrastive) {
        // Linear probe: freeze the encoder, drop the projection head, train a
        // classifier on un-augmented training representations with CE at tau=1.
        const Tensor2 train_x = detail::features_of(data.train, data.dim);
        const Tensor2 reprs = net.forward(train_x).representations;

        const std::uint64_t probe_seed = mix_key(cfg.seed, rng_tag::kProbeInit);
        Network probe = Network::make(net.representation_dim(), {}, HeadKind::Classifier,
                                      n_classes, probe_seed);
        OptimizerState popt;
        popt.learning_rate_base = cfg.probe.learning_rate;
        popt.momentum = cfg.probe.momentum;
        popt.weight_decay = cfg.probe.weight_decay;
        popt.restart_epochs.clear();
        popt.velocity.assign(probe.params().size(), 0.0);
        for (int epoch = 1; epoch <= cfg.probe.epochs; ++epoch) {
            const auto batches =
                detail::epoch_batches(data.train.size(), cfg.batch_size, probe_seed, epoch);
            for (const auto& idx : batches) {
                Tensor2 x(idx.size(), reprs.cols());
                std::vector<int> labels(idx.size());
                for (std::size_t r = 0; r < idx.size(); ++r) {
                    for (std::size_t c = 0; c < reprs.cols(); ++c) x(r, c) = reprs(idx[r], c);
                    labels[r] = train_class_index[idx[r]];
                }
                auto fwd = probe.forward(x);
                auto loss = ce_loss(fwd.outputs, labels, 1.0);
                probe.backward(fwd.cache, loss.d_outputs);
                sgd_step(probe, popt, cfg.probe.learning_rate);
            }
        }
        // Assemble the inference network: trained encoder + probe classifier.
        Network final_net = Network::make(input_dim, cfg.network.encoder_dims,
                                          HeadKind::Classifier, n_classes, 0);
        final_net.copy_encoder_from(net);
        auto dst = final_net.params();
        auto src = probe.params();
        std::copy(src.begin(), src.end(), dst.begin() + static_cast<long>(
                                              final_net.head_params_begin()));
        final_net.note_params_changed();
        out.net = std::move(final_net);
    } else {
        out.net = std::move(net);
    }

    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.record = std::move(record);
    out.data = std::move(data);
    return out;
}

// ---- evaluation ----------------------------------------------------------------

struct Evaluation {
    EvalResult result;
    std::vector<ScoreRow> scores;
};

// Scores every test sample with its max logit; accuracy over the closed set,
// AUROC and OSCR against the open set. class_labels maps classifier outputs
// back to original class ids.
inline Evaluation evaluate(const Network& net, const DatasetSplit& split,
                           const std::vector<int>& class_labels) {
    if (net.head_kind() != HeadKind::Classifier)
        throw std::logic_error("evaluate: network still has a projection head attached");
    if (net.output_dim() != class_labels.size())
        throw std::invalid_argument("evaluate: class label count mismatch");
    if (split.test_known.empty() || split.test_unknown.empty())
        throw std::domain_error("evaluate: need non-empty known and unknown test sets");

    auto index_of = [&](int label) {
        auto it = std::find(class_labels.begin(), class_labels.end(), label);
        if (it == class_labels.end())
            throw std::domain_error("evaluate: test label " + std::to_string(label) +
                                    " not in classifier label set");
        return static_cast<int>(it - class_labels.begin());
    };

    Evaluation ev;
    std::vector<ScoredPrediction> known_preds;
    std::vector<double> known_scores, unknown_scores;
    long long sample_id = 0;

    const Tensor2 known_logits = net.forward(detail::features_of(split.test_known, split.dim)).outputs;
    for (std::size_t r = 0; r < split.test_known.size(); ++r) {
        auto [cls, score] = max_logit_score(known_logits.row(r));
        known_preds.push_back({cls, score, index_of(split.test_known[r].label)});
        known_scores.push_back(score);
        ev.scores.push_back({sample_id++, split.test_known[r].label,
                             class_labels[static_cast<std::size_t>(cls)], score});
    }
    const Tensor2 unknown_logits =
        net.forward(detail::features_of(split.test_unknown, split.dim)).outputs;
    for (std::size_t r = 0; r < split.test_unknown.size(); ++r) {
        auto [cls, score] = max_logit_score(unknown_logits.row(r));
        unknown_scores.push_back(score);
        ev.scores.push_back({sample_id++, kUnknownLabel,
                             class_labels[static_cast<std::size_t>(cls)], score});
    }

    ev.result.accuracy = accuracy(known_preds);
    ev.result.auroc = auroc(known_scores, unknown_scores);
    ev.result.oscr = oscr(known_preds, unknown_scores);
    ev.result.n_known = split.test_known.size();
    ev.result.n_unknown = split.test_unknown.size();
    return ev;
}

// ---- run records & artifacts ------------------------------------------------

inline json eval_to_json(const EvalResult& r) {
    return {{"accuracy", r.accuracy}, {"auroc", r.auroc},     {"oscr", r.oscr},
            {"n_known", r.n_known},   {"n_unknown", r.n_unknown}};
}

inline json record_to_json(const RunRecord& r) {
    json epochs = json::array();
    for (const auto& e : r.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"temperature", e.temperature},
                          {"lr", e.lr},
                          {"train_loss", e.train_loss}});
    return {{"config_hash", r.config_hash},
            {"seed", r.seed},
            {"wall_seconds", r.wall_seconds},
            {"epochs", std::move(epochs)},
            {"eval", eval_to_json(r.eval)}};
}

// Full single-experiment pipeline. When the config names an output
// directory, writes checkpoint.json, run_record.json and scores.csv there.
inline TrainOutcome run_experiment(const ExperimentConfig& cfg) {
    TrainOutcome out = train(cfg);
    Evaluation ev = evaluate(out.net, out.data, out.class_labels);
    out.record.eval = ev.result;
    if (!cfg.output_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(cfg.output_dir);
        const fs::path dir(cfg.output_dir);
        save_checkpoint((dir / "checkpoint.json").string(), out.net, out.class_labels);
        write_file((dir / "scores.csv").string(), scores_to_csv(ev.scores));
        write_file((dir / "run_record.json").string(), record_to_json(out.record).dump(2) + "\n");
    }
    return out;
}

}  // namespace tslab
