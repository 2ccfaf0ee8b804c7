#pragma once

#include <cstdint>
#include <initializer_list>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tslab/data.hpp"
#include "tslab/io.hpp"
#include "tslab/nn.hpp"
#include "tslab/schedule.hpp"

// JSON (de)serialization for schedule specs, generator specs, dataset
// manifests, and network checkpoints. Parsing is strict: unknown keys are
// rejected so config typos fail loudly instead of silently using defaults.

namespace tslab {

using json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_object(const json& j, const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
}

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& context) {
    require_object(j, context);
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!ok.count(key)) throw ConfigError(context + ": unknown key '" + key + "'");
    }
}

template <typename T>
T require_field(const json& j, const char* key, const std::string& context) {
    if (!j.contains(key)) throw ConfigError(context + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(context + ": bad value for '" + key + "': " + e.what());
    }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& context) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(context + ": bad value for '" + key + "': " + e.what());
    }
}

// ---- schedules -------------------------------------------------------------

inline json schedule_to_json(const ScheduleSpec& s) {
    json j;
    j["kind"] = to_string(s.kind);
    if (s.kind == ScheduleKind::Const) {
        j["tau"] = s.tau_plus;
    } else {
        j["tau_plus"] = s.tau_plus;
        j["tau_minus"] = s.tau_minus;
    }
    switch (s.kind) {
        case ScheduleKind::GCos:
            j["shift"] = s.shift;
            [[fallthrough]];
        case ScheduleKind::Cos:
        case ScheduleKind::NegCos:
        case ScheduleKind::HalfNegCos:
            j["period"] = s.period;
            break;
        case ScheduleKind::StepUp:
            j["steps"] = s.steps;
            break;
        case ScheduleKind::Random:
            j["seed"] = s.seed;
            break;
        case ScheduleKind::Const:
            break;
    }
    j["total_epochs"] = s.total_epochs;
    return j;
}

// `default_total_epochs` fills total_epochs when the config omits it (the
// experiment epoch count); pass 0 to make it required.
inline ScheduleSpec schedule_from_json(const json& j, int default_total_epochs = 0) {
    static const std::string ctx = "schedule";
    check_keys(j, {"kind", "tau", "tau_plus", "tau_minus", "period", "shift", "steps", "seed",
                   "total_epochs"},
               ctx);
    const ScheduleKind kind = schedule_kind_from_string(require_field<std::string>(j, "kind", ctx));
    const int total = default_total_epochs > 0
                          ? field_or<int>(j, "total_epochs", default_total_epochs, ctx)
                          : require_field<int>(j, "total_epochs", ctx);

    auto forbid = [&](const char* key) {
        if (j.contains(key))
            throw ConfigError(ctx + ": key '" + std::string(key) + "' not valid for kind '" +
                              to_string(kind) + "'");
    };

    if (kind == ScheduleKind::Const) {
        for (const char* k : {"tau_plus", "tau_minus", "period", "shift", "steps", "seed"})
            forbid(k);
        return const_schedule(require_field<double>(j, "tau", ctx), total);
    }
    forbid("tau");
    const double tp = require_field<double>(j, "tau_plus", ctx);
    const double tm = require_field<double>(j, "tau_minus", ctx);
    switch (kind) {
        case ScheduleKind::GCos: {
            forbid("steps");
            forbid("seed");
            return gcos_schedule(tp, tm, require_field<int>(j, "period", ctx),
                                 require_field<double>(j, "shift", ctx), total);
        }
        case ScheduleKind::Cos:
        case ScheduleKind::NegCos:
        case ScheduleKind::HalfNegCos: {
            for (const char* k : {"shift", "steps", "seed"}) forbid(k);
            const int period = require_field<int>(j, "period", ctx);
            if (kind == ScheduleKind::Cos) return cos_schedule(tp, tm, period, total);
            if (kind == ScheduleKind::NegCos) return negcos_schedule(tp, tm, period, total);
            return half_negcos_schedule(tp, tm, period, total);
        }
        case ScheduleKind::StepUp: {
            for (const char* k : {"shift", "period", "seed"}) forbid(k);
            return stepup_schedule(tp, tm, field_or<int>(j, "steps", 10, ctx), total);
        }
        case ScheduleKind::Random: {
            for (const char* k : {"shift", "period", "steps"}) forbid(k);
            return random_schedule(tp, tm, field_or<std::uint64_t>(j, "seed", 0, ctx), total);
        }
        default:
            throw ConfigError(ctx + ": unhandled kind");
    }
}

// ---- generator specs & dataset manifest -------------------------------------

inline json generator_to_json(const GeneratorSpec& g) {
    json j;
    j["n_classes_total"] = g.n_classes_total;
    j["n_known"] = g.n_known;
    j["dim"] = g.dim;
    j["samples_per_class"] = g.samples_per_class;
    j["cluster_spread"] = g.cluster_spread;
    j["cluster_placement"] = to_string(g.placement);
    j["nonlinearity"] = to_string(g.nonlinearity);
    j["seed"] = g.seed;
    return j;
}

inline GeneratorSpec generator_from_json(const json& j) {
    static const std::string ctx = "dataset generator";
    check_keys(j,
               {"n_classes_total", "n_known", "dim", "samples_per_class", "cluster_spread",
                "cluster_placement", "nonlinearity", "seed"},
               ctx);
    GeneratorSpec g;
    g.n_classes_total = field_or<int>(j, "n_classes_total", g.n_classes_total, ctx);
    g.n_known = field_or<int>(j, "n_known", g.n_known, ctx);
    g.dim = field_or<int>(j, "dim", g.dim, ctx);
    g.samples_per_class = field_or<int>(j, "samples_per_class", g.samples_per_class, ctx);
    g.cluster_spread = field_or<double>(j, "cluster_spread", g.cluster_spread, ctx);
    g.placement = placement_from_string(
        field_or<std::string>(j, "cluster_placement", to_string(g.placement), ctx));
    g.nonlinearity = nonlinearity_from_string(
        field_or<std::string>(j, "nonlinearity", to_string(g.nonlinearity), ctx));
    g.seed = field_or<std::uint64_t>(j, "seed", g.seed, ctx);
    g.validate();
    return g;
}

inline json manifest_to_json(const DatasetSplit& split) {
    json j;
    j["format_version"] = 1;
    j["generator"] = generator_to_json(split.spec);
    j["known_classes"] = split.known_classes;
    j["unknown_classes"] = split.unknown_classes;
    j["dim"] = split.dim;
    j["seed"] = split.spec.seed;
    return j;
}

inline void save_dataset(const DatasetSplit& split, const std::string& csv_path,
                         const std::string& manifest_path) {
    write_file(csv_path, dataset_to_csv(split));
    write_file(manifest_path, manifest_to_json(split).dump(2) + "\n");
}

inline DatasetSplit load_dataset(const std::string& csv_path, const std::string& manifest_path) {
    static const std::string ctx = "dataset manifest";
    json j = json::parse(read_file(manifest_path));
    check_keys(j, {"format_version", "generator", "known_classes", "unknown_classes", "dim",
                   "seed"},
               ctx);
    if (require_field<int>(j, "format_version", ctx) != 1)
        throw ConfigError(ctx + ": unsupported format_version");
    DatasetSplit split;
    split.spec = generator_from_json(j.at("generator"));
    split.known_classes = require_field<std::vector<int>>(j, "known_classes", ctx);
    split.unknown_classes = require_field<std::vector<int>>(j, "unknown_classes", ctx);
    dataset_rows_from_csv(read_file(csv_path), split);
    if (split.dim != require_field<int>(j, "dim", ctx))
        throw ConfigError(ctx + ": dim disagrees with csv");
    std::map<int, int> train_counts;
    for (const auto& s : split.train) {
        if (!std::binary_search(split.known_classes.begin(), split.known_classes.end(), s.label))
            throw ConfigError(ctx + ": train row with non-known label " +
                              std::to_string(s.label));
        ++train_counts[s.label];
    }
    for (const auto& [label, count] : train_counts)
        if (count < 2)
            throw ConfigError(ctx + ": known class " + std::to_string(label) +
                              " has fewer than 2 training samples");
    for (const auto& s : split.test_unknown)
        if (!std::binary_search(split.unknown_classes.begin(), split.unknown_classes.end(),
                                s.label))
            throw ConfigError(ctx + ": test_unknown row with non-open-set label " +
                              std::to_string(s.label));
    return split;
}

// ---- network checkpoints -----------------------------------------------------

// Versioned JSON checkpoint; doubles round-trip bit-exactly through the
// shortest-representation serializer.
struct Checkpoint {
    Network net;
    std::vector<int> class_labels;  // classifier index -> original class id
};

inline json checkpoint_to_json(const Network& net, const std::vector<int>& class_labels) {
    json j;
    j["format_version"] = 1;
    j["input_dim"] = net.input_dim();
    j["encoder_dims"] = net.encoder_dims();
    j["head"] = to_string(net.head_kind());
    j["head_dim"] = net.output_dim();
    j["class_labels"] = class_labels;
    j["params"] = std::vector<double>(net.params().begin(), net.params().end());
    return j;
}

inline void save_checkpoint(const std::string& path, const Network& net,
                            const std::vector<int>& class_labels) {
    write_file(path, checkpoint_to_json(net, class_labels).dump() + "\n");
}

inline Checkpoint checkpoint_from_json(const json& j) {
    static const std::string ctx = "checkpoint";
    check_keys(j, {"format_version", "input_dim", "encoder_dims", "head", "head_dim",
                   "class_labels", "params"},
               ctx);
    if (require_field<int>(j, "format_version", ctx) != 1)
        throw ConfigError(ctx + ": unsupported format_version");
    Checkpoint ckpt;
    const auto input_dim = require_field<std::size_t>(j, "input_dim", ctx);
    auto encoder_dims = require_field<std::vector<std::size_t>>(j, "encoder_dims", ctx);
    const auto head = head_kind_from_string(require_field<std::string>(j, "head", ctx));
    const auto head_dim = require_field<std::size_t>(j, "head_dim", ctx);
    ckpt.class_labels = require_field<std::vector<int>>(j, "class_labels", ctx);
    ckpt.net = Network::make(input_dim, std::move(encoder_dims), head, head_dim, 0);
    const auto params = require_field<std::vector<double>>(j, "params", ctx);
    if (params.size() != ckpt.net.params().size())
        throw ConfigError(ctx + ": parameter count mismatch");
    ckpt.net.set_params(params);
    return ckpt;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return checkpoint_from_json(json::parse(read_file(path)));
}

}  // namespace tslab
