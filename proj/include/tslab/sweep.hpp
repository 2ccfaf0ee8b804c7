#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tslab/harness.hpp"

// Schedule x seed sweeps. Runs share nothing and may execute on a worker
// pool; row order, aggregation and all emitted files depend only on the
// config, never on scheduling. The wall_seconds column is the one value
// that varies between repeats.

namespace tslab {

struct SweepConfig {
    ExperimentConfig base;  // schedule/seed/output of the base are ignored
    std::vector<ScheduleSpec> schedules;
    std::vector<std::uint64_t> seeds;
    int jobs = 0;  // worker threads; 0 = hardware concurrency
    std::string output_dir;
};

inline SweepConfig sweep_from_json(const json& j) {
    static const std::string ctx = "sweep config";
    check_keys(j, {"base", "schedules", "seeds", "jobs", "output"}, ctx);
    SweepConfig cfg;
    if (!j.contains("base")) throw ConfigError(ctx + ": missing key 'base'");
    {
        const json& base = j.at("base");
        require_object(base, ctx + ".base");
        if (base.contains("schedule") || base.contains("seed") || base.contains("output"))
            throw ConfigError(ctx + ": schedule/seed/output belong to the sweep, not the base");
        cfg.base = experiment_from_json(base);
    }
    if (!j.contains("schedules") || !j.at("schedules").is_array() || j.at("schedules").empty())
        throw ConfigError(ctx + ": 'schedules' must be a non-empty array");
    for (const auto& s : j.at("schedules"))
        cfg.schedules.push_back(schedule_from_json(s, cfg.base.epochs));
    cfg.seeds = require_field<std::vector<std::uint64_t>>(j, "seeds", ctx);
    if (cfg.seeds.empty()) throw ConfigError(ctx + ": 'seeds' must be non-empty");
    cfg.jobs = field_or<int>(j, "jobs", 0, ctx);
    cfg.output_dir = field_or<std::string>(j, "output", "", ctx);
    for (const auto& s : cfg.schedules) {
        ScheduleSpec full = s;
        full.total_epochs = cfg.base.epochs;
        full.validate();
    }
    return cfg;
}

struct SweepRow {
    std::string run_id;
    ScheduleSpec schedule;
    LossKind loss = LossKind::CE;
    double alpha = 0.0;  // 0 unless supcon_ls
    std::uint64_t seed = 0;
    EvalResult eval;
    double wall_seconds = 0.0;
    bool failed = false;
    std::string error;
};

struct MetricStats {
    std::size_t n = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation, 0 when n < 2
};

struct SweepAggregate {
    ScheduleSpec schedule;
    std::string label;
    MetricStats accuracy, auroc, oscr;
    double wall_mean = 0.0;
};

struct ImprovementEntry {
    std::string candidate_label;  // a negcos schedule
    std::string metric;
    double candidate_mean = 0.0;
    double best_const_mean = 0.0;
    std::string best_const_label;
    double value = 0.0;  // candidate - best const
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<SweepAggregate> aggregates;
    std::vector<ImprovementEntry> improvements;
    std::size_t n_failed = 0;
};

inline std::string schedule_label(const ScheduleSpec& s) {
    std::ostringstream out;
    out << to_string(s.kind);
    if (s.kind == ScheduleKind::Const) {
        out << "_" << format_double(s.tau_plus);
        return out.str();
    }
    out << "_" << format_double(s.tau_plus) << "_" << format_double(s.tau_minus);
    switch (s.kind) {
        case ScheduleKind::GCos: out << "_P" << s.period << "_k" << format_double(s.shift); break;
        case ScheduleKind::Cos:
        case ScheduleKind::NegCos:
        case ScheduleKind::HalfNegCos: out << "_P" << s.period; break;
        case ScheduleKind::StepUp: out << "_n" << s.steps; break;
        case ScheduleKind::Random: out << "_seed" << s.seed; break;
        default: break;
    }
    return out.str();
}

namespace detail {

inline MetricStats stats_of(const std::vector<double>& xs) {
    MetricStats s;
    s.n = xs.size();
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

}  // namespace detail

inline SweepResult sweep(const SweepConfig& cfg) {
    if (cfg.schedules.empty()) throw std::invalid_argument("sweep: no schedules");
    if (cfg.seeds.empty()) throw std::invalid_argument("sweep: no seeds");

    struct RunSpec {
        std::size_t schedule_index;
        ExperimentConfig config;
        std::string run_id;
    };
    std::vector<RunSpec> runs;
    for (std::size_t si = 0; si < cfg.schedules.size(); ++si) {
        for (std::size_t ki = 0; ki < cfg.seeds.size(); ++ki) {
            ExperimentConfig c = cfg.base;
            c.schedule = cfg.schedules[si];
            c.schedule.total_epochs = c.epochs;
            c.seed = cfg.seeds[ki];
            // Generated datasets track the run seed so seed-averaging covers
            // data randomness as well; file datasets stay fixed.
            if (c.dataset_csv.empty()) c.dataset.seed = cfg.seeds[ki];
            c.output_dir.clear();
            c.validate();
            std::ostringstream id;
            id << "r" << std::setw(3) << std::setfill('0') << runs.size() << "_"
               << schedule_label(c.schedule) << "_s" << c.seed;
            runs.push_back({si, std::move(c), id.str()});
        }
    }

    SweepResult result;
    result.rows.resize(runs.size());
    std::vector<std::vector<ScoreRow>> run_scores(runs.size());

    auto run_one = [&](std::size_t i) {
        SweepRow row;
        row.run_id = runs[i].run_id;
        row.schedule = runs[i].config.schedule;
        row.loss = runs[i].config.loss;
        row.alpha = runs[i].config.loss == LossKind::SupConLS ? runs[i].config.alpha : 0.0;
        row.seed = runs[i].config.seed;
        try {
            TrainOutcome out = train(runs[i].config);
            Evaluation ev = evaluate(out.net, out.data, out.class_labels);
            out.record.eval = ev.result;
            row.eval = ev.result;
            row.wall_seconds = out.record.wall_seconds;
            run_scores[i] = std::move(ev.scores);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            row.eval.accuracy = std::numeric_limits<double>::quiet_NaN();
            row.eval.auroc = std::numeric_limits<double>::quiet_NaN();
            row.eval.oscr = std::numeric_limits<double>::quiet_NaN();
        }
        result.rows[i] = std::move(row);
    };

    unsigned jobs = cfg.jobs > 0 ? static_cast<unsigned>(cfg.jobs)
                                 : std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(runs.size()));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < runs.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        workers.reserve(jobs);
        for (unsigned w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < runs.size(); i = next.fetch_add(1))
                    run_one(i);
            });
        }
        for (auto& t : workers) t.join();
    }

    for (const auto& row : result.rows)
        if (row.failed) ++result.n_failed;

    // Per-schedule aggregates over successful runs, in schedule order.
    for (std::size_t si = 0; si < cfg.schedules.size(); ++si) {
        SweepAggregate agg;
        agg.schedule = cfg.schedules[si];
        agg.schedule.total_epochs = cfg.base.epochs;
        agg.label = schedule_label(agg.schedule);
        std::vector<double> acc, roc, osc;
        double wall = 0.0;
        std::size_t nwall = 0;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (runs[i].schedule_index != si || result.rows[i].failed) continue;
            acc.push_back(result.rows[i].eval.accuracy);
            roc.push_back(result.rows[i].eval.auroc);
            osc.push_back(result.rows[i].eval.oscr);
            wall += result.rows[i].wall_seconds;
            ++nwall;
        }
        agg.accuracy = detail::stats_of(acc);
        agg.auroc = detail::stats_of(roc);
        agg.oscr = detail::stats_of(osc);
        agg.wall_mean = nwall ? wall / static_cast<double>(nwall) : 0.0;
        result.aggregates.push_back(std::move(agg));
    }

    // Improvement of each negcos schedule over the best constant baseline.
    std::vector<const SweepAggregate*> consts;
    for (const auto& a : result.aggregates)
        if (a.schedule.kind == ScheduleKind::Const && a.accuracy.n > 0) consts.push_back(&a);
    if (!consts.empty()) {
        for (const auto& a : result.aggregates) {
            if (a.schedule.kind != ScheduleKind::NegCos || a.accuracy.n == 0) continue;
            auto add = [&](const char* metric, double cand,
                           double (*pick)(const SweepAggregate&)) {
                const SweepAggregate* best = consts[0];
                for (const auto* c : consts)
                    if (pick(*c) > pick(*best)) best = c;
                ImprovementEntry e;
                e.candidate_label = a.label;
                e.metric = metric;
                e.candidate_mean = cand;
                e.best_const_mean = pick(*best);
                e.best_const_label = best->label;
                e.value = cand - e.best_const_mean;
                result.improvements.push_back(std::move(e));
            };
            add("accuracy", a.accuracy.mean,
                [](const SweepAggregate& x) { return x.accuracy.mean; });
            add("auroc", a.auroc.mean, [](const SweepAggregate& x) { return x.auroc.mean; });
            add("oscr", a.oscr.mean, [](const SweepAggregate& x) { return x.oscr.mean; });
        }
    }

    if (!cfg.output_dir.empty()) {
        namespace fs = std::filesystem;
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir / "runs");
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (result.rows[i].failed) continue;
            write_file((dir / "runs" / (runs[i].run_id + "_scores.csv")).string(),
                       scores_to_csv(run_scores[i]));
        }
    }
    return result;
}

// ---- results csv ---------------------------------------------------------------

inline constexpr const char* kResultsCsvHeader =
    "run_id,schedule,tau_plus,tau_minus,period,k,loss,alpha,seed,accuracy,auroc,oscr,"
    "wall_seconds";

// Per-run rows followed by one aggregate row per schedule (run_id prefixed
// "agg_", seed column -1, metric columns hold means).
inline std::string results_to_csv(const SweepResult& result) {
    std::ostringstream out;
    out << kResultsCsvHeader << "\n";
    auto emit_schedule = [&](const ScheduleSpec& s) {
        out << to_string(s.kind) << ',' << format_double(s.tau_plus) << ','
            << format_double(s.tau_minus) << ',' << s.period << ',' << format_double(s.shift)
            << ',';
    };
    for (const auto& r : result.rows) {
        out << r.run_id << ',';
        emit_schedule(r.schedule);
        out << to_string(r.loss) << ',' << format_double(r.alpha) << ',' << r.seed << ','
            << format_double(r.eval.accuracy) << ',' << format_double(r.eval.auroc) << ','
            << format_double(r.eval.oscr) << ',' << format_double(r.wall_seconds) << "\n";
    }
    for (const auto& a : result.aggregates) {
        if (a.accuracy.n == 0) continue;
        out << "agg_" << a.label << ',';
        emit_schedule(a.schedule);
        out << (result.rows.empty() ? "ce" : to_string(result.rows[0].loss)) << ','
            << format_double(result.rows.empty() ? 0.0 : result.rows[0].alpha) << ',' << -1 << ','
            << format_double(a.accuracy.mean) << ',' << format_double(a.auroc.mean) << ','
            << format_double(a.oscr.mean) << ',' << format_double(a.wall_mean) << "\n";
    }
    return out.str();
}

inline json sweep_summary_to_json(const SweepConfig& cfg, const SweepResult& result) {
    json j;
    j["format_version"] = 1;
    ExperimentConfig base = cfg.base;
    base.output_dir.clear();
    j["base"] = experiment_to_json(base);
    json scheds = json::array();
    for (const auto& s : cfg.schedules) {
        ScheduleSpec full = s;
        full.total_epochs = cfg.base.epochs;
        scheds.push_back(schedule_to_json(full));
    }
    j["schedules"] = std::move(scheds);
    j["seeds"] = cfg.seeds;
    json aggs = json::array();
    for (const auto& a : result.aggregates) {
        aggs.push_back({{"label", a.label},
                        {"schedule", schedule_to_json(a.schedule)},
                        {"n", a.accuracy.n},
                        {"accuracy", {{"mean", a.accuracy.mean}, {"std", a.accuracy.stddev}}},
                        {"auroc", {{"mean", a.auroc.mean}, {"std", a.auroc.stddev}}},
                        {"oscr", {{"mean", a.oscr.mean}, {"std", a.oscr.stddev}}}});
    }
    j["aggregates"] = std::move(aggs);
    json imps = json::array();
    for (const auto& e : result.improvements) {
        imps.push_back({{"candidate", e.candidate_label},
                        {"metric", e.metric},
                        {"candidate_mean", e.candidate_mean},
                        {"best_const", e.best_const_label},
                        {"best_const_mean", e.best_const_mean},
                        {"improvement", e.value}});
    }
    j["improvement"] = std::move(imps);
    json errs = json::array();
    for (const auto& r : result.rows)
        if (r.failed) errs.push_back({{"run_id", r.run_id}, {"message", r.error}});
    j["errors"] = std::move(errs);
    return j;
}

// ---- report ---------------------------------------------------------------------

struct ResultsRow {
    std::string run_id;
    ScheduleKind kind = ScheduleKind::Const;
    double tau_plus = 0.0;
    double tau_minus = 0.0;
    int period = 0;
    double k = 0.0;
    std::string loss;
    double alpha = 0.0;
    long long seed = 0;
    double accuracy = 0.0;
    double auroc = 0.0;
    double oscr = 0.0;
};

// Parses per-run rows of a results csv; aggregate rows are skipped.
inline std::vector<ResultsRow> parse_results_csv(const std::string& content) {
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kResultsCsvHeader))
        throw std::runtime_error("results csv: bad header");
    std::vector<ResultsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 13) throw std::runtime_error("results csv: bad row: " + line);
        if (f[0].rfind("agg_", 0) == 0) continue;
        ResultsRow r;
        r.run_id = f[0];
        r.kind = schedule_kind_from_string(f[1]);
        r.tau_plus = parse_double(f[2]);
        r.tau_minus = parse_double(f[3]);
        r.period = static_cast<int>(parse_int(f[4]));
        r.k = parse_double(f[5]);
        r.loss = f[6];
        r.alpha = parse_double(f[7]);
        r.seed = parse_int(f[8]);
        r.accuracy = parse_double(f[9]);
        r.auroc = parse_double(f[10]);
        r.oscr = parse_double(f[11]);
        rows.push_back(std::move(r));
    }
    return rows;
}

struct Report {
    std::string improvement_csv;
    std::string k_sweep_csv;
    std::string metric_bars_csv;
    std::string temperature_curves_csv;  // empty when no schedule specs are available
};

// Builds the report tables. `schedules` (typically from a sweep summary)
// enables the plot-ready temperature-curve table; rows with NaN metrics
// (failed runs) are excluded from every aggregate.
inline Report make_report(const std::vector<ResultsRow>& rows,
                          const std::vector<ScheduleSpec>& schedules = {}) {
    Report rep;

    struct Key {
        ScheduleKind kind;
        double tp, tm;
        int period;
        double k;
        auto operator<=>(const Key&) const = default;
    };
    std::map<Key, std::vector<const ResultsRow*>> groups;
    for (const auto& r : rows) {
        if (!std::isfinite(r.accuracy)) continue;
        groups[{r.kind, r.tau_plus, r.tau_minus, r.period, r.k}].push_back(&r);
    }

    auto label_of = [](const Key& k) {
        ScheduleSpec s;
        s.kind = k.kind;
        s.tau_plus = k.tp;
        s.tau_minus = k.tm;
        s.period = k.period > 0 ? k.period : 1;
        s.shift = k.k;
        return schedule_label(s);
    };
    auto collect = [](const std::vector<const ResultsRow*>& g, double ResultsRow::* field) {
        std::vector<double> xs;
        xs.reserve(g.size());
        for (const auto* r : g) xs.push_back(r->*field);
        return detail::stats_of(xs);
    };

    // metric bars: one row per (schedule, metric)
    {
        std::ostringstream out;
        out << "schedule,metric,n,mean,std\n";
        for (const auto& [key, g] : groups) {
            for (auto [name, field] : {std::pair{"accuracy", &ResultsRow::accuracy},
                                       std::pair{"auroc", &ResultsRow::auroc},
                                       std::pair{"oscr", &ResultsRow::oscr}}) {
                const MetricStats s = collect(g, field);
                out << label_of(key) << ',' << name << ',' << s.n << ','
                    << format_double(s.mean) << ',' << format_double(s.stddev) << "\n";
            }
        }
        rep.metric_bars_csv = out.str();
    }

    // improvement: negcos schedules against the best constant baseline
    {
        std::ostringstream out;
        out << "metric,candidate,candidate_mean,best_const,best_const_mean,improvement\n";
        std::vector<std::pair<Key, MetricStats>> const_stats[3];
        for (const auto& [key, g] : groups) {
            if (key.kind != ScheduleKind::Const) continue;
            const_stats[0].push_back({key, collect(g, &ResultsRow::accuracy)});
            const_stats[1].push_back({key, collect(g, &ResultsRow::auroc)});
            const_stats[2].push_back({key, collect(g, &ResultsRow::oscr)});
        }
        for (const auto& [key, g] : groups) {
            if (key.kind != ScheduleKind::NegCos) continue;
            const MetricStats cand[3] = {collect(g, &ResultsRow::accuracy),
                                         collect(g, &ResultsRow::auroc),
                                         collect(g, &ResultsRow::oscr)};
            const char* names[3] = {"accuracy", "auroc", "oscr"};
            for (int m = 0; m < 3; ++m) {
                if (const_stats[m].empty()) continue;
                const auto* best = &const_stats[m][0];
                for (const auto& c : const_stats[m])
                    if (c.second.mean > best->second.mean) best = &c;
                out << names[m] << ',' << label_of(key) << ','
                    << format_double(cand[m].mean) << ',' << label_of(best->first) << ','
                    << format_double(best->second.mean) << ','
                    << format_double(cand[m].mean - best->second.mean) << "\n";
            }
        }
        rep.improvement_csv = out.str();
    }

    // k sweep: AUROC by phase delay across the gcos family, sorted by k
    {
        std::map<double, std::vector<double>> by_k;
        for (const auto& [key, g] : groups) {
            if (key.kind != ScheduleKind::GCos && key.kind != ScheduleKind::Cos &&
                key.kind != ScheduleKind::NegCos)
                continue;
            for (const auto* r : g) by_k[key.k].push_back(r->auroc);
        }
        std::ostringstream out;
        out << "k,n,auroc_mean,auroc_std\n";
        for (const auto& [k, xs] : by_k) {
            const MetricStats s = detail::stats_of(xs);
            out << format_double(k) << ',' << s.n << ',' << format_double(s.mean) << ','
                << format_double(s.stddev) << "\n";
        }
        rep.k_sweep_csv = out.str();
    }

    // plot-ready temperature curves, one column per schedule
    if (!schedules.empty()) {
        int max_epochs = 0;
        for (const auto& s : schedules) max_epochs = std::max(max_epochs, s.total_epochs);
        std::ostringstream out;
        out << "epoch";
        for (const auto& s : schedules) out << ',' << schedule_label(s);
        out << "\n";
        for (int e = 1; e <= max_epochs; ++e) {
            out << e;
            for (const auto& s : schedules) {
                out << ',';
                if (e <= s.total_epochs) out << format_double(temperature_at(s, e));
            }
            out << "\n";
        }
        rep.temperature_curves_csv = out.str();
    }
    return rep;
}

}  // namespace tslab
