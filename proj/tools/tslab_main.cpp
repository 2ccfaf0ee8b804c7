// Command line front end: dataset generation, single training runs,
// checkpoint evaluation, schedule/seed sweeps and report tables.
//
// Exit codes: 0 success, 1 config error, 2 run failure, 3 partial sweep
// failure (some runs failed, results for the rest were written).

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tslab/harness.hpp"
#include "tslab/jsonio.hpp"
#include "tslab/sweep.hpp"

namespace fs = std::filesystem;
using tslab::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRunFailure = 2;
constexpr int kExitPartialSweep = 3;

int run_generate(const std::string& csv, const std::string& manifest,
                 const tslab::GeneratorSpec& spec) {
    spec.validate();
    tslab::DatasetSplit split = tslab::generate(spec);
    tslab::save_dataset(split, csv, manifest);
    std::cout << "wrote " << csv << " (" << split.train.size() << " train, "
              << split.test_known.size() << " test_known, " << split.test_unknown.size()
              << " test_unknown) and " << manifest << "\n";
    return kExitOk;
}

struct TrainFlags {
    std::string config_path;
    std::string out;
    std::string loss;
    std::string schedule_json;
    std::string dataset_csv;
    std::string dataset_manifest;
    int epochs = -1;
    long long seed = -1;
};

// Flags are layered over the config file (or over pure defaults when no
// file is given), then the merged object goes through the strict parser.
int run_train(const TrainFlags& flags) {
    json j = flags.config_path.empty() ? json::object()
                                       : json::parse(tslab::read_file(flags.config_path));
    if (!flags.loss.empty()) j["loss"] = flags.loss;
    if (flags.epochs > 0) j["epochs"] = flags.epochs;
    if (flags.seed >= 0) j["seed"] = flags.seed;
    if (!flags.schedule_json.empty()) j["schedule"] = json::parse(flags.schedule_json);
    if (!flags.dataset_csv.empty()) {
        std::string manifest = flags.dataset_manifest;
        if (manifest.empty())
            throw tslab::ConfigError("train: --dataset-csv needs --dataset-manifest");
        j["dataset"] = {{"file", flags.dataset_csv}, {"manifest", manifest}};
    }
    if (!flags.out.empty()) j["output"] = flags.out;
    tslab::ExperimentConfig cfg = tslab::experiment_from_json(j);
    tslab::TrainOutcome out = tslab::run_experiment(cfg);
    std::cout << tslab::eval_to_json(out.record.eval).dump(2) << "\n";
    return kExitOk;
}

int run_evaluate(const std::string& ckpt_path, const std::string& csv,
                 const std::string& manifest, const std::string& scores_path) {
    tslab::Checkpoint ckpt = tslab::load_checkpoint(ckpt_path);
    tslab::DatasetSplit split = tslab::load_dataset(csv, manifest);
    tslab::Evaluation ev = tslab::evaluate(ckpt.net, split, ckpt.class_labels);
    if (!scores_path.empty()) tslab::write_file(scores_path, tslab::scores_to_csv(ev.scores));
    std::cout << tslab::eval_to_json(ev.result).dump(2) << "\n";
    return kExitOk;
}

int run_sweep(const std::string& config_path, const std::string& out_override, int jobs_override) {
    tslab::SweepConfig cfg = tslab::sweep_from_json(json::parse(tslab::read_file(config_path)));
    if (!out_override.empty()) cfg.output_dir = out_override;
    if (jobs_override > 0) cfg.jobs = jobs_override;
    if (cfg.output_dir.empty())
        throw tslab::ConfigError("sweep: no output directory (config 'output' or --out)");

    tslab::SweepResult result = tslab::sweep(cfg);

    fs::create_directories(cfg.output_dir);
    const fs::path dir(cfg.output_dir);
    tslab::write_file((dir / "results.csv").string(), tslab::results_to_csv(result));
    tslab::write_file((dir / "summary.json").string(),
                      tslab::sweep_summary_to_json(cfg, result).dump(2) + "\n");

    for (const auto& agg : result.aggregates) {
        std::cout << agg.label << ": accuracy " << agg.accuracy.mean << " (+-"
                  << agg.accuracy.stddev << "), auroc " << agg.auroc.mean << " (+-"
                  << agg.auroc.stddev << "), oscr " << agg.oscr.mean << " (+-" << agg.oscr.stddev
                  << ") over " << agg.accuracy.n << " runs\n";
    }
    for (const auto& imp : result.improvements) {
        std::cout << "improvement[" << imp.metric << "] " << imp.candidate_label << " - "
                  << imp.best_const_label << " = " << imp.value << "\n";
    }
    if (result.n_failed == result.rows.size()) {
        std::cerr << "all " << result.n_failed << " runs failed\n";
        return kExitRunFailure;
    }
    if (result.n_failed > 0) {
        std::cerr << result.n_failed << " of " << result.rows.size() << " runs failed\n";
        return kExitPartialSweep;
    }
    return kExitOk;
}

int run_report(const std::string& results_path, std::string summary_path,
               const std::string& out_dir) {
    auto rows = tslab::parse_results_csv(tslab::read_file(results_path));
    if (summary_path.empty()) {
        const fs::path sibling = fs::path(results_path).parent_path() / "summary.json";
        if (fs::exists(sibling)) summary_path = sibling.string();
    }
    std::vector<tslab::ScheduleSpec> schedules;
    if (!summary_path.empty()) {
        json summary = json::parse(tslab::read_file(summary_path));
        for (const auto& s : summary.at("schedules"))
            schedules.push_back(tslab::schedule_from_json(s));
    }
    tslab::Report rep = tslab::make_report(rows, schedules);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    tslab::write_file((dir / "improvement.csv").string(), rep.improvement_csv);
    tslab::write_file((dir / "k_sweep.csv").string(), rep.k_sweep_csv);
    tslab::write_file((dir / "metric_bars.csv").string(), rep.metric_bars_csv);
    if (!rep.temperature_curves_csv.empty()) {
        tslab::write_file((dir / "temperature_curves.csv").string(), rep.temperature_curves_csv);
    } else {
        std::cerr << "note: no summary.json found, skipping temperature_curves.csv\n";
    }
    std::cout << "report written to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-set recognition lab with epoch-wise temperature scheduling"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "Generate a synthetic open-set dataset");
    tslab::GeneratorSpec spec;
    std::string gen_csv = "dataset.csv";
    std::string gen_manifest = "dataset.manifest.json";
    std::string placement = "gaussian_means";
    std::string nonlinearity = "none";
    gen->add_option("--n-classes", spec.n_classes_total, "total classes");
    gen->add_option("--n-known", spec.n_known, "closed-set classes");
    gen->add_option("--dim", spec.dim, "feature dimension");
    gen->add_option("--samples-per-class", spec.samples_per_class, "samples per class");
    gen->add_option("--spread", spec.cluster_spread, "cluster noise sigma");
    gen->add_option("--placement", placement, "gaussian_means|ring");
    gen->add_option("--nonlinearity", nonlinearity, "none|radial_warp");
    gen->add_option("--seed", spec.seed, "generator seed");
    gen->add_option("--csv", gen_csv, "output csv path");
    gen->add_option("--manifest", gen_manifest, "output manifest path");

    // train
    auto* train_cmd =
        app.add_subcommand("train", "Train one experiment from a config file and/or flags");
    TrainFlags tf;
    train_cmd->add_option("--config", tf.config_path, "experiment config json");
    train_cmd->add_option("--out", tf.out, "output directory (overrides config)");
    train_cmd->add_option("--loss", tf.loss, "ce|supcon|supcon_ls (overrides config)");
    train_cmd->add_option("--epochs", tf.epochs, "training epochs (overrides config)");
    train_cmd->add_option("--seed", tf.seed, "experiment seed (overrides config)");
    train_cmd->add_option("--schedule", tf.schedule_json,
                          "schedule as inline json, e.g. '{\"kind\":\"negcos\",...}'");
    train_cmd->add_option("--dataset-csv", tf.dataset_csv, "dataset csv (with --dataset-manifest)");
    train_cmd->add_option("--dataset-manifest", tf.dataset_manifest, "dataset manifest json");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_csv, eval_manifest, eval_scores;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint json")->required();
    eval_cmd->add_option("--csv", eval_csv, "dataset csv")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest json")->required();
    eval_cmd->add_option("--scores", eval_scores, "write scores csv here");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Run a schedule x seed sweep");
    std::string sweep_config, sweep_out;
    int sweep_jobs = 0;
    sweep_cmd->add_option("--config", sweep_config, "sweep config json")->required();
    sweep_cmd->add_option("--out", sweep_out, "output directory (overrides config)");
    sweep_cmd->add_option("--jobs", sweep_jobs, "worker threads (overrides config)");

    // report
    auto* report_cmd = app.add_subcommand("report", "Build report tables from sweep results");
    std::string report_results, report_summary, report_out = "report";
    report_cmd->add_option("--results", report_results, "results csv from a sweep")->required();
    report_cmd->add_option("--summary", report_summary, "sweep summary json (for curves)");
    report_cmd->add_option("--out", report_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (gen->parsed()) {
            spec.placement = tslab::placement_from_string(placement);
            spec.nonlinearity = tslab::nonlinearity_from_string(nonlinearity);
            return run_generate(gen_csv, gen_manifest, spec);
        }
        if (train_cmd->parsed()) return run_train(tf);
        if (eval_cmd->parsed()) return run_evaluate(eval_ckpt, eval_csv, eval_manifest, eval_scores);
        if (sweep_cmd->parsed()) return run_sweep(sweep_config, sweep_out, sweep_jobs);
        if (report_cmd->parsed()) return run_report(report_results, report_summary, report_out);
    } catch (const tslab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const tslab::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRunFailure;
    }
    return kExitConfigError;
}
