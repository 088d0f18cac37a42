// Command-line front end: run experiments, replay traces into an importance
// ledger, and re-render saved reports.

#include "agentgraph/errors.hpp"
#include "agentgraph/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace agentgraph;

std::vector<std::string> split_arms(const std::string& csv) {
    std::vector<std::string> arms;
    std::stringstream in(csv);
    std::string part;
    while (std::getline(in, part, ','))
        if (!part.empty()) arms.push_back(part);
    return arms;
}

int cmd_run(const std::string& config_path, const std::string& dataset,
            const std::string& arms_csv, const std::string& out_dir, std::int64_t seed,
            bool seed_set, int parallelism) {
    ExperimentConfig config = load_experiment_config(config_path);
    if (!dataset.empty()) config.dataset_path = dataset;
    if (!arms_csv.empty()) config.arms = split_arms(arms_csv);
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (seed_set) config.seed = seed;
    if (parallelism > 0) config.parallelism = parallelism;
    if (config.out_dir.empty()) config.out_dir = "out";

    ExperimentOutput output = run_experiment(config);
    write_outputs(output, config.out_dir);
    std::cout << render_report_table(output.report);
    std::cout << "\nwrote report.json, report.txt, traces.jsonl, decisions.jsonl to "
              << config.out_dir << "\n";
    return 0;
}

int cmd_trace(const std::string& traces_path, const std::string& dataset_path, int scale,
              const std::string& out_path) {
    std::ifstream in(traces_path);
    if (!in) fail(Errc::io, "cannot open '" + traces_path + "'");
    std::vector<ExecutionTrace> traces = import_traces(in);
    std::vector<DatasetRecord> records = load_dataset(dataset_path);
    ImportanceLedger ledger = build_ledger(traces, records, std::nullopt, scale);

    std::cout << "agent importance (scale " << ledger.scale() << ", " << traces.size()
              << " traces)\n";
    for (const auto& [agent, score] : ledger.scores())
        std::cout << "  " << agent.value << ": " << score << "\n";
    if (!ledger.empty()) {
        std::cout << "least important: " << ledger.least_important().value << "\n";
        std::cout << "most important: " << ledger.most_important().value << "\n";
        std::cout << "recommendation (upgrade): "
                  << recommend(ledger, RecommendMode::Upgrade).value << "\n";
        std::cout << "recommendation (downgrade): "
                  << recommend(ledger, RecommendMode::Downgrade).value << "\n";
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) fail(Errc::io, "cannot write '" + out_path + "'");
        export_ledger(out, ledger);
        std::cout << "wrote ledger snapshot to " << out_path << "\n";
    }
    return 0;
}

int cmd_report(const std::string& in_path, const std::string& format,
               const std::string& out_path) {
    std::ifstream in(in_path);
    if (!in) fail(Errc::io, "cannot open '" + in_path + "'");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) fail(Errc::parse, "'" + in_path + "' is not valid JSON");
    RunReport report = report_from_json(j);

    std::string rendered;
    if (format == "table-text") {
        rendered = render_report_table(report);
    } else if (format == "machine-readable") {
        rendered = report_to_json(report).dump(2) + "\n";
    } else {
        fail(Errc::config, "unknown format '" + format + "'");
    }
    if (out_path.empty()) {
        std::cout << rendered;
    } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) fail(Errc::io, "cannot write '" + out_path + "'");
        out << rendered;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"agent-graph experiment harness"};
    app.require_subcommand(1);

    std::string config_path, dataset, arms_csv, out_dir;
    std::int64_t seed = 0;
    int parallelism = 0;
    auto* run = app.add_subcommand("run", "run experiment arms over a dataset");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--dataset", dataset, "dataset JSONL (overrides config)");
    run->add_option("--arms", arms_csv, "comma list: sas,mas,route,cascade");
    run->add_option("--out", out_dir, "output directory");
    auto* seed_opt = run->add_option("--seed", seed, "seed recorded in the report");
    run->add_option("--parallelism", parallelism, "worker threads (1 = serial)");

    std::string traces_path, trace_dataset, ledger_out;
    int scale = 10;
    auto* trace = app.add_subcommand("trace", "replay traces into an importance ledger");
    trace->add_option("--traces", traces_path, "traces.jsonl from a run")->required();
    trace->add_option("--dataset", trace_dataset, "dataset JSONL with references")->required();
    trace->add_option("--scale", scale, "confidence scale (default 10)");
    trace->add_option("--out", ledger_out, "write ledger snapshot here");

    std::string report_in, report_format = "table-text", report_out;
    auto* report = app.add_subcommand("report", "re-render a saved report");
    report->add_option("--in", report_in, "report.json from a run")->required();
    report->add_option("--format", report_format, "table-text | machine-readable");
    report->add_option("--out", report_out, "write here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(config_path, dataset, arms_csv, out_dir, seed,
                           seed_opt->count() > 0, parallelism);
        if (trace->parsed()) return cmd_trace(traces_path, trace_dataset, scale, ledger_out);
        if (report->parsed()) return cmd_report(report_in, report_format, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
