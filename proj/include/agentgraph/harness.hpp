#pragma once

#include "agentgraph/http_provider.hpp"
#include "agentgraph/policy.hpp"
#include "agentgraph/provider.hpp"
#include "agentgraph/rational.hpp"
#include "agentgraph/topology.hpp"
#include "agentgraph/trace.hpp"
#include "agentgraph/tracing.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace agentgraph {

// One evaluation item. evaluator tags: "exact_match", "numeric_match"
// (optional "tolerance"), "custom:<hook>". fields keeps the raw record so a
// policy override can point the verifier at any field.
struct DatasetRecord {
    std::string id;
    std::string question;
    std::string reference;
    nlohmann::json fields;
    std::string evaluator = "exact_match";
    std::optional<Rational> tolerance;
};

// JSONL, one {"id", "question", "reference", ...} object per line. Duplicate
// ids raise Errc::duplicate_request_id; malformed lines Errc::parse with the
// line number.
std::vector<DatasetRecord> load_dataset(const std::string& path);
std::vector<DatasetRecord> parse_dataset(const std::string& text);

struct VerifierSpec {
    std::string kind = "exact_match"; // same tags as DatasetRecord::evaluator
    std::string reference_field = "reference";
    std::optional<Rational> tolerance;
};

// Verifier for a record: the override wins when present, otherwise the
// record's own evaluator tag with its "reference" field.
Verifier verifier_for(const DatasetRecord& record,
                      const std::optional<VerifierSpec>& override_spec);

struct QuadrantTable {
    std::uint64_t both_pass = 0;
    std::uint64_t both_fail = 0;
    std::uint64_t sas_win = 0; // SAS correct, MAS wrong
    std::uint64_t mas_win = 0;

    std::uint64_t total() const { return both_pass + both_fail + sas_win + mas_win; }
    bool operator==(const QuadrantTable&) const = default;
};

// Errc::length_mismatch unless the vectors are the same length.
QuadrantTable quadrant(const std::vector<bool>& sas_correct, const std::vector<bool>& mas_correct);

struct ProviderSpec {
    enum class Kind { Scripted, Http };
    Kind kind = Kind::Scripted;
    std::string script_path; // Scripted
    HttpProviderConfig http; // Http
};

struct ExperimentConfig {
    std::string dataset_path;
    std::vector<std::string> arms; // any of "sas", "mas", "route", "cascade"
    std::string out_dir;
    std::int64_t seed = 0; // recorded in the report; runs are deterministic regardless
    int parallelism = 1;
    ProviderSpec provider;
    CostRates default_rates;
    std::map<std::string, CostRates> model_rates;
    std::optional<SasConfig> sas;
    std::optional<MasConfig> mas;
    std::optional<RaterConfig> rater;
    std::optional<VerifierSpec> verifier_override;
};

// JSON config file; relative template/script paths resolve against the
// config file's directory. See README for the schema.
ExperimentConfig load_experiment_config(const std::string& path);

struct ArmOutcome {
    bool ran = false;
    bool failed = false; // provider error; counts as incorrect
    bool correct = false;
    std::optional<std::string> answer;
    Rational cost = 0;
    std::uint64_t prefill_tokens = 0;
    std::uint64_t decode_tokens = 0;
    std::uint64_t weighted_tokens = 0;

    bool operator==(const ArmOutcome&) const = default;
};

struct RouteDecision {
    std::optional<int> score;
    SystemClass target = SystemClass::Sas;
    Rational rater_cost = 0;

    bool operator==(const RouteDecision&) const = default;
};

struct CascadeSummary {
    bool verified = false;
    bool escalated = false;
    Rational sas_cost = 0;
    Rational mas_cost = 0;

    bool operator==(const CascadeSummary&) const = default;
};

struct ItemResult {
    std::string id;
    std::map<std::string, ArmOutcome> arms;
    std::optional<RouteDecision> route;
    std::optional<CascadeSummary> cascade;

    bool operator==(const ItemResult&) const = default;
};

struct RunReport {
    std::uint64_t dataset_size = 0;
    std::int64_t seed = 0;
    int parallelism = 1;
    std::vector<std::string> arms;
    std::vector<ItemResult> items; // sorted by id
    std::map<std::string, std::uint64_t> failures;
    std::map<std::string, Rational> accuracy;
    std::map<std::string, Rational> mean_cost;
    std::map<std::string, Rational> mean_weighted_tokens;
    std::optional<Rational> p_route_mas;
    std::optional<Rational> p_cascade_pass;
    std::optional<QuadrantTable> quadrant;
    std::optional<TokenReport> tokens; // SAS vs MAS arms, when both ran
    std::optional<TokenReport> tokens_excluding_summarizer;

    bool operator==(const RunReport&) const = default;
};

// Decision-log row, one per item per policy arm.
struct DecisionRecord {
    std::string request_id;
    std::optional<int> score;
    std::string target; // "sas" or "mas"
    bool escalated = false;
    Rational sas_cost = 0;
    Rational mas_cost = 0;
    Rational rater_cost = 0;

    bool operator==(const DecisionRecord&) const = default;
};

struct ExperimentOutput {
    RunReport report;
    std::vector<ExecutionTrace> traces; // request ids "<item id>#<arm>[...]", sorted
    std::vector<DecisionRecord> decisions;
};

// Runs every requested arm over the dataset. parallelism == 1 uses the plain
// serial loop (the reference path); higher values run items concurrently and
// produce the identical report, which requires a matched-mode script or an
// HTTP backend (a sequential script with parallelism > 1 is Errc::config).
// Per-item provider errors mark that arm failed and the run continues;
// configuration errors abort.
ExperimentOutput run_experiment(const ExperimentConfig& config);

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);
std::string render_report_table(const RunReport& report);

// Writes report.json, report.txt, traces.jsonl, decisions.jsonl.
void write_outputs(const ExperimentOutput& output, const std::string& out_dir);

// Rebuilds the importance ledger from exported traces: each trace's final
// answer is verified against its dataset record (request ids are matched on
// the part before '#'), and every agent-destined message contributes its
// self-reported confidence for its round. Traces without a matching record
// raise Errc::missing_group.
ImportanceLedger build_ledger(std::span<const ExecutionTrace> traces,
                              const std::vector<DatasetRecord>& records,
                              const std::optional<VerifierSpec>& override_spec, int scale = 10);

} // namespace agentgraph
