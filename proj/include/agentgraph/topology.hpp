#pragma once

#include "agentgraph/provider.hpp"
#include "agentgraph/rational.hpp"
#include "agentgraph/trace.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace agentgraph {

// Resolves a model name to the provider that serves it and to its billing
// rates. Most fixtures register one default provider for every model.
class ProviderSet {
  public:
    void add(const std::string& model_name, std::shared_ptr<Provider> provider);
    void set_default(std::shared_ptr<Provider> provider);
    void set_rates(const std::string& model_name, CostRates rates);
    void set_default_rates(CostRates rates);

    Provider& resolve(const std::string& model_name) const; // Errc::config if none
    CostRates rates_for(const std::string& model_name) const;

  private:
    std::map<std::string, std::shared_ptr<Provider>> providers_;
    std::shared_ptr<Provider> default_provider_;
    std::map<std::string, CostRates> rates_;
    CostRates default_rates_;
};

struct SasConfig {
    std::string model_name;
    std::string prompt_template; // empty -> shipped default; must use {question} exactly once
    double temperature = 0.0;
    int max_tokens = 2048;
};

enum class Aggregation { Concatenate, Summarize };

struct DebateConfig {
    std::vector<std::string> solver_models; // size N >= 1
    int n_rounds = 2;                       // R >= 1
    Aggregation aggregation = Aggregation::Concatenate;
    std::string summarizer_model;           // Summarize only; empty -> first solver model
    // Every payload injected into another agent's prompt is cut to its first
    // ceil(fraction * length) characters. 1 = verbatim, 0 = dropped.
    Rational truncation_fraction = 1;
    int confidence_scale = 10;
    bool summarizer_sees_question = true;
    double temperature = 0.0;
    int max_tokens = 2048;
    // Empty templates fall back to the shipped defaults.
    std::string round_one_template;   // {question}
    std::string later_round_template; // {solutions}, {question}
    std::string summarizer_template;  // {solutions}, {question}
};

struct PipelineConfig {
    std::string analyzer_model;
    std::string coder_model;
    std::string analyzer_template; // empty -> shipped default; {question}
    std::string coder_template;    // empty -> shipped default; {question}, {analysis}
    double temperature = 0.0;
    int max_tokens = 2048;
};

// One self-reported confidence, already validated to 1..scale.
struct ConfidenceRecord {
    NodeId agent;
    std::uint32_t round = 0;
    int score = 0;
};

struct RunResult {
    ExecutionTrace trace;
    std::optional<std::string> final_answer;
    std::vector<ConfidenceRecord> confidences;
    // (agent id, round) -> raw completion text.
    std::map<std::pair<std::string, std::uint32_t>, std::string> raw_outputs;
    int confidence_parse_misses = 0;
};

// Content of the last balanced \boxed{...} in the text (outermost braces,
// whitespace-trimmed); earlier occurrences are tried if later ones never
// close. Absent when no balanced box exists.
std::optional<std::string> extract_answer(std::string_view text);

// Last "Confidence:" integer in the text when it lies in 0..scale; absent
// otherwise. Callers wanting the self-report convention (1..scale) filter
// zero out themselves.
std::optional<int> extract_confidence(std::string_view text, int scale = 10);

// ceil(fraction * full_length) with exact arithmetic; fraction must be in
// [0, 1] (Errc::domain).
std::size_t truncated_length(std::size_t full_length, const Rational& fraction);
std::string truncate_payload(std::string_view payload, const Rational& fraction);

// Modal answer; ties broken by the highest confidence supporting a tied
// answer (missing confidence counts lowest), then by the lowest index among
// the supporters that reported that confidence. Absent answers do not vote.
// Inputs must be the same length (Errc::length_mismatch).
std::optional<std::string> majority_vote(std::span<const std::optional<std::string>> answers,
                                         std::span<const std::optional<int>> confidences);

RunResult run_sas(const std::string& question, const SasConfig& config,
                  const ProviderSet& providers);

// N solvers, R rounds. Round 1 prompts carry only the question; later rounds
// inject every round-(t-1) output (Concatenate) or a one-call summary of them
// (Summarize), each injection truncated per truncation_fraction. A confidence
// request on 1..confidence_scale is appended to every solver prompt. Final
// answer = majority vote over the last round's answers; the summarizer's own
// confidence is recorded but never votes.
RunResult run_debate(const std::string& question, const DebateConfig& config,
                     const ProviderSet& providers);

// analyzer call then coder call; the coder sees the question plus the full
// analyzer output, and its reply is the final answer payload (the last
// balanced \boxed{...} when present, otherwise the trimmed reply itself).
// Provider failures are rethrown with the failing stage named.
RunResult run_pipeline(const std::string& question, const PipelineConfig& config,
                       const ProviderSet& providers);

} // namespace agentgraph
