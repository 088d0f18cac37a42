#pragma once

#include "agentgraph/provider.hpp"
#include "agentgraph/rational.hpp"
#include "agentgraph/topology.hpp"
#include "agentgraph/trace.hpp"

#include <functional>
#include <optional>
#include <string>
#include <variant>

namespace agentgraph {

enum class RaterMode { Scaled, Binary };

struct RaterConfig {
    std::string rater_model;
    RaterMode mode = RaterMode::Scaled;
    int threshold = 5;        // Scaled only: route to MAS when score > threshold
    std::string prompt;       // system prompt; empty -> shipped default for the mode
    double temperature = 0.0; // deliberately cold so routing is reproducible
    int max_tokens = 300;
    // When the backend reports cached prefill tokens, bill them at zero: the
    // rater reuses one system prompt across a batch, so a caching backend only
    // really pays for it once. Disable to bill every call at face value.
    bool discount_cached_prefill = true;
};

struct RatingOutcome {
    std::optional<int> score; // absent when the reply had no usable rating
    CostBreakdown cost;
    ExecutionTrace trace;
};

// One rater call. Scaled mode expects {"rating": 1..10} in the reply (bare
// or inside a ```json fence), binary mode {"class": 0|1}; anything else
// leaves score absent.
RatingOutcome rate_difficulty(const std::string& question, const RaterConfig& config,
                              const ProviderSet& providers);

// Scaled: MAS iff score > threshold. Binary: MAS iff class == 1. An absent
// score fails open to MAS (the safe, stronger system).
SystemClass route(std::optional<int> score, const RaterConfig& config);

// Expected per-request cost of rater-first routing that sends fraction p of
// the traffic to MAS: c_rater + p * c_mas + (1 - p) * c_sas. p must lie in
// [0, 1], costs must be >= 0 (Errc::domain).
Rational routing_cost(const Rational& p, const Rational& c_rater, const Rational& c_sas,
                      const Rational& c_mas);

// Expected per-request cost of try-SAS-first escalation when SAS passes the
// verifier with probability p: c_sas + (1 - p) * c_mas.
Rational cascade_cost(const Rational& p, const Rational& c_sas, const Rational& c_mas);

// Answer acceptance test used by the cascade and by accuracy scoring.
struct Verifier {
    enum class Kind { ExactMatch, NumericMatch, Custom };
    Kind kind = Kind::ExactMatch;
    std::string reference;       // ExactMatch
    Rational numeric_reference;  // NumericMatch
    Rational tolerance = 0;      // NumericMatch, >= 0
    std::string hook_name;       // Custom

    static Verifier exact(std::string reference);
    static Verifier numeric(Rational reference, Rational tolerance = 0);
    static Verifier custom(std::string hook_name);
};

using VerifyHook = std::function<bool(const std::string& answer)>;

// Process-wide registry for Custom verifiers; re-registering a name replaces
// the hook. verify() raises Errc::custom_hook_missing for unknown names.
void register_verify_hook(const std::string& name, VerifyHook hook);

// Absent answers never verify. ExactMatch compares whitespace-trimmed
// strings; NumericMatch parses the answer as a rational (trimmed, exact) and
// checks |answer - reference| <= tolerance, failing on unparseable text.
bool verify(const std::optional<std::string>& answer, const Verifier& verifier);

using MasConfig = std::variant<DebateConfig, PipelineConfig>;

RunResult run_mas(const std::string& question, const MasConfig& config,
                  const ProviderSet& providers);

struct CascadeOutcome {
    RunResult sas_result;
    bool verified = false;  // SAS answer passed the verifier
    bool escalated = false; // always == !verified
    std::optional<RunResult> mas_result; // present iff escalated
    std::optional<std::string> final_answer;
    CostBreakdown total_cost; // SAS cost, plus MAS cost when escalated
};

CascadeOutcome run_cascade(const std::string& question, const SasConfig& sas,
                           const MasConfig& mas, const Verifier& verifier,
                           const ProviderSet& providers);

} // namespace agentgraph
