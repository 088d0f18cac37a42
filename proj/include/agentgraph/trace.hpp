#pragma once

#include "agentgraph/rational.hpp"

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace agentgraph {

struct NodeId {
    std::string value;

    auto operator<=>(const NodeId&) const = default;
};

// Per-token billing rates for the model backing a node, in abstract cost
// units. input_rate prices prefill tokens consumed by the node, output_rate
// prices decode tokens it produces. Both must be >= 0.
struct CostRates {
    Rational input_rate = 1;
    Rational output_rate = 1;
};

enum class NodeKind { LlmAgent, Tool };

struct Node {
    NodeId id;
    NodeKind kind = NodeKind::LlmAgent;
    std::string model_name; // LlmAgent only
    std::string role_name;  // LlmAgent only, e.g. "solver", "summarizer"
    std::string tool_name;  // Tool only
    CostRates rates;

    static Node agent(std::string id, std::string model, std::string role,
                      CostRates rates = {});
    static Node tool(std::string id, std::string name, CostRates rates = {});
};

// One billed completion call, recorded as an edge. dst is the node that made
// the call (and was billed prefill_tokens for its context); src is the single
// upstream node whose output fed that context, or dst itself when the context
// came from nowhere else (round one, or several upstreams merged by dst).
// payload is the text dst produced; decode_tokens is its billed size.
struct Message {
    NodeId src;
    NodeId dst;
    std::uint32_t round = 0;
    std::uint64_t prefill_tokens = 0;
    std::uint64_t decode_tokens = 0;
    std::string payload;
};

class ExecutionTrace {
  public:
    ExecutionTrace() = default;
    explicit ExecutionTrace(std::string request_id);

    const std::string& request_id() const { return request_id_; }
    void set_request_id(std::string id) { request_id_ = std::move(id); }

    // Duplicate ids raise Errc::duplicate_node.
    const NodeId& add_node(Node node);
    bool has_node(const NodeId& id) const;
    // Unknown ids raise Errc::unknown_node.
    const Node& node(const NodeId& id) const;

    // Both endpoints must already exist (Errc::unknown_node otherwise).
    void record_message(Message message);

    std::span<const Node> nodes() const { return nodes_; }          // insertion order
    std::span<const Message> messages() const { return messages_; } // insertion order

    const std::optional<std::string>& final_answer() const { return final_answer_; }
    void set_final_answer(std::optional<std::string> answer);

  private:
    std::string request_id_;
    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::size_t> node_index_;
    std::vector<Message> messages_;
    std::optional<std::string> final_answer_;
};

struct CostBreakdown {
    Rational total = 0;
    std::map<NodeId, Rational> per_node; // decode billed to src, prefill to dst
    std::uint64_t prefill_total = 0;
    std::uint64_t decode_total = 0;
};

CostBreakdown& merge_into(CostBreakdown& base, const CostBreakdown& extra);

// decode_tokens * output_rate(src) + prefill_tokens * input_rate(dst).
Rational message_cost(const ExecutionTrace& trace, const Message& message);

CostBreakdown request_cost(const ExecutionTrace& trace);

// prefill + 2 * decode: the flat latency/cost proxy used when comparing
// systems without per-model dollar rates.
std::uint64_t weighted_token_cost(std::uint64_t prefill_tokens, std::uint64_t decode_tokens);

enum class SystemClass { Sas, Mas };

std::string system_class_name(SystemClass cls);
SystemClass system_class_from_name(const std::string& name);

// Counts LlmAgent nodes: exactly one -> Sas, more -> Mas. Tool nodes never
// matter. A trace with no agent at all raises Errc::no_llm_node.
SystemClass classify_system(const ExecutionTrace& trace);

struct GroupTokenStats {
    std::size_t traces = 0;
    std::uint64_t prefill_sum = 0;
    std::uint64_t decode_sum = 0;
    std::optional<Rational> mean_prefill; // absent when traces == 0
    std::optional<Rational> mean_decode;

    bool operator==(const GroupTokenStats&) const = default;
};

struct TokenReport {
    GroupTokenStats sas;
    GroupTokenStats mas;
    std::optional<Rational> prefill_ratio; // MAS mean / SAS mean, absent if undefined
    std::optional<Rational> decode_ratio;

    bool operator==(const TokenReport&) const = default;
};

// grouping maps request_id -> class; traces whose id is missing from the map
// raise Errc::missing_group. Messages whose dst agent's role_name is listed
// in exclude_roles contribute nothing (used to report MAS totals with the
// summarizer's own usage stripped out).
TokenReport aggregate_token_report(std::span<const ExecutionTrace> traces,
                                   const std::map<std::string, SystemClass>& grouping,
                                   const std::set<std::string>& exclude_roles = {});

// Line-delimited JSON: one header record per trace (request id + node table)
// followed by one record per message, in order. Import rejects duplicate
// request ids (Errc::duplicate_request_id) and malformed lines (Errc::parse,
// message names the line number).
void export_traces(std::ostream& out, std::span<const ExecutionTrace> traces);
std::vector<ExecutionTrace> import_traces(std::istream& in);
std::string export_traces_string(std::span<const ExecutionTrace> traces);
std::vector<ExecutionTrace> import_traces_string(const std::string& text);

} // namespace agentgraph
