#include "agentgraph/trace.hpp"

#include "agentgraph/errors.hpp"

#include <json.hpp>

#include <istream>
#include <ostream>
#include <sstream>
#include <utility>

namespace agentgraph {

using nlohmann::json;

Node Node::agent(std::string id, std::string model, std::string role, CostRates rates) {
    Node n;
    n.id = NodeId{std::move(id)};
    n.kind = NodeKind::LlmAgent;
    n.model_name = std::move(model);
    n.role_name = std::move(role);
    n.rates = std::move(rates);
    return n;
}

Node Node::tool(std::string id, std::string name, CostRates rates) {
    Node n;
    n.id = NodeId{std::move(id)};
    n.kind = NodeKind::Tool;
    n.tool_name = std::move(name);
    n.rates = std::move(rates);
    return n;
}

ExecutionTrace::ExecutionTrace(std::string request_id) : request_id_(std::move(request_id)) {}

const NodeId& ExecutionTrace::add_node(Node node) {
    if (node.id.value.empty()) fail(Errc::domain, "node id must be non-empty");
    if (node.rates.input_rate < 0 || node.rates.output_rate < 0)
        fail(Errc::domain, "negative cost rate on node '" + node.id.value + "'");
    auto [it, inserted] = node_index_.emplace(node.id.value, nodes_.size());
    if (!inserted) fail(Errc::duplicate_node, "duplicate node id '" + node.id.value + "'");
    nodes_.push_back(std::move(node));
    return nodes_.back().id;
}

bool ExecutionTrace::has_node(const NodeId& id) const {
    return node_index_.count(id.value) != 0;
}

const Node& ExecutionTrace::node(const NodeId& id) const {
    auto it = node_index_.find(id.value);
    if (it == node_index_.end()) fail(Errc::unknown_node, "unknown node id '" + id.value + "'");
    return nodes_[it->second];
}

void ExecutionTrace::record_message(Message message) {
    if (!has_node(message.src))
        fail(Errc::unknown_node, "message src '" + message.src.value + "' not in trace");
    if (!has_node(message.dst))
        fail(Errc::unknown_node, "message dst '" + message.dst.value + "' not in trace");
    messages_.push_back(std::move(message));
}

void ExecutionTrace::set_final_answer(std::optional<std::string> answer) {
    final_answer_ = std::move(answer);
}

CostBreakdown& merge_into(CostBreakdown& base, const CostBreakdown& extra) {
    base.total += extra.total;
    base.prefill_total += extra.prefill_total;
    base.decode_total += extra.decode_total;
    for (const auto& [id, cost] : extra.per_node) base.per_node[id] += cost;
    return base;
}

Rational message_cost(const ExecutionTrace& trace, const Message& message) {
    const Node& src = trace.node(message.src);
    const Node& dst = trace.node(message.dst);
    return Rational(message.decode_tokens) * src.rates.output_rate +
           Rational(message.prefill_tokens) * dst.rates.input_rate;
}

CostBreakdown request_cost(const ExecutionTrace& trace) {
    CostBreakdown out;
    for (const Message& m : trace.messages()) {
        const Node& src = trace.node(m.src);
        const Node& dst = trace.node(m.dst);
        Rational decode_part = Rational(m.decode_tokens) * src.rates.output_rate;
        Rational prefill_part = Rational(m.prefill_tokens) * dst.rates.input_rate;
        out.per_node[m.src] += decode_part;
        out.per_node[m.dst] += prefill_part;
        out.total += decode_part + prefill_part;
        out.prefill_total += m.prefill_tokens;
        out.decode_total += m.decode_tokens;
    }
    return out;
}

std::uint64_t weighted_token_cost(std::uint64_t prefill_tokens, std::uint64_t decode_tokens) {
    return prefill_tokens + 2 * decode_tokens;
}

std::string system_class_name(SystemClass cls) {
    return cls == SystemClass::Sas ? "sas" : "mas";
}

SystemClass system_class_from_name(const std::string& name) {
    if (name == "sas") return SystemClass::Sas;
    if (name == "mas") return SystemClass::Mas;
    fail(Errc::parse, "unknown system class '" + name + "'");
}

SystemClass classify_system(const ExecutionTrace& trace) {
    std::size_t agents = 0;
    for (const Node& n : trace.nodes())
        if (n.kind == NodeKind::LlmAgent) ++agents;
    if (agents == 0)
        fail(Errc::no_llm_node, "trace '" + trace.request_id() + "' has no agent node");
    return agents == 1 ? SystemClass::Sas : SystemClass::Mas;
}

TokenReport aggregate_token_report(std::span<const ExecutionTrace> traces,
                                   const std::map<std::string, SystemClass>& grouping,
                                   const std::set<std::string>& exclude_roles) {
    TokenReport report;
    for (const ExecutionTrace& trace : traces) {
        auto it = grouping.find(trace.request_id());
        if (it == grouping.end())
            fail(Errc::missing_group, "no group for request '" + trace.request_id() + "'");
        GroupTokenStats& stats = it->second == SystemClass::Sas ? report.sas : report.mas;
        stats.traces += 1;
        for (const Message& m : trace.messages()) {
            const Node& dst = trace.node(m.dst);
            if (dst.kind == NodeKind::LlmAgent && exclude_roles.count(dst.role_name)) continue;
            stats.prefill_sum += m.prefill_tokens;
            stats.decode_sum += m.decode_tokens;
        }
    }
    auto finish = [](GroupTokenStats& stats) {
        if (stats.traces == 0) return;
        stats.mean_prefill = Rational(stats.prefill_sum) / Rational(stats.traces);
        stats.mean_decode = Rational(stats.decode_sum) / Rational(stats.traces);
    };
    finish(report.sas);
    finish(report.mas);
    if (report.sas.mean_prefill && report.mas.mean_prefill && *report.sas.mean_prefill != 0)
        report.prefill_ratio = *report.mas.mean_prefill / *report.sas.mean_prefill;
    if (report.sas.mean_decode && report.mas.mean_decode && *report.sas.mean_decode != 0)
        report.decode_ratio = *report.mas.mean_decode / *report.sas.mean_decode;
    return report;
}

namespace {

json node_to_json(const Node& n) {
    json j;
    j["id"] = n.id.value;
    j["kind"] = n.kind == NodeKind::LlmAgent ? "llm_agent" : "tool";
    if (n.kind == NodeKind::LlmAgent) {
        j["model_name"] = n.model_name;
        j["role_name"] = n.role_name;
    } else {
        j["tool_name"] = n.tool_name;
    }
    j["input_rate"] = rational_str(n.rates.input_rate);
    j["output_rate"] = rational_str(n.rates.output_rate);
    return j;
}

Node node_from_json(const json& j) {
    Node n;
    n.id = NodeId{j.at("id").get<std::string>()};
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "llm_agent") {
        n.kind = NodeKind::LlmAgent;
        n.model_name = j.at("model_name").get<std::string>();
        n.role_name = j.at("role_name").get<std::string>();
    } else if (kind == "tool") {
        n.kind = NodeKind::Tool;
        n.tool_name = j.at("tool_name").get<std::string>();
    } else {
        fail(Errc::parse, "unknown node kind '" + kind + "'");
    }
    n.rates.input_rate = parse_rational(j.at("input_rate").get<std::string>());
    n.rates.output_rate = parse_rational(j.at("output_rate").get<std::string>());
    return n;
}

} // namespace

void export_traces(std::ostream& out, std::span<const ExecutionTrace> traces) {
    for (const ExecutionTrace& trace : traces) {
        json header;
        header["type"] = "trace";
        header["request_id"] = trace.request_id();
        if (trace.final_answer())
            header["final_answer"] = *trace.final_answer();
        else
            header["final_answer"] = nullptr;
        json nodes = json::array();
        for (const Node& n : trace.nodes()) nodes.push_back(node_to_json(n));
        header["nodes"] = std::move(nodes);
        out << header.dump() << '\n';
        for (const Message& m : trace.messages()) {
            json rec;
            rec["type"] = "message";
            rec["request_id"] = trace.request_id();
            rec["round"] = m.round;
            rec["src"] = m.src.value;
            rec["dst"] = m.dst.value;
            rec["prefill_tokens"] = m.prefill_tokens;
            rec["decode_tokens"] = m.decode_tokens;
            rec["payload"] = m.payload;
            out << rec.dump() << '\n';
        }
    }
}

std::vector<ExecutionTrace> import_traces(std::istream& in) {
    std::vector<ExecutionTrace> traces;
    std::unordered_map<std::string, std::size_t> by_id;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(Errc::parse, "line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            std::string type = j.at("type").get<std::string>();
            if (type == "trace") {
                std::string id = j.at("request_id").get<std::string>();
                if (by_id.count(id))
                    fail(Errc::duplicate_request_id,
                         "line " + std::to_string(line_no) + ": duplicate request id '" + id + "'");
                ExecutionTrace trace(id);
                for (const json& nj : j.at("nodes")) trace.add_node(node_from_json(nj));
                if (!j.at("final_answer").is_null())
                    trace.set_final_answer(j.at("final_answer").get<std::string>());
                by_id.emplace(id, traces.size());
                traces.push_back(std::move(trace));
            } else if (type == "message") {
                std::string id = j.at("request_id").get<std::string>();
                auto it = by_id.find(id);
                if (it == by_id.end())
                    fail(Errc::parse, "line " + std::to_string(line_no) +
                                          ": message for unknown request '" + id + "'");
                Message m;
                m.round = j.at("round").get<std::uint32_t>();
                m.src = NodeId{j.at("src").get<std::string>()};
                m.dst = NodeId{j.at("dst").get<std::string>()};
                m.prefill_tokens = j.at("prefill_tokens").get<std::uint64_t>();
                m.decode_tokens = j.at("decode_tokens").get<std::uint64_t>();
                m.payload = j.at("payload").get<std::string>();
                traces[it->second].record_message(std::move(m));
            } else {
                fail(Errc::parse, "line " + std::to_string(line_no) + ": unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            fail(Errc::parse, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return traces;
}

std::string export_traces_string(std::span<const ExecutionTrace> traces) {
    std::ostringstream out;
    export_traces(out, traces);
    return out.str();
}

std::vector<ExecutionTrace> import_traces_string(const std::string& text) {
    std::istringstream in(text);
    return import_traces(in);
}

} // namespace agentgraph
