#include "agentgraph/tracing.hpp"

#include "agentgraph/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <istream>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

namespace agentgraph {

using nlohmann::json;

ImportanceLedger::ImportanceLedger(int scale) : scale_(scale) {
    if (scale < 1) fail(Errc::domain, "ledger scale must be >= 1");
}

std::uint64_t ImportanceLedger::increment(bool output_correct, int confidence, int scale) {
    return output_correct ? static_cast<std::uint64_t>(confidence)
                          : static_cast<std::uint64_t>(scale - confidence);
}

void ImportanceLedger::update(std::uint32_t round, bool output_correct,
                              std::span<const ConfidenceRecord> confidences) {
    for (const ConfidenceRecord& record : confidences) {
        if (record.score < 1 || record.score > scale_)
            fail(Errc::out_of_range_confidence,
                 "confidence " + std::to_string(record.score) + " outside 1.." +
                     std::to_string(scale_) + " for agent '" + record.agent.value + "'");
        if (record.round != round)
            fail(Errc::domain, "record round " + std::to_string(record.round) +
                                   " does not match update round " + std::to_string(round));
        std::uint64_t delta = increment(output_correct, record.score, scale_);
        totals_[record.agent] += delta;
        per_round_[{record.agent, round}] += delta;
    }
}

std::uint64_t ImportanceLedger::score(const NodeId& agent) const {
    auto it = totals_.find(agent);
    return it == totals_.end() ? 0 : it->second;
}

std::uint64_t ImportanceLedger::round_score(const NodeId& agent, std::uint32_t round) const {
    auto it = per_round_.find({agent, round});
    return it == per_round_.end() ? 0 : it->second;
}

NodeId ImportanceLedger::least_important() const {
    if (totals_.empty()) fail(Errc::empty_ledger, "ledger has no observations");
    const NodeId* best = nullptr;
    std::uint64_t best_score = 0;
    for (const auto& [agent, score] : totals_) { // map order: id ascending
        if (!best || score < best_score) {
            best = &agent;
            best_score = score;
        }
    }
    return *best;
}

NodeId ImportanceLedger::most_important() const {
    if (totals_.empty()) fail(Errc::empty_ledger, "ledger has no observations");
    const NodeId* best = nullptr;
    std::uint64_t best_score = 0;
    for (const auto& [agent, score] : totals_) {
        if (!best || score > best_score) {
            best = &agent;
            best_score = score;
        }
    }
    return *best;
}

std::string recommend_mode_name(RecommendMode mode) {
    return mode == RecommendMode::Upgrade ? "upgrade" : "downgrade";
}

NodeId recommend(const ImportanceLedger& ledger, RecommendMode) {
    return ledger.least_important();
}

void export_ledger(std::ostream& out, const ImportanceLedger& ledger) {
    json header;
    header["type"] = "ledger";
    header["scale"] = ledger.scale();
    out << header.dump() << '\n';
    // Rows grouped per agent with rounds ascending, so running totals are
    // well defined; agents in id order for byte-stable output.
    std::map<NodeId, std::uint64_t> running;
    for (const auto& [key, delta] : ledger.round_scores()) {
        const auto& [agent, round] = key;
        running[agent] += delta;
        json row;
        row["type"] = "row";
        row["agent"] = agent.value;
        row["round"] = round;
        row["increment"] = delta;
        row["running_total"] = running[agent];
        out << row.dump() << '\n';
    }
}

ImportanceLedger import_ledger(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    int scale = 10;
    std::map<NodeId, std::uint64_t> running;
    std::vector<std::tuple<NodeId, std::uint32_t, std::uint64_t>> rows;
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
            if (type == "ledger") {
                if (have_header)
                    fail(Errc::parse, "line " + std::to_string(line_no) + ": second header");
                scale = j.at("scale").get<int>();
                have_header = true;
            } else if (type == "row") {
                if (!have_header)
                    fail(Errc::parse, "line " + std::to_string(line_no) + ": row before header");
                NodeId agent{j.at("agent").get<std::string>()};
                auto round = j.at("round").get<std::uint32_t>();
                auto delta = j.at("increment").get<std::uint64_t>();
                auto total = j.at("running_total").get<std::uint64_t>();
                running[agent] += delta;
                if (running[agent] != total)
                    fail(Errc::parse, "line " + std::to_string(line_no) +
                                          ": running total mismatch for agent '" + agent.value +
                                          "'");
                rows.emplace_back(std::move(agent), round, delta);
            } else {
                fail(Errc::parse,
                     "line " + std::to_string(line_no) + ": unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            fail(Errc::parse, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_header) fail(Errc::parse, "ledger snapshot has no header");
    ImportanceLedger ledger(scale);
    for (const auto& [agent, round, delta] : rows) {
        // Replay as synthetic correct-outcome observations whose confidences
        // sum to the stored increment; a zero increment is a wrong-outcome
        // observation at full confidence, which keeps the agent listed.
        if (delta == 0) {
            ConfidenceRecord record{agent, round, ledger.scale()};
            ledger.update(round, false, std::span<const ConfidenceRecord>(&record, 1));
            continue;
        }
        std::uint64_t remaining = delta;
        while (remaining > 0) {
            int step = static_cast<int>(std::min<std::uint64_t>(remaining, ledger.scale()));
            ConfidenceRecord record{agent, round, step};
            ledger.update(round, true, std::span<const ConfidenceRecord>(&record, 1));
            remaining -= static_cast<std::uint64_t>(step);
        }
    }
    return ledger;
}

} // namespace agentgraph
