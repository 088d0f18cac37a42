#pragma once

#include "agentgraph/topology.hpp"
#include "agentgraph/trace.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <utility>

namespace agentgraph {

// Accumulates per-agent importance from self-reported confidences. Each
// (request, round) observation adds, for every agent with a confidence c in
// that round: c when the request's final output was correct, (scale - c)
// when it was wrong. Low totals mark the agent most worth upgrading.
class ImportanceLedger {
  public:
    explicit ImportanceLedger(int scale = 10); // Errc::domain unless scale >= 1

    int scale() const { return scale_; }
    bool empty() const { return totals_.empty(); }

    // The increment rule on its own, for callers and property checks.
    static std::uint64_t increment(bool output_correct, int confidence, int scale);

    // One observation: every record must carry 1 <= score <= scale
    // (Errc::out_of_range_confidence) and round must match the argument.
    // Updates commute, so replaying observations in any order gives the
    // same totals.
    void update(std::uint32_t round, bool output_correct,
                std::span<const ConfidenceRecord> confidences);

    std::uint64_t score(const NodeId& agent) const; // 0 when unseen
    std::uint64_t round_score(const NodeId& agent, std::uint32_t round) const;
    const std::map<NodeId, std::uint64_t>& scores() const { return totals_; }
    const std::map<std::pair<NodeId, std::uint32_t>, std::uint64_t>& round_scores() const {
        return per_round_;
    }

    // argmin / argmax over totals; ties break to the lexically smallest
    // agent id. Errc::empty_ledger when nothing has been recorded.
    NodeId least_important() const;
    NodeId most_important() const;

  private:
    int scale_;
    std::map<NodeId, std::uint64_t> totals_;
    std::map<std::pair<NodeId, std::uint32_t>, std::uint64_t> per_round_;
};

enum class RecommendMode { Upgrade, Downgrade };

std::string recommend_mode_name(RecommendMode mode);

// Which agent to act on. Both modes point at the minimum-score agent: a low
// total means low confidence on wins and high confidence on losses, so that
// agent is both the weakest link (upgrade it with a stronger model) and the
// first candidate to shed when shrinking the system.
NodeId recommend(const ImportanceLedger& ledger, RecommendMode mode);

// Snapshot rows {agent, round, increment, running_total} (running_total is
// that agent's cumulative score through the row's round), preceded by a
// header carrying the scale. Import validates the running totals.
void export_ledger(std::ostream& out, const ImportanceLedger& ledger);
ImportanceLedger import_ledger(std::istream& in);

} // namespace agentgraph
