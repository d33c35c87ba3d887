#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovdst/dataset.hpp"
#include "ovdst/gateway.hpp"

namespace ovdst {

enum class Strategy { AllSlots, TurnDomainSlots, AllSlotsOnePrompt, QA, SRP };

std::string_view to_string(Strategy s);
std::string_view strategy_label(Strategy s);  // human-readable row name
const std::vector<Strategy>& all_strategies();

// Measured QA request counts, from the gateway ledger of a QA run.
struct QaTrace {
    std::uint64_t dialogues = 0;
    std::uint64_t extraction_requests = 0;
    std::uint64_t dontcare_requests = 0;
    std::uint64_t mcq_requests = 0;

    std::uint64_t total(bool include_dontcare = true) const {
        return extraction_requests + mcq_requests + (include_dontcare ? dontcare_requests : 0);
    }
    static QaTrace from_ledger(const RequestLedger& ledger, std::uint64_t dialogues);
};

struct StrategyCount {
    Strategy strategy = Strategy::AllSlots;
    double total_requests = 0;  // TurnDomainSlots may be fractional
    double per_dialogue = 0;
    bool measured = false;      // QA comes from a trace, not a formula
    std::string note;
};

struct BudgetOptions {
    // Weight each domain's slot count by how often it is active instead of
    // using the plain schema mean.
    bool turn_weighted_slots = false;
    // QA totals include the dontcare scan.
    bool qa_include_dontcare = true;
};

// Throws MissingTrace for QA without a trace.
StrategyCount count_requests(Strategy strategy, const CorpusStats& stats,
                             const std::optional<QaTrace>& qa_trace = std::nullopt,
                             const BudgetOptions& options = {});

// Percentage of requests saved relative to a baseline, e.g. 97.08.
double reduction_percent(double requests, double baseline);

// Stats synthesized from headline counts only: dialogue, turn and slot
// totals plus the mean number of domains per turn.
CorpusStats stats_from_totals(std::uint64_t dialogues, std::uint64_t turns, std::uint64_t slots,
                              std::uint64_t domains, double avg_domains_per_turn);

struct BudgetTable {
    std::vector<StrategyCount> rows;
    std::uint64_t dialogue_count = 0;

    std::string to_text() const;
    std::string to_csv() const;
    nlohmann::json to_json() const;
};

// Every strategy; QA rows (with and without the dontcare scan) only when a
// trace is given.
BudgetTable budget_table(const CorpusStats& stats, const std::optional<QaTrace>& qa_trace = std::nullopt,
                         const BudgetOptions& options = {});

} // namespace ovdst
