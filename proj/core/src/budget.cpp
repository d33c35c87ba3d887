#include "ovdst/budget.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "ovdst/errors.hpp"

namespace ovdst {

std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::AllSlots: return "all-slots";
    case Strategy::TurnDomainSlots: return "turn-domain-slots";
    case Strategy::AllSlotsOnePrompt: return "all-slots-one-prompt";
    case Strategy::QA: return "qa";
    case Strategy::SRP: return "srp";
    }
    return "?";
}

std::string_view strategy_label(Strategy s) {
    switch (s) {
    case Strategy::AllSlots: return "Query every slot";
    case Strategy::TurnDomainSlots: return "Query the turn's domain slots";
    case Strategy::AllSlotsOnePrompt: return "All slots in one prompt";
    case Strategy::QA: return "DST-as-QA";
    case Strategy::SRP: return "DST-as-SRP";
    }
    return "?";
}

const std::vector<Strategy>& all_strategies() {
    static const std::vector<Strategy> v = {Strategy::AllSlots, Strategy::TurnDomainSlots,
                                            Strategy::AllSlotsOnePrompt, Strategy::QA, Strategy::SRP};
    return v;
}

QaTrace QaTrace::from_ledger(const RequestLedger& ledger, std::uint64_t dialogues) {
    QaTrace t;
    t.dialogues = dialogues;
    t.extraction_requests = ledger.requests(Stage::EntityExtraction);
    t.dontcare_requests = ledger.requests(Stage::DontCareDetection);
    t.mcq_requests = ledger.requests(Stage::McqAnswering);
    return t;
}

StrategyCount count_requests(Strategy strategy, const CorpusStats& stats, const std::optional<QaTrace>& qa_trace,
                             const BudgetOptions& options) {
    StrategyCount c;
    c.strategy = strategy;
    switch (strategy) {
    case Strategy::AllSlots:
        c.total_requests = static_cast<double>(stats.slot_count) * static_cast<double>(stats.turn_count);
        break;
    case Strategy::TurnDomainSlots:
        c.total_requests = options.turn_weighted_slots
                               ? static_cast<double>(stats.turn_domain_slot_total)
                               : static_cast<double>(stats.turn_domain_total) * stats.avg_slots_per_domain;
        c.note = options.turn_weighted_slots ? "slot counts of each active domain" : "mean slots per domain";
        break;
    case Strategy::AllSlotsOnePrompt:
        c.total_requests = static_cast<double>(stats.turn_count);
        break;
    case Strategy::SRP:
        c.total_requests = static_cast<double>(stats.turn_domain_total);
        break;
    case Strategy::QA:
        if (!qa_trace) throw MissingTrace("QA request counts are measured; run the QA pipeline first");
        c.total_requests = static_cast<double>(qa_trace->total(options.qa_include_dontcare));
        c.measured = true;
        c.note = options.qa_include_dontcare ? "measured, with dontcare scan" : "measured, without dontcare scan";
        if (qa_trace->dialogues != 0) {
            c.per_dialogue = c.total_requests / static_cast<double>(qa_trace->dialogues);
            return c;
        }
        break;
    }
    c.per_dialogue =
        stats.dialogue_count == 0 ? 0.0 : c.total_requests / static_cast<double>(stats.dialogue_count);
    return c;
}

double reduction_percent(double requests, double baseline) {
    if (baseline <= 0) throw ConfigError("baseline request count must be positive");
    return 100.0 * (1.0 - requests / baseline);
}

CorpusStats stats_from_totals(std::uint64_t dialogues, std::uint64_t turns, std::uint64_t slots,
                              std::uint64_t domains, double avg_domains_per_turn) {
    CorpusStats s;
    s.dialogue_count = dialogues;
    s.turn_count = turns;
    s.slot_count = slots;
    s.domain_count = domains;
    s.avg_domains_per_turn = avg_domains_per_turn;
    s.turn_domain_total = static_cast<std::uint64_t>(std::llround(avg_domains_per_turn * static_cast<double>(turns)));
    s.avg_slots_per_domain = domains == 0 ? 0.0 : static_cast<double>(slots) / static_cast<double>(domains);
    s.turn_domain_slot_total =
        static_cast<std::uint64_t>(std::llround(static_cast<double>(s.turn_domain_total) * s.avg_slots_per_domain));
    return s;
}

BudgetTable budget_table(const CorpusStats& stats, const std::optional<QaTrace>& qa_trace,
                         const BudgetOptions& options) {
    BudgetTable t;
    t.dialogue_count = stats.dialogue_count;
    for (auto s : all_strategies()) {
        if (s == Strategy::QA) {
            if (!qa_trace) continue;
            BudgetOptions with = options, without = options;
            with.qa_include_dontcare = true;
            without.qa_include_dontcare = false;
            t.rows.push_back(count_requests(s, stats, qa_trace, with));
            t.rows.push_back(count_requests(s, stats, qa_trace, without));
            continue;
        }
        t.rows.push_back(count_requests(s, stats, qa_trace, options));
    }
    return t;
}

std::string BudgetTable::to_text() const {
    const double baseline = rows.empty() ? 0.0 : rows.front().total_requests;
    std::ostringstream out;
    out << std::left << std::setw(32) << "strategy" << std::right << std::setw(14) << "total" << std::setw(14)
        << "per dialogue" << std::setw(12) << "saved %" << "  note\n";
    out << std::fixed;
    for (const auto& r : rows) {
        out << std::left << std::setw(32) << strategy_label(r.strategy) << std::right << std::setprecision(1)
            << std::setw(14) << r.total_requests << std::setw(14) << r.per_dialogue << std::setprecision(2)
            << std::setw(12) << (baseline > 0 ? reduction_percent(r.total_requests, baseline) : 0.0) << "  "
            << r.note << '\n';
    }
    return out.str();
}

std::string BudgetTable::to_csv() const {
    const double baseline = rows.empty() ? 0.0 : rows.front().total_requests;
    std::ostringstream out;
    out << "strategy,total_requests,per_dialogue,reduction_percent,measured,note\n";
    out << std::setprecision(10);
    for (const auto& r : rows) {
        out << to_string(r.strategy) << ',' << r.total_requests << ',' << r.per_dialogue << ','
            << (baseline > 0 ? reduction_percent(r.total_requests, baseline) : 0.0) << ','
            << (r.measured ? "true" : "false") << ',' << r.note << '\n';
    }
    return out.str();
}

nlohmann::json BudgetTable::to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    const double baseline = rows.empty() ? 0.0 : rows.front().total_requests;
    for (const auto& r : rows) {
        rows_j.push_back({{"strategy", std::string(to_string(r.strategy))},
                          {"total_requests", r.total_requests},
                          {"per_dialogue", r.per_dialogue},
                          {"reduction_percent", baseline > 0 ? reduction_percent(r.total_requests, baseline) : 0.0},
                          {"measured", r.measured},
                          {"note", r.note}});
    }
    return {{"dialogue_count", dialogue_count}, {"rows", rows_j}};
}

} // namespace ovdst
