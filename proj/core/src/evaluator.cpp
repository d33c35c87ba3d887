#include "ovdst/evaluator.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "ovdst/errors.hpp"
#include "ovdst/text.hpp"

namespace ovdst {

using nlohmann::json;

namespace {

const std::map<std::string, std::string, std::less<>>& alias_tokens() {
    static const std::map<std::string, std::string, std::less<>> aliases = {
        {"center", "centre"},
        {"theater", "theatre"},
        {"guesthouse", "guest house"},
        {"dontcare", "dont care"},
    };
    return aliases;
}

void check_lengths(std::size_t a, std::size_t b, std::string_view what) {
    if (a != b) {
        throw LengthMismatch(std::string(what) + ": " + std::to_string(a) + " predictions vs " +
                             std::to_string(b) + " gold entries");
    }
}

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

} // namespace

std::string canonical_value(std::string_view v) {
    std::string s = text::strip_punctuation(text::collapse_whitespace(text::to_lower(v)));
    for (std::string_view article : {"the ", "a ", "an "}) {
        if (s.size() > article.size() && s.starts_with(article)) {
            s = s.substr(article.size());
            break;
        }
    }
    std::vector<std::string> tokens = text::split(s, ' ');
    for (auto& t : tokens) {
        auto it = alias_tokens().find(t);
        if (it != alias_tokens().end()) t = it->second;
    }
    return text::join(tokens, " ");
}

bool fuzzy_match(std::string_view pred, std::string_view gold, double threshold) {
    const std::string a = canonical_value(pred);
    const std::string b = canonical_value(gold);
    if (a == b) return true;
    return text::edit_similarity(a, b) >= threshold - 1e-12;
}

bool values_match(const SlotValue& pred, const SlotValue& gold, double threshold) {
    if (pred.kind() != gold.kind()) return false;
    if (!pred.is_informed()) return true;
    return fuzzy_match(pred.text(), gold.text(), threshold);
}

bool states_match(const DialogueState& pred, const DialogueState& gold, double threshold) {
    if (pred.size() != gold.size()) return false;
    auto p = pred.begin();
    for (auto g = gold.begin(); g != gold.end(); ++g, ++p) {
        if (p->first != g->first || !values_match(p->second, g->second, threshold)) return false;
    }
    return true;
}

double jga(const StateSeq& pred, const StateSeq& gold, double threshold) {
    check_lengths(pred.size(), gold.size(), "jga");
    std::uint64_t hits = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) hits += states_match(pred[i], gold[i], threshold) ? 1 : 0;
    return ratio(hits, gold.size());
}

AgaResult aga_detail(const std::vector<StateSeq>& pred, const std::vector<StateSeq>& gold, double threshold) {
    check_lengths(pred.size(), gold.size(), "aga dialogues");
    AgaResult r;
    double sum = 0.0;
    for (std::size_t d = 0; d < gold.size(); ++d) {
        check_lengths(pred[d].size(), gold[d].size(), "aga turns");
        DialogueState prev;
        for (std::size_t t = 0; t < gold[d].size(); ++t) {
            const DialogueState active = state_diff(prev, gold[d][t]);
            prev = gold[d][t];
            if (active.empty()) {
                ++r.skipped_turns;
                continue;
            }
            std::size_t correct = 0;
            for (const auto& [key, value] : active) {
                const SlotValue* p = pred[d][t].find(key);
                if (p != nullptr && values_match(*p, value, threshold)) ++correct;
            }
            sum += static_cast<double>(correct) / static_cast<double>(active.size());
            ++r.scored_turns;
        }
    }
    r.value = r.scored_turns == 0 ? 1.0 : sum / static_cast<double>(r.scored_turns);
    return r;
}

double aga(const std::vector<StateSeq>& pred, const std::vector<StateSeq>& gold, double threshold) {
    return aga_detail(pred, gold, threshold).value;
}

double aga(const StateSeq& pred, const StateSeq& gold, double threshold) {
    return aga(std::vector<StateSeq>{pred}, std::vector<StateSeq>{gold}, threshold);
}

DomainAccuracy domain_accuracy_detail(const DomainSeq& pred, const DomainSeq& gold) {
    check_lengths(pred.size(), gold.size(), "domain_accuracy");
    DomainAccuracy out;
    std::uint64_t hits = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (pred[i] == gold[i]) ++hits;
        for (const auto& g : gold[i]) {
            if (pred[i].count(g)) ++out.per_label[g].tp;
            else ++out.per_label[g].fn;
        }
        for (const auto& p : pred[i]) {
            if (!gold[i].count(p)) ++out.per_label[p].fp;
        }
    }
    out.accuracy = ratio(hits, gold.size());
    return out;
}

double domain_accuracy(const DomainSeq& pred, const DomainSeq& gold) {
    return domain_accuracy_detail(pred, gold).accuracy;
}

std::vector<PositionAccuracy> turn_position_accuracy(const std::vector<DomainSeq>& pred,
                                                     const std::vector<DomainSeq>& gold) {
    check_lengths(pred.size(), gold.size(), "turn_position_accuracy");
    std::vector<std::size_t> hits, counts;
    for (std::size_t d = 0; d < gold.size(); ++d) {
        check_lengths(pred[d].size(), gold[d].size(), "turn_position_accuracy turns");
        for (std::size_t t = 0; t < gold[d].size(); ++t) {
            if (counts.size() <= t) {
                counts.resize(t + 1, 0);
                hits.resize(t + 1, 0);
            }
            ++counts[t];
            if (pred[d][t] == gold[d][t]) ++hits[t];
        }
    }
    std::vector<PositionAccuracy> out;
    for (std::size_t t = 0; t < counts.size(); ++t) {
        if (counts[t] == 0) continue;
        out.push_back({t, ratio(hits[t], counts[t]), counts[t]});
    }
    return out;
}

std::uint64_t DomainMatrix::at(std::string_view gold, std::string_view pred) const {
    auto gi = std::find(labels.begin(), labels.end(), gold);
    auto pi = std::find(labels.begin(), labels.end(), pred);
    if (gi == labels.end() || pi == labels.end()) return 0;
    return counts[static_cast<std::size_t>(gi - labels.begin())][static_cast<std::size_t>(pi - labels.begin())];
}

std::uint64_t DomainMatrix::total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts) {
        for (auto c : row) n += c;
    }
    return n;
}

std::string DomainMatrix::to_csv() const {
    std::ostringstream out;
    out << "gold\\pred";
    for (const auto& l : labels) out << ',' << l;
    out << '\n';
    for (std::size_t g = 0; g < labels.size(); ++g) {
        out << labels[g];
        for (auto c : counts[g]) out << ',' << c;
        out << '\n';
    }
    return out.str();
}

json DomainMatrix::to_json() const {
    return {{"labels", labels}, {"counts", counts}};
}

DomainMatrix misclassification_matrix(const DomainSeq& pred, const DomainSeq& gold,
                                      const std::vector<std::string>& domains) {
    check_lengths(pred.size(), gold.size(), "misclassification_matrix");
    DomainMatrix m;
    m.labels = domains;
    m.counts.assign(domains.size(), std::vector<std::uint64_t>(domains.size(), 0));
    std::map<std::string, std::size_t, std::less<>> index;
    for (std::size_t i = 0; i < domains.size(); ++i) index[domains[i]] = i;
    for (std::size_t t = 0; t < gold.size(); ++t) {
        for (const auto& p : pred[t]) {
            if (gold[t].count(p)) continue;
            auto pi = index.find(p);
            if (pi == index.end()) continue;
            for (const auto& g : gold[t]) {
                auto gi = index.find(g);
                if (gi != index.end()) ++m.counts[gi->second][pi->second];
            }
        }
    }
    return m;
}

json TurnRecord::to_json() const {
    return {{"dialogue_id", dialogue_id},
            {"turn_index", turn_index},
            {"pred_domains", domains_to_json(pred_domains)},
            {"gold_domains", domains_to_json(gold_domains)},
            {"pred_state", state_to_json(pred_state)},
            {"gold_state", state_to_json(gold_state)}};
}

TurnRecord TurnRecord::from_json(const json& j) {
    try {
        TurnRecord r;
        r.dialogue_id = j.at("dialogue_id").get<std::string>();
        r.turn_index = j.at("turn_index").get<std::size_t>();
        for (const auto& d : j.at("pred_domains")) r.pred_domains.insert(d.get<std::string>());
        for (const auto& d : j.at("gold_domains")) r.gold_domains.insert(d.get<std::string>());
        r.pred_state = state_from_json(j.at("pred_state"));
        r.gold_state = state_from_json(j.at("gold_state"));
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad prediction record: ") + e.what());
    }
}

std::vector<std::vector<TurnRecord>> group_by_dialogue(const std::vector<TurnRecord>& records) {
    std::vector<std::vector<TurnRecord>> out;
    std::map<std::string, std::size_t> slot;
    for (const auto& r : records) {
        auto [it, fresh] = slot.try_emplace(r.dialogue_id, out.size());
        if (fresh) out.emplace_back();
        out[it->second].push_back(r);
    }
    for (auto& d : out) {
        std::stable_sort(d.begin(), d.end(),
                         [](const TurnRecord& a, const TurnRecord& b) { return a.turn_index < b.turn_index; });
    }
    return out;
}

EvalReport evaluate(const std::vector<TurnRecord>& records, const std::vector<std::string>& domains,
                    double threshold) {
    EvalReport rep;
    const auto grouped = group_by_dialogue(records);
    rep.dialogue_count = grouped.size();
    rep.turn_count = records.size();

    StateSeq pred_flat, gold_flat;
    DomainSeq pred_dom, gold_dom;
    std::vector<StateSeq> pred_nested, gold_nested;
    std::vector<DomainSeq> pred_dom_nested, gold_dom_nested;
    for (const auto& d : grouped) {
        pred_nested.emplace_back();
        gold_nested.emplace_back();
        pred_dom_nested.emplace_back();
        gold_dom_nested.emplace_back();
        for (const auto& r : d) {
            pred_flat.push_back(r.pred_state);
            gold_flat.push_back(r.gold_state);
            pred_dom.push_back(r.pred_domains);
            gold_dom.push_back(r.gold_domains);
            pred_nested.back().push_back(r.pred_state);
            gold_nested.back().push_back(r.gold_state);
            pred_dom_nested.back().push_back(r.pred_domains);
            gold_dom_nested.back().push_back(r.gold_domains);
        }
    }

    rep.jga = jga(pred_flat, gold_flat, threshold);
    const auto aga_r = aga_detail(pred_nested, gold_nested, threshold);
    rep.aga = aga_r.value;
    const auto dom = domain_accuracy_detail(pred_dom, gold_dom);
    rep.domain_accuracy = dom.accuracy;
    rep.domain_label_scores = dom.per_label;
    rep.turn_position_accuracy = turn_position_accuracy(pred_dom_nested, gold_dom_nested);

    std::vector<std::string> labels = domains;
    if (labels.empty()) {
        std::set<std::string> seen;
        for (const auto& s : gold_dom) seen.insert(s.begin(), s.end());
        for (const auto& s : pred_dom) seen.insert(s.begin(), s.end());
        labels.assign(seen.begin(), seen.end());
    }
    rep.misclassification_matrix = misclassification_matrix(pred_dom, gold_dom, labels);

    // Per domain: turns where either side holds a slot of the domain.
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> dom_counts;
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> slot_counts;
    for (std::size_t i = 0; i < gold_flat.size(); ++i) {
        std::set<std::string> doms, keys;
        for (const auto& [k, v] : gold_flat[i]) {
            doms.insert(split_key(k).first);
            keys.insert(k);
        }
        for (const auto& [k, v] : pred_flat[i]) {
            doms.insert(split_key(k).first);
            keys.insert(k);
        }
        for (const auto& d : doms) {
            auto& c = dom_counts[d];
            ++c.second;
            if (states_match(pred_flat[i].restricted_to_domain(d), gold_flat[i].restricted_to_domain(d), threshold)) {
                ++c.first;
            }
        }
        for (const auto& k : keys) {
            auto& c = slot_counts[k];
            ++c.second;
            const SlotValue* p = pred_flat[i].find(k);
            const SlotValue* g = gold_flat[i].find(k);
            if (p != nullptr && g != nullptr && values_match(*p, *g, threshold)) ++c.first;
        }
    }
    for (const auto& [d, c] : dom_counts) rep.per_domain_jga[d] = ratio(c.first, c.second);
    for (const auto& [k, c] : slot_counts) rep.per_slot_accuracy[k] = ratio(c.first, c.second);

    // Mean number of domains first seen at each user-turn position.
    std::vector<double> new_sum;
    std::vector<std::size_t> reach;
    for (const auto& d : gold_dom_nested) {
        DomainSet seen;
        for (std::size_t t = 0; t < d.size(); ++t) {
            if (reach.size() <= t) {
                reach.resize(t + 1, 0);
                new_sum.resize(t + 1, 0.0);
            }
            ++reach[t];
            for (const auto& x : d[t]) {
                if (seen.insert(x).second) new_sum[t] += 1.0;
            }
        }
    }
    for (std::size_t t = 0; t < reach.size(); ++t) {
        rep.domain_change_profile.push_back(new_sum[t] / static_cast<double>(reach[t]));
    }

    rep.metadata = {{"fuzzy_threshold", threshold},
                    {"domain_accuracy", "exact set match per user turn"},
                    {"jga", "full key set must match; empty gold states count"},
                    {"aga_scored_turns", aga_r.scored_turns},
                    {"aga_skipped_turns", aga_r.skipped_turns},
                    {"aga_skip_rule", "turns without active gold slots are skipped"},
                    {"misclassification", "incorrect predictions only"}};
    return rep;
}

json EvalReport::to_json() const {
    json labels = json::object();
    for (const auto& [l, s] : domain_label_scores) {
        labels[l] = {{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"precision", s.precision()}, {"recall", s.recall()}};
    }
    json positions = json::array();
    for (const auto& p : turn_position_accuracy) {
        positions.push_back({{"position", p.position}, {"accuracy", p.accuracy}, {"count", p.count}});
    }
    return {{"jga", jga},
            {"aga", aga},
            {"domain_accuracy", domain_accuracy},
            {"domain_label_scores", labels},
            {"per_domain_jga", per_domain_jga},
            {"per_slot_accuracy", per_slot_accuracy},
            {"turn_position_accuracy", positions},
            {"domain_change_profile", domain_change_profile},
            {"misclassification_matrix", misclassification_matrix.to_json()},
            {"request_ledger", request_ledger},
            {"metadata", metadata},
            {"dialogue_count", dialogue_count},
            {"turn_count", turn_count}};
}

EvalReport EvalReport::from_json(const json& j) {
    try {
        EvalReport r;
        r.jga = j.at("jga").get<double>();
        r.aga = j.at("aga").get<double>();
        r.domain_accuracy = j.at("domain_accuracy").get<double>();
        for (const auto& [l, s] : j.at("domain_label_scores").items()) {
            r.domain_label_scores[l] = {s.at("tp").get<std::uint64_t>(), s.at("fp").get<std::uint64_t>(),
                                        s.at("fn").get<std::uint64_t>()};
        }
        r.per_domain_jga = j.at("per_domain_jga").get<std::map<std::string, double>>();
        r.per_slot_accuracy = j.at("per_slot_accuracy").get<std::map<std::string, double>>();
        for (const auto& p : j.at("turn_position_accuracy")) {
            r.turn_position_accuracy.push_back({p.at("position").get<std::size_t>(), p.at("accuracy").get<double>(),
                                                p.at("count").get<std::size_t>()});
        }
        r.domain_change_profile = j.at("domain_change_profile").get<std::vector<double>>();
        r.misclassification_matrix.labels =
            j.at("misclassification_matrix").at("labels").get<std::vector<std::string>>();
        r.misclassification_matrix.counts =
            j.at("misclassification_matrix").at("counts").get<std::vector<std::vector<std::uint64_t>>>();
        r.request_ledger = j.value("request_ledger", json::object());
        r.metadata = j.value("metadata", json::object());
        r.dialogue_count = j.at("dialogue_count").get<std::size_t>();
        r.turn_count = j.at("turn_count").get<std::size_t>();
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad report: ") + e.what());
    }
}

std::string EvalReport::to_text_table() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "dialogues        " << dialogue_count << '\n';
    out << "user turns       " << turn_count << '\n';
    out << "JGA              " << jga << '\n';
    out << "AGA              " << aga << '\n';
    out << "domain accuracy  " << domain_accuracy << "  (exact set match)\n";
    if (!per_domain_jga.empty()) {
        out << "\nper-domain JGA\n";
        for (const auto& [d, v] : per_domain_jga) out << "  " << std::left << std::setw(16) << d << v << '\n';
    }
    if (!domain_label_scores.empty()) {
        out << "\ndomain labels     precision  recall\n";
        for (const auto& [l, s] : domain_label_scores) {
            out << "  " << std::left << std::setw(16) << l << s.precision() << "     " << s.recall() << '\n';
        }
    }
    if (request_ledger.contains("total_requests")) {
        out << "\nrequests         " << request_ledger["total_requests"] << '\n';
    }
    return out.str();
}

} // namespace ovdst
