#include "gold_mock.hpp"

#include <atomic>
#include <regex>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ovdst/text.hpp"

#ifndef OVDST_FIXTURE_DIR
#error "OVDST_FIXTURE_DIR must be defined"
#endif

namespace ovdst::testing {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path fixture_dir() { return OVDST_FIXTURE_DIR; }

Corpus multiwoz_fixture() { return load_multiwoz(fixture_dir() / "multiwoz", MultiwozVersion::V24); }

Corpus sgd_fixture() { return load_sgd(fixture_dir() / "sgd"); }

fs::path temp_dir(std::string_view tag) {
    static std::atomic<int> counter{0};
    fs::path p = fs::temp_directory_path() /
                 ("ovdst-test-" + std::string(tag) + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

GoldOracle::GoldOracle(const Corpus& corpus) : schema_(corpus.schema) {
    for (std::size_t d = 0; d < corpus.dialogues.size(); ++d) {
        const auto& dlg = corpus.dialogues[d];
        turns_.emplace_back();
        DialogueState prev;
        std::size_t u = 0;
        for (const auto& t : dlg.turns) {
            if (t.speaker != Speaker::User) continue;
            TurnGold g;
            g.domains = (*dlg.gold_turn_domains)[u];
            g.prior = prev;
            g.delta = state_diff(prev, (*dlg.gold_states)[u]);
            g.utterance = t.utterance;
            prev = (*dlg.gold_states)[u];
            if (!index_.emplace(t.utterance, std::make_pair(d, u)).second) {
                throw std::runtime_error("duplicate user utterance in fixture: " + t.utterance);
            }
            turns_.back().push_back(std::move(g));
            ++u;
        }
    }
}

std::pair<std::size_t, std::size_t> GoldOracle::locate(std::string_view utterance) const {
    auto it = index_.find(utterance);
    if (it == index_.end()) throw std::runtime_error("unknown utterance: " + std::string(utterance));
    return it->second;
}

const GoldOracle::TurnGold& GoldOracle::find_turn(std::string_view prompt) const {
    std::string last;
    for (const auto& line : text::split(prompt, '\n')) {
        if (line.starts_with("USER: ")) last = line.substr(6);
    }
    if (last.empty()) {
        // extraction prompts carry the bare sentence
        const std::string_view open = "keep it [].\n\n";
        const std::string_view close = "\n\nOutput:";
        auto a = prompt.find(open);
        auto b = prompt.find(close);
        if (a == std::string_view::npos || b == std::string_view::npos) {
            throw std::runtime_error("cannot find the turn in prompt");
        }
        a += open.size();
        last = std::string(prompt.substr(a, b - a));
    }
    auto [d, u] = locate(text::trim(last));
    return turns_[d][u];
}

std::string GoldOracle::respond(std::string_view prompt) const {
    const TurnGold& g = find_turn(prompt);

    if (prompt.find("Which of the domains") != std::string_view::npos) {
        if (g.domains.empty()) return "None";
        return json{{"domains", g.domains}}.dump();
    }

    if (prompt.find("Entity definition:") != std::string_view::npos) {
        std::map<std::string, std::vector<std::string>> out;
        for (auto t : kAllEntityTypes) {
            if (prompt.find("-" + std::string(to_string(t)) + ":") != std::string_view::npos) {
                out[std::string(to_string(t))];
            }
        }
        for (const auto& [key, value] : g.delta) {
            if (!value.is_informed()) continue;
            const SlotSchema* slot = schema_.find_slot(key);
            const std::string type(to_string(slot->entity_type));
            if (!out.count(type)) continue;
            // values reachable through cross-referencing are left to the MCQ options
            bool reachable = false;
            for (const auto& [other, ov] : g.prior) {
                const SlotSchema* os = schema_.find_slot(other);
                if (other != key && ov.is_informed() && ov.text() == value.text() &&
                    os->entity_type == slot->entity_type) {
                    reachable = true;
                }
            }
            if (!reachable) out[type].push_back(value.text());
        }
        return json(out).dump();
    }

    if (prompt.find("no preference, or that it doesn't matter") != std::string_view::npos) {
        std::vector<std::string> keys;
        for (const auto& [key, value] : g.delta) {
            if (value.is_dont_care()) keys.push_back(key);
        }
        return json{{"dontcare", keys}}.dump();
    }

    static const std::regex mcq_key(R"(Return the answer in JSON with the (\S+) as key)");
    std::cmatch m;
    const std::string p(prompt);
    if (std::regex_search(p.c_str(), m, mcq_key)) {
        std::string answer_key = m[1].str();
        std::string dotted = answer_key;
        dotted[dotted.find('-')] = '.';
        const SlotValue* v = g.delta.find(dotted);
        std::string answer = "None";
        if (v != nullptr) answer = v->is_dont_care() ? "dontcare" : v->text();
        return json{{answer_key, answer}}.dump();
    }

    static const std::regex srp_domain(R"(a USER and a SYSTEM about ([a-z0-9_-]+)\.)");
    if (std::regex_search(p.c_str(), m, srp_domain)) {
        const std::string domain = m[1].str();
        json out = json::object();
        for (const auto& [key, value] : g.delta.restricted_to_domain(domain)) {
            out[split_key(key).second] = value.serialize();
        }
        if (domain == "attraction" && g.utterance.find("entrance fee") != std::string::npos) {
            out["entrance-fee"] = "?";
        }
        return out.dump();
    }
    throw std::runtime_error("gold oracle: unrecognised prompt");
}

std::shared_ptr<MockBackend> GoldOracle::backend(std::string name) const {
    std::vector<MockBackend::Rule> rules;
    rules.push_back({[](std::string_view) { return true; }, [this](std::string_view p) { return respond(p); }});
    return std::make_shared<MockBackend>(std::move(rules), "{}", std::move(name));
}

} // namespace ovdst::testing
