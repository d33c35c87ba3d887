#include "ovdst/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "ovdst/errors.hpp"
#include "ovdst/multiwoz_schema.hpp"
#include "ovdst/text.hpp"

namespace ovdst {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string strip_json_suffix(std::string id) {
    if (id.size() > 5 && id.ends_with(".json")) id.resize(id.size() - 5);
    return id;
}

// Raw MultiWOZ slot name (lowercased, separators dropped) -> canonical.
std::string squash(std::string_view raw) {
    std::string out;
    for (char c : text::to_lower(raw)) {
        if (c != ' ' && c != '-' && c != '_') out.push_back(c);
    }
    return out;
}

std::optional<std::string> canonical_semi(const std::string& domain, std::string_view raw) {
    const std::string s = squash(raw);
    static const std::map<std::string, std::string> common = {
        {"leaveat", "leave-at"}, {"arriveby", "arrive-by"}, {"pricerange", "price-range"},
        {"area", "area"},        {"name", "name"},          {"type", "type"},
        {"parking", "parking"},  {"internet", "internet"},  {"stars", "stars"},
        {"food", "food"},        {"destination", "destination"}, {"departure", "departure"},
        {"department", "department"},
    };
    if (s == "day") {
        if (domain == "train" || domain == "bus") return "day";
        return "book-day";
    }
    if (auto it = common.find(s); it != common.end()) return it->second;
    return std::nullopt;
}

std::optional<std::string> canonical_book(const std::string& domain, std::string_view raw) {
    const std::string s = squash(raw);
    if (s == "people") {
        return domain == "hotel" ? std::string("book-people") : std::string("book-people-count");
    }
    if (s == "day") return domain == "train" ? std::string("day") : std::string("book-day");
    if (s == "stay") return std::string("book-stay");
    if (s == "time") return std::string("book-time");
    return std::nullopt;
}

bool is_empty_value(const std::string& v) {
    return v.empty() || v == "not mentioned" || v == "none";
}

bool is_dontcare_value(const std::string& v) {
    return v == "dontcare" || v == "don't care" || v == "do n't care" || v == "dont care" ||
           v == "do not care" || v == "doesn't care";
}

std::optional<SlotValue> gold_value(const std::string& raw, EntityType type) {
    const std::string lowered = text::trim(text::collapse_whitespace(text::to_lower(raw)));
    if (is_empty_value(lowered)) return std::nullopt;
    if (is_dontcare_value(lowered)) return SlotValue::dont_care();
    std::string v = normalize_value(lowered, type);
    if (v.empty()) return std::nullopt;
    return SlotValue::informed(std::move(v));
}

void put_gold(DialogueState& state, const Schema& schema, const std::string& key,
              const json& raw, const std::string& where) {
    const SlotSchema* slot = schema.find_slot(key);
    if (slot == nullptr) throw SchemaMismatch(where + ": unmappable slot " + key);
    std::string s;
    if (raw.is_string()) {
        s = raw.get<std::string>();
    } else if (raw.is_array() && !raw.empty() && raw.front().is_string()) {
        s = raw.front().get<std::string>();
    } else if (raw.is_number() || raw.is_boolean()) {
        s = raw.dump();
    } else {
        return;
    }
    if (auto v = gold_value(s, slot->entity_type)) state.set(key, *v);
}

DialogueState multiwoz_state(const json& metadata, const Schema& schema, const std::string& where) {
    DialogueState state;
    if (!metadata.is_object()) return state;
    for (const auto& [raw_domain, body] : metadata.items()) {
        const std::string domain = text::to_lower(raw_domain);
        if (!schema.has_domain(domain)) throw SchemaMismatch(where + ": unknown domain " + raw_domain);
        if (!body.is_object()) continue;
        if (auto semi = body.find("semi"); semi != body.end()) {
            for (const auto& [raw_slot, value] : semi->items()) {
                auto slot = canonical_semi(domain, raw_slot);
                if (!slot) throw SchemaMismatch(where + ": unmappable slot " + domain + "-" + raw_slot);
                put_gold(state, schema, make_key(domain, *slot), value, where);
            }
        }
        if (auto book = body.find("book"); book != body.end()) {
            for (const auto& [raw_slot, value] : book->items()) {
                if (raw_slot == "booked") continue;
                auto slot = canonical_book(domain, raw_slot);
                if (!slot) throw SchemaMismatch(where + ": unmappable slot " + domain + "-book-" + raw_slot);
                put_gold(state, schema, make_key(domain, *slot), value, where);
            }
        }
    }
    return state;
}

DomainSet act_domains(const json& turn, const Schema& schema) {
    DomainSet out;
    auto acts = turn.find("dialog_act");
    if (acts == turn.end() || !acts->is_object()) return out;
    for (const auto& [name, _] : acts->items()) {
        const std::string domain = text::to_lower(name.substr(0, name.find('-')));
        if (schema.has_domain(domain)) out.insert(domain);
    }
    return out;
}

DomainSet delta_domains(const DialogueState& delta) {
    DomainSet out;
    for (const auto& [k, _] : delta) out.insert(split_key(k).first);
    return out;
}

std::vector<std::string> read_id_list(const fs::path& p) {
    const std::string body = read_text(p);
    std::vector<std::string> ids;
    const std::string t = text::trim(body);
    if (!t.empty() && t.front() == '[') {
        for (const auto& v : json::parse(t)) ids.push_back(strip_json_suffix(v.get<std::string>()));
        return ids;
    }
    for (const auto& line : text::split(body, '\n')) {
        std::string id = text::trim(line);
        if (!id.empty()) ids.push_back(strip_json_suffix(id));
    }
    return ids;
}

void attach_multiwoz_ontology(Schema& schema, const fs::path& p) {
    const json onto = read_json(p);
    for (const auto& [raw_key, values] : onto.items()) {
        const auto dash = raw_key.find('-');
        if (dash == std::string::npos || !values.is_array()) continue;
        const std::string domain = text::to_lower(raw_key.substr(0, dash));
        std::string rest = raw_key.substr(dash + 1);
        if (!schema.has_domain(domain)) continue;
        std::optional<std::string> slot;
        if (text::starts_with_icase(rest, "semi-")) {
            slot = canonical_semi(domain, rest.substr(5));
        } else if (text::starts_with_icase(rest, "book-") || text::starts_with_icase(rest, "book ")) {
            slot = canonical_book(domain, rest.substr(5));
        } else {
            slot = canonical_semi(domain, rest);
        }
        SlotSchema* s = slot ? schema.find_slot_mut(make_key(domain, *slot)) : nullptr;
        if (s == nullptr) {
            spdlog::debug("ontology key {} has no schema slot", raw_key);
            continue;
        }
        std::vector<std::string> list;
        for (const auto& v : values) {
            if (!v.is_string()) continue;
            std::string lowered = text::to_lower(v.get<std::string>());
            if (is_empty_value(lowered) || is_dontcare_value(lowered)) continue;
            std::string norm = normalize_value(lowered, s->entity_type);
            if (!norm.empty() && std::find(list.begin(), list.end(), norm) == list.end()) list.push_back(norm);
        }
        s->ontology = std::move(list);
    }
}

} // namespace

Corpus load_multiwoz(const fs::path& dir, MultiwozVersion version) {
    Corpus corpus;
    corpus.name = "multiwoz";
    corpus.version = version == MultiwozVersion::V21 ? "2.1" : "2.4";
    corpus.schema = multiwoz::builtin_schema();

    const fs::path data_path = dir / "data.json";
    const json data = read_json(data_path);
    if (!data.is_object()) throw FormatError(data_path.string() + ": expected an object of dialogues");

    std::optional<std::vector<std::string>> test_ids;
    for (const char* name : {"testListFile.txt", "testListFile.json"}) {
        if (fs::exists(dir / name)) {
            test_ids = read_id_list(dir / name);
            break;
        }
    }
    if (fs::exists(dir / "ontology.json")) attach_multiwoz_ontology(corpus.schema, dir / "ontology.json");

    std::map<std::string, const json*> by_id;
    for (const auto& [key, body] : data.items()) by_id.emplace(strip_json_suffix(key), &body);

    std::vector<std::string> ids;
    if (test_ids) {
        ids = *test_ids;
    } else {
        for (const auto& [id, _] : by_id) ids.push_back(id);
    }

    std::set<std::string> seen;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw FormatError(data_path.string() + ": test id " + id + " not in data.json");
        if (!seen.insert(id).second) throw FormatError("duplicate dialogue id " + id);
        const json& body = *it->second;
        const std::string where = data_path.string() + ":" + id;
        if (!body.contains("log") || !body["log"].is_array()) throw FormatError(where + ": missing log array");
        const json& log = body["log"];

        Dialogue d;
        d.id = id;
        std::vector<DomainSet> gold_domains;
        std::vector<DialogueState> gold_states;
        DialogueState prev;
        for (std::size_t i = 0; i < log.size(); ++i) {
            const json& entry = log[i];
            if (!entry.contains("text") || !entry["text"].is_string()) {
                throw FormatError(where + "/log/" + std::to_string(i) + ": missing text");
            }
            d.turns.push_back(Turn{i, i % 2 == 0 ? Speaker::User : Speaker::System,
                                   text::collapse_whitespace(entry["text"].get<std::string>())});
            if (i % 2 != 0) continue;
            // The state after a user turn is annotated on the following system turn.
            DialogueState state = prev;
            if (i + 1 < log.size()) {
                state = multiwoz_state(log[i + 1].value("metadata", json::object()), corpus.schema,
                                       where + "/log/" + std::to_string(i + 1));
            }
            DomainSet domains = act_domains(entry, corpus.schema);
            for (const auto& dom : delta_domains(state_diff(prev, state))) domains.insert(dom);
            gold_domains.push_back(std::move(domains));
            gold_states.push_back(state);
            prev = std::move(state);
        }
        d.gold_turn_domains = std::move(gold_domains);
        d.gold_states = std::move(gold_states);
        d.validate();
        corpus.dialogues.push_back(std::move(d));
    }
    return corpus;
}

EntityType infer_sgd_entity_type(const std::string& slot_name, bool is_categorical,
                                 const std::vector<std::string>& possible_values) {
    const std::string n = text::to_lower(slot_name);
    auto has = [&](std::string_view s) { return n.find(s) != std::string::npos; };
    if (is_categorical && !possible_values.empty()) {
        const bool boolean = std::all_of(possible_values.begin(), possible_values.end(), [](const std::string& v) {
            const std::string l = text::to_lower(v);
            return l == "true" || l == "false";
        });
        if (boolean) return EntityType::Boolean;
    }
    if (has("time")) return EntityType::Time;
    if (has("date") || has("day")) return EntityType::Day;
    if (has("price") || has("fare") || has("cost") || has("balance") || has("amount") || has("rent")) {
        return EntityType::Price;
    }
    if (has("number_of") || has("num_") || has("count") || has("rating") || has("stars") || has("phone")) {
        return EntityType::Number;
    }
    if (has("city") || has("location") || has("address") || has("area") || has("destination") ||
        has("origin") || has("from") || has("to_") || has("place")) {
        return EntityType::Location;
    }
    if (has("_id") || has("code")) return EntityType::Code;
    if (is_categorical) return EntityType::Type;
    return EntityType::Name;
}

namespace {

std::string sgd_domain(const std::string& service) {
    return text::to_lower(service.substr(0, service.find('_')));
}

std::string sgd_slot(const std::string& name) {
    std::string s = text::to_lower(name);
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
}

} // namespace

Corpus load_sgd(const fs::path& dir) {
    Corpus corpus;
    corpus.name = "sgd";
    corpus.version = "1.0";

    const fs::path schema_path = dir / "schema.json";
    const json services = read_json(schema_path);
    if (!services.is_array()) throw FormatError(schema_path.string() + ": expected an array of services");

    // Services sharing a domain prefix (Restaurants_1, Restaurants_2) merge.
    std::vector<std::string> order;
    std::map<std::string, std::vector<SlotSchema>> merged;
    for (const auto& svc : services) {
        const std::string domain = sgd_domain(svc.at("service_name").get<std::string>());
        if (!merged.count(domain)) order.push_back(domain);
        auto& slots = merged[domain];
        for (const auto& js : svc.at("slots")) {
            const std::string raw_name = js.at("name").get<std::string>();
            const std::string name = sgd_slot(raw_name);
            if (std::any_of(slots.begin(), slots.end(), [&](const SlotSchema& s) { return s.name == name; })) continue;
            const bool categorical = js.value("is_categorical", false);
            std::vector<std::string> values = js.value("possible_values", std::vector<std::string>{});
            SlotSchema s;
            s.name = name;
            s.description = js.value("description", "");
            s.entity_type = infer_sgd_entity_type(raw_name, categorical, values);
            if (categorical) {
                for (auto& v : values) {
                    std::string norm = normalize_value(v, s.entity_type);
                    if (!norm.empty() && norm != "dontcare" &&
                        std::find(s.ontology.begin(), s.ontology.end(), norm) == s.ontology.end()) {
                        s.ontology.push_back(std::move(norm));
                    }
                }
            }
            slots.push_back(std::move(s));
        }
    }
    for (const auto& d : order) corpus.schema.add_domain(d, merged[d]);

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string fname = entry.path().filename().string();
        if (fname.starts_with("dialogues_") && fname.ends_with(".json")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::set<std::string> seen;
    for (const auto& file : files) {
        const json dialogues = read_json(file);
        if (!dialogues.is_array()) throw FormatError(file.string() + ": expected an array of dialogues");
        for (const auto& jd : dialogues) {
            Dialogue d;
            d.id = jd.at("dialogue_id").get<std::string>();
            if (!seen.insert(d.id).second) throw FormatError("duplicate dialogue id " + d.id);
            const std::string where = file.string() + ":" + d.id;

            // Merge consecutive same-speaker turns and drop a leading system turn.
            struct RawTurn {
                Speaker speaker;
                std::string text;
                std::vector<const json*> frames;
            };
            std::vector<RawTurn> raw;
            for (const auto& jt : jd.at("turns")) {
                const Speaker sp = jt.at("speaker").get<std::string>() == "USER" ? Speaker::User : Speaker::System;
                const std::string utt = text::collapse_whitespace(jt.at("utterance").get<std::string>());
                if (raw.empty() && sp == Speaker::System) {
                    spdlog::warn("{}: dropping leading system turn", where);
                    continue;
                }
                if (!raw.empty() && raw.back().speaker == sp) {
                    raw.back().text += " " + utt;
                } else {
                    raw.push_back({sp, utt, {}});
                }
                if (jt.contains("frames")) {
                    for (const auto& f : jt["frames"]) raw.back().frames.push_back(&f);
                }
            }

            std::vector<DomainSet> gold_domains;
            std::vector<DialogueState> gold_states;
            DialogueState state;
            for (std::size_t i = 0; i < raw.size(); ++i) {
                d.turns.push_back(Turn{i, raw[i].speaker, raw[i].text});
                if (raw[i].speaker != Speaker::User) continue;
                DomainSet domains;
                for (const json* f : raw[i].frames) {
                    const std::string domain = sgd_domain(f->at("service").get<std::string>());
                    if (!corpus.schema.has_domain(domain)) throw SchemaMismatch(where + ": unknown service " + domain);
                    domains.insert(domain);
                    if (!f->contains("state")) continue;
                    const json& values = (*f)["state"].value("slot_values", json::object());
                    // SGD frame states are cumulative per service.
                    for (const auto& key : corpus.schema.slot_keys(domain)) state.erase(key);
                    for (const auto& [slot, v] : values.items()) {
                        put_gold(state, corpus.schema, make_key(domain, sgd_slot(slot)), v, where);
                    }
                }
                gold_domains.push_back(std::move(domains));
                gold_states.push_back(state);
            }
            d.gold_turn_domains = std::move(gold_domains);
            d.gold_states = std::move(gold_states);
            d.validate();
            corpus.dialogues.push_back(std::move(d));
        }
    }
    return corpus;
}

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats st;
    st.dialogue_count = corpus.dialogues.size();
    st.slot_count = corpus.schema.slot_count();
    st.domain_count = corpus.schema.domains().size();
    st.avg_slots_per_domain =
        st.domain_count == 0 ? 0.0 : static_cast<double>(st.slot_count) / static_cast<double>(st.domain_count);

    std::vector<double> new_sum;
    std::vector<double> active_sum;
    std::vector<std::uint64_t> reach;
    for (const auto& d : corpus.dialogues) {
        if (!d.gold_turn_domains) throw MissingGold("dialogue " + d.id + " has no gold turn domains");
        DomainSet seen;
        const auto& turns = *d.gold_turn_domains;
        if (turns.size() > reach.size()) {
            reach.resize(turns.size(), 0);
            new_sum.resize(turns.size(), 0.0);
            active_sum.resize(turns.size(), 0.0);
        }
        for (std::size_t t = 0; t < turns.size(); ++t) {
            ++st.turn_count;
            st.turn_domain_total += turns[t].size();
            std::size_t introduced = 0;
            for (const auto& dom : turns[t]) {
                if (corpus.schema.has_domain(dom)) st.turn_domain_slot_total += corpus.schema.slots(dom).size();
                if (seen.insert(dom).second) ++introduced;
            }
            ++reach[t];
            new_sum[t] += static_cast<double>(introduced);
            active_sum[t] += static_cast<double>(seen.size());
        }
    }
    st.avg_domains_per_turn =
        st.turn_count == 0 ? 0.0 : static_cast<double>(st.turn_domain_total) / static_cast<double>(st.turn_count);
    for (std::size_t t = 0; t < reach.size(); ++t) {
        st.domain_change_profile.push_back(new_sum[t] / static_cast<double>(reach[t]));
        st.active_domain_profile.push_back(active_sum[t] / static_cast<double>(reach[t]));
    }
    return st;
}

void write_corpus_jsonl(const Corpus& corpus, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& d : corpus.dialogues) out << dialogue_to_json(d).dump() << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Dialogue> read_dialogues_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<Dialogue> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(dialogue_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

nlohmann::json stats_to_json(const CorpusStats& s) {
    return {{"dialogue_count", s.dialogue_count},
            {"turn_count", s.turn_count},
            {"slot_count", s.slot_count},
            {"domain_count", s.domain_count},
            {"turn_domain_total", s.turn_domain_total},
            {"turn_domain_slot_total", s.turn_domain_slot_total},
            {"avg_domains_per_turn", s.avg_domains_per_turn},
            {"avg_slots_per_domain", s.avg_slots_per_domain},
            {"domain_change_profile", s.domain_change_profile},
            {"active_domain_profile", s.active_domain_profile}};
}

} // namespace ovdst
