#include <doctest.h>

#include <random>

#include "metric_oracles.hpp"
#include "ovdst/errors.hpp"
#include "ovdst/evaluator.hpp"

using namespace ovdst;

namespace {

DialogueState st(std::initializer_list<std::pair<const char*, const char*>> kv) {
    DialogueState s;
    for (const auto& [k, v] : kv) s.set(k, SlotValue::parse(v));
    return s;
}

std::vector<TurnRecord> records_of(const oracle::Fixture& f) {
    std::vector<TurnRecord> out;
    for (std::size_t d = 0; d < f.gold_states.size(); ++d) {
        for (std::size_t t = 0; t < f.gold_states[d].size(); ++t) {
            TurnRecord r;
            r.dialogue_id = "D" + std::to_string(100 + d);
            r.turn_index = 2 * t;
            r.pred_domains = f.pred_domains[d][t];
            r.gold_domains = f.gold_domains[d][t];
            r.pred_state = f.pred_states[d][t];
            r.gold_state = f.gold_states[d][t];
            out.push_back(std::move(r));
        }
    }
    return out;
}

} // namespace

TEST_CASE("fuzzy matching") {
    CHECK(fuzzy_match("london liverpool street", "London Liverpool Street"));
    CHECK(fuzzy_match("acorn guest house", "the acorn guest house"));
    CHECK_FALSE(fuzzy_match("north", "south"));
    CHECK(fuzzy_match("center", "centre"));
    CHECK(fuzzy_match("guesthouse", "guest house"));
    CHECK(fuzzy_match("Cambridge.", "cambridge"));
    CHECK_FALSE(fuzzy_match("17:45", "17:15"));
    CHECK(canonical_value("  The  Gonville   Hotel ") == "gonville hotel");
    CHECK(canonical_value("a") == "a");
    CHECK(fuzzy_match("north", "south", 0.0));

    SUBCASE("reflexive and symmetric (property)") {
        std::mt19937 rng(1);
        const std::string alphabet = "ab c";
        for (int n = 0; n < 300; ++n) {
            std::string a(rng() % 25, ' '), b(rng() % 25, ' ');
            for (auto& c : a) c = alphabet[rng() % alphabet.size()];
            for (auto& c : b) c = alphabet[rng() % alphabet.size()];
            REQUIRE(fuzzy_match(a, a));
            REQUIRE(fuzzy_match(a, b) == fuzzy_match(b, a));
        }
    }
    SUBCASE("not transitive") {
        const std::string a(40, 'x');
        std::string b = a, c = a;
        b[0] = b[1] = 'y';
        c[0] = c[1] = 'y';
        c[2] = c[3] = 'y';
        CHECK(fuzzy_match(a, b));
        CHECK(fuzzy_match(b, c));
        CHECK_FALSE(fuzzy_match(a, c));
    }
    SUBCASE("threshold agrees with the reference distance") {
        std::mt19937 rng(2);
        for (int n = 0; n < 300; ++n) {
            std::string a(5 + rng() % 30, 'q');
            for (auto& c : a) c = static_cast<char>('a' + rng() % 3);
            std::string b = a;
            const int edits = static_cast<int>(rng() % 3);
            for (int e = 0; e < edits; ++e) b[rng() % b.size()] = static_cast<char>('a' + rng() % 3);
            REQUIRE(fuzzy_match(a, b) ==
                    oracle::value_match(SlotValue::informed(a), SlotValue::informed(b), kDefaultFuzzyThreshold));
        }
    }
}

TEST_CASE("value and state matching") {
    CHECK(values_match(SlotValue::dont_care(), SlotValue::dont_care()));
    CHECK_FALSE(values_match(SlotValue::dont_care(), SlotValue::informed("dontcare")));
    CHECK_FALSE(values_match(SlotValue::requested(), SlotValue::dont_care()));
    CHECK(states_match(st({{"hotel.area", "North"}}), st({{"hotel.area", "north"}})));
    CHECK_FALSE(states_match(st({{"hotel.area", "north"}, {"hotel.stars", "4"}}), st({{"hotel.area", "north"}})));
    CHECK_FALSE(states_match(st({{"hotel.area", "north"}}), st({{"hotel.name", "north"}})));
}

TEST_CASE("jga") {
    const StateSeq gold = {st({{"train.leave-at", "11:00"}}), st({{"train.leave-at", "11:00"}, {"train.day", "friday"}})};
    CHECK(jga(gold, gold) == 1.0);
    CHECK(jga({gold[0], gold[0]}, gold) == 0.5);
    CHECK(jga({}, {}) == 1.0);
    CHECK(jga({{}, {}}, {{}, {}}) == 1.0);
    CHECK_THROWS_AS(jga({gold[0]}, gold), LengthMismatch);
}

TEST_CASE("aga") {
    const StateSeq gold = {st({{"hotel.area", "north"}, {"hotel.stars", "4"}}), st({{"hotel.area", "north"}, {"hotel.stars", "4"}})};
    CHECK(aga(gold, gold) == 1.0);
    const StateSeq half = {st({{"hotel.area", "north"}}), st({})};
    // second turn has no active slots and is skipped
    CHECK(aga(half, gold) == 0.5);
    const auto detail = aga_detail({half}, {gold});
    CHECK(detail.scored_turns == 1);
    CHECK(detail.skipped_turns == 1);
    CHECK(aga(StateSeq{{}}, StateSeq{{}}) == 1.0);
    CHECK_THROWS_AS(aga({half}, {gold, gold}), LengthMismatch);
}

TEST_CASE("jga and aga are both 1 exactly when every comparison passes") {
    std::mt19937_64 rng(17);
    for (int n = 0; n < 100; ++n) {
        const auto f = oracle::random_fixture(rng);
        const bool all_full = jga(f.flat_pred(), f.flat_gold()) == 1.0;
        if (all_full) REQUIRE(aga(f.pred_states, f.gold_states) == 1.0);
        REQUIRE(jga(f.flat_gold(), f.flat_gold()) == 1.0);
        REQUIRE(aga(f.gold_states, f.gold_states) == 1.0);
    }
}

TEST_CASE("domain accuracy") {
    CHECK(domain_accuracy({{"hotel"}}, {{"hotel"}}) == 1.0);
    CHECK(domain_accuracy({{"hotel"}}, {{"hotel", "taxi"}}) == 0.0);
    DomainSeq g(10, DomainSet{"train"}), p = g;
    p[3] = {"hotel"};
    CHECK(domain_accuracy(p, g) == doctest::Approx(0.9));
    const auto detail = domain_accuracy_detail(p, g);
    CHECK(detail.per_label.at("train").tp == 9);
    CHECK(detail.per_label.at("train").fn == 1);
    CHECK(detail.per_label.at("hotel").fp == 1);
    CHECK(detail.per_label.at("hotel").precision() == 0.0);
    CHECK(detail.per_label.at("train").recall() == doctest::Approx(0.9));
    CHECK_THROWS_AS(domain_accuracy(p, {}), LengthMismatch);
}

TEST_CASE("turn position accuracy") {
    std::vector<DomainSeq> gold, pred;
    for (int d = 0; d < 6; ++d) {
        DomainSeq g(12, DomainSet{"hotel"});
        DomainSeq p = g;
        p[8] = {"taxi"};
        if (d % 2 == 0) p[0] = {};
        gold.push_back(g);
        pred.push_back(p);
    }
    gold.push_back(DomainSeq(3, DomainSet{"train"}));
    pred.push_back(DomainSeq(3, DomainSet{"train"}));
    const auto prof = turn_position_accuracy(pred, gold);
    REQUIRE(prof.size() == 12);
    CHECK(prof[0].accuracy == doctest::Approx(4.0 / 7.0));
    CHECK(prof[0].count == 7);
    CHECK(prof[8].accuracy == 0.0);
    CHECK(prof[7].accuracy == 1.0);
    CHECK(prof[9].accuracy == 1.0);
    CHECK(prof[11].count == 6);

    const auto single = turn_position_accuracy({{{"a"}, {"b"}}}, {{{"a"}, {"c"}}});
    CHECK(single[0].accuracy == 1.0);
    CHECK(single[1].accuracy == 0.0);
}

TEST_CASE("misclassification matrix") {
    const std::vector<std::string> labels = {"media", "movies", "music"};
    auto m = misclassification_matrix({{"media"}}, {{"media"}}, labels);
    CHECK(m.total() == 0);
    m = misclassification_matrix({{"movies"}}, {{"media"}}, labels);
    CHECK(m.at("media", "movies") == 1);
    CHECK(m.total() == 1);
    CHECK(m.to_csv().find("gold\\pred,media,movies,music") == 0);
    const auto j = m.to_json();
    CHECK(j["labels"] == nlohmann::json(labels));
}

TEST_CASE("randomized fixtures against brute-force oracles") {
    std::mt19937_64 rng(99);
    for (int n = 0; n < 200; ++n) {
        const auto f = oracle::random_fixture(rng);
        REQUIRE(jga(f.flat_pred(), f.flat_gold()) == doctest::Approx(oracle::jga(f.flat_pred(), f.flat_gold(), 0.95)).epsilon(1e-12));
        REQUIRE(aga(f.pred_states, f.gold_states) == doctest::Approx(oracle::aga(f.pred_states, f.gold_states, 0.95)).epsilon(1e-12));
        REQUIRE(domain_accuracy(f.flat_pred_domains(), f.flat_gold_domains()) ==
                doctest::Approx(oracle::domain_accuracy(f.flat_pred_domains(), f.flat_gold_domains())).epsilon(1e-12));
        const auto m = misclassification_matrix(f.flat_pred_domains(), f.flat_gold_domains(), oracle::kDomains);
        const auto expected = oracle::matrix(f.flat_pred_domains(), f.flat_gold_domains());
        std::uint64_t total = 0;
        for (const auto& [cell, count] : expected) {
            REQUIRE(m.at(cell.first, cell.second) == count);
            total += count;
        }
        REQUIRE(m.total() == total);
        const auto pos = turn_position_accuracy(f.pred_domains, f.gold_domains);
        const auto expected_pos = oracle::positions(f.pred_domains, f.gold_domains);
        REQUIRE(pos.size() == expected_pos.size());
        for (const auto& p : pos) {
            const auto [hits, count] = expected_pos.at(p.position);
            REQUIRE(p.count == count);
            REQUIRE(p.accuracy == doctest::Approx(double(hits) / double(count)).epsilon(1e-12));
        }
    }
}

TEST_CASE("corrupting one correct turn lowers jga by 1/n") {
    std::mt19937_64 rng(5);
    for (int n = 0; n < 50; ++n) {
        const auto f = oracle::random_fixture(rng);
        auto pred = f.flat_pred();
        const auto gold = f.flat_gold();
        const double before = jga(pred, gold);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (!states_match(pred[i], gold[i])) continue;
            pred[i].set("police.name", SlotValue::informed("nobody"));
            REQUIRE(jga(pred, gold) == doctest::Approx(before - 1.0 / double(gold.size())).epsilon(1e-12));
            break;
        }
    }
}

TEST_CASE("full evaluation and report round trip") {
    std::mt19937_64 rng(3);
    const auto f = oracle::random_fixture(rng);
    const auto records = records_of(f);
    const auto report = evaluate(records, oracle::kDomains);
    CHECK(report.jga == doctest::Approx(oracle::jga(f.flat_pred(), f.flat_gold(), 0.95)));
    CHECK(report.aga == doctest::Approx(oracle::aga(f.pred_states, f.gold_states, 0.95)));
    CHECK(report.dialogue_count == f.gold_states.size());
    CHECK(report.turn_count == records.size());
    for (const auto& [k, v] : report.per_domain_jga) CHECK((v >= 0.0 && v <= 1.0));
    for (const auto& [k, v] : report.per_slot_accuracy) CHECK((v >= 0.0 && v <= 1.0));

    const auto back = EvalReport::from_json(report.to_json());
    CHECK(back.to_json() == report.to_json());
    CHECK(report.to_text_table().find("JGA") != std::string::npos);

    for (const auto& r : records) CHECK(TurnRecord::from_json(r.to_json()).to_json() == r.to_json());
    const auto grouped = group_by_dialogue(records);
    CHECK(grouped.size() == f.gold_states.size());

    const auto perfect = evaluate({}, {});
    CHECK(perfect.jga == 1.0);
}

TEST_CASE("per-domain and per-slot breakdowns") {
    TurnRecord a{"d1", 0, {"hotel"}, {"hotel"}, st({{"hotel.area", "north"}}), st({{"hotel.area", "north"}})};
    TurnRecord b{"d1", 2, {"hotel", "taxi"}, {"hotel", "taxi"},
                 st({{"hotel.area", "north"}, {"taxi.leave-at", "10:00"}}),
                 st({{"hotel.area", "north"}, {"taxi.leave-at", "11:00"}})};
    const auto r = evaluate({a, b});
    CHECK(r.jga == 0.5);
    CHECK(r.per_domain_jga.at("hotel") == 1.0);
    CHECK(r.per_domain_jga.at("taxi") == 0.0);
    CHECK(r.per_slot_accuracy.at("hotel.area") == 1.0);
    CHECK(r.per_slot_accuracy.at("taxi.leave-at") == 0.0);
    CHECK(r.domain_accuracy == 1.0);
    CHECK(r.misclassification_matrix.total() == 0);
}
