#include <doctest.h>

#include <random>

#include "ovdst/domain_classifier.hpp"
#include "ovdst/errors.hpp"
#include "ovdst/multiwoz_schema.hpp"
#include "ovdst/prompt_assets.hpp"

using namespace ovdst;

namespace {

GatewayOptions no_sleep() {
    GatewayOptions o;
    o.sleep = [](std::chrono::milliseconds) {};
    return o;
}

struct Env {
    Schema schema = multiwoz::builtin_schema();
    AssetLibrary assets = AssetLibrary::load_default();
};

Turn user(std::size_t i, std::string text) { return {i, Speaker::User, std::move(text)}; }
Turn sys(std::size_t i, std::string text) { return {i, Speaker::System, std::move(text)}; }

} // namespace

TEST_CASE("parse domain responses") {
    const Schema s = multiwoz::builtin_schema();
    CHECK(parse_domain_response(R"({"domains": ["restaurant","train"]})", s) == DomainSet{"restaurant", "train"});
    CHECK(parse_domain_response(R"({"domains": "None"})", s).empty());
    CHECK(parse_domain_response(R"({"domains": "none"})", s).empty());
    CHECK(parse_domain_response(R"({"domains": []})", s).empty());
    CHECK(parse_domain_response("```{\"domains\":[\"Taxi\"]}```", s) == DomainSet{"taxi"});
    CHECK(parse_domain_response(R"(["hotel"])", s) == DomainSet{"hotel"});
    CHECK(parse_domain_response("None", s).empty());
    CHECK(parse_domain_response("None.", s).empty());
    CHECK(parse_domain_response(R"({"domains": ["hotel", "spaceships"]})", s) == DomainSet{"hotel"});
    CHECK(parse_domain_response(R"({"domains": "hotel"})", s) == DomainSet{"hotel"});
    CHECK_THROWS_AS(parse_domain_response("I am not sure", s), UnparseableResponse);
}

TEST_CASE("classify turns with a scripted model") {
    Env env;
    auto mock = std::make_shared<MockBackend>(std::vector<MockBackend::Rule>{}, R"({"domains": "None"})");
    mock->add_rule(MockBackend::contains("USER: I want a taxi to go to the hotel."),
                   MockBackend::constant(R"({"domains": ["taxi"]})"));
    mock->add_rule(MockBackend::contains("USER: a room please"),
                   MockBackend::constant(R"({"domains": ["hotel","spaceships"]})"));
    Gateway gw(mock, no_sleep());

    const std::vector<Turn> history = {user(0, "I need a hotel in the north."), sys(1, "Acorn guest house is free.")};
    auto taxi = classify_turn(user(2, "I want a taxi to go to the hotel."), history, env.schema, gw, env.assets);
    CHECK(taxi.domains == DomainSet{"taxi"});
    CHECK(taxi.turn_index == 2);
    CHECK_FALSE(taxi.fallback);

    auto bye = classify_turn(user(2, "have a nice day"), history, env.schema, gw, env.assets);
    CHECK(bye.domains.empty());

    auto filtered = classify_turn(user(0, "a room please"), {}, env.schema, gw, env.assets);
    CHECK(filtered.domains == DomainSet{"hotel"});
    CHECK(gw.ledger().requests(Stage::DomainClassification) == 3);

    CHECK_THROWS_AS(classify_turn(sys(1, "x"), {}, env.schema, gw, env.assets), ConfigError);
}

TEST_CASE("prompt rendering") {
    Env env;
    const std::vector<Turn> history = {user(0, "first"), sys(1, "second")};
    const std::string p = build_domain_prompt(user(2, "third"), history, env.schema, env.assets);
    CHECK(p.find("restaurant, attraction, hotel, taxi, train, bus, hospital, police") != std::string::npos);
    CHECK(p.find("{domains}") == std::string::npos);
    const std::string tail = "USER: first\nSYSTEM: second\nUSER: third";
    CHECK(p.find(tail) != std::string::npos);
    CHECK(render_turns(history) == "USER: first\nSYSTEM: second\n");
}

TEST_CASE("history truncation drops the oldest pairs") {
    Env env;
    std::vector<Turn> history;
    for (std::size_t i = 0; i < 10; ++i) {
        history.push_back(i % 2 == 0 ? user(i, "u" + std::to_string(i) + std::string(40, '.'))
                                     : sys(i, "s" + std::to_string(i) + std::string(40, '.')));
    }
    ClassifierOptions o;
    o.max_history_chars = 200;
    const std::string p = build_domain_prompt(user(10, "now"), history, env.schema, env.assets, o);
    CHECK(p.find("USER: u0") == std::string::npos);
    CHECK(p.find("SYSTEM: s9") != std::string::npos);
    CHECK(p.find("USER: now") != std::string::npos);
    // pairs are dropped together, so the shown history starts with a user turn
    const auto first_line = p.find("\nUSER: u");
    const auto first_sys = p.find("\nSYSTEM: s");
    CHECK(first_line < first_sys);
    const std::string full = build_domain_prompt(user(10, "now"), history, env.schema, env.assets);
    CHECK(full.find("USER: u0") != std::string::npos);
}

TEST_CASE("unparseable responses fall back to the previous prediction") {
    Env env;
    auto mock = std::make_shared<MockBackend>(std::vector<MockBackend::Rule>{}, "I cannot tell");
    Gateway gw(mock, no_sleep());
    TurnDomainPrediction prev{0, {"train"}, false};
    auto p = classify_turn(user(2, "hmm"), {}, env.schema, gw, env.assets, prev);
    CHECK(p.fallback);
    CHECK(p.domains == DomainSet{"train"});
    CHECK(p.turn_index == 2);
    auto q = classify_turn(user(0, "hmm"), {}, env.schema, gw, env.assets);
    CHECK(q.fallback);
    CHECK(q.domains.empty());
    CHECK(gw.ledger().requests(Stage::DomainClassification) == 4);
}

TEST_CASE("turn independence (property)") {
    Env env;
    auto mock = std::make_shared<MockBackend>(std::vector<MockBackend::Rule>{}, R"({"domains": ["hotel"]})");
    mock->add_rule(MockBackend::contains("USER: taxi please"), MockBackend::constant(R"({"domains": ["taxi"]})"));
    Gateway gw(mock, no_sleep());
    const std::vector<Turn> history = {user(0, "hotel please"), sys(1, "ok")};
    std::mt19937 rng(5);
    const auto domains = env.schema.domains();
    const auto reference = classify_turn(user(2, "taxi please"), history, env.schema, gw, env.assets);
    for (int n = 0; n < 50; ++n) {
        TurnDomainPrediction prev{0, {}, rng() % 2 == 0};
        for (const auto& d : domains) {
            if (rng() % 3 == 0) prev.domains.insert(d);
        }
        REQUIRE(classify_turn(user(2, "taxi please"), history, env.schema, gw, env.assets, prev) == reference);
    }
}
