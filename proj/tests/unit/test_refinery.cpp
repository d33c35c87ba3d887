#include <doctest.h>

#include "ovdst/errors.hpp"
#include "ovdst/refinery.hpp"

using namespace ovdst;

namespace {

std::shared_ptr<MockBackend> refinement_mock(std::vector<std::string> revisions, std::vector<std::string> feedback) {
    auto mock = std::make_shared<MockBackend>(std::vector<MockBackend::Rule>{}, "{\"domains\": [\"train\"]}");
    mock->add_rule(MockBackend::contains("REVISED PROMPT:"), MockBackend::sequence(std::move(revisions)));
    mock->add_rule(MockBackend::contains("Review the prompt below"), MockBackend::sequence(std::move(feedback)));
    return mock;
}

GatewayOptions no_sleep() {
    GatewayOptions o;
    o.sleep = [](std::chrono::milliseconds) {};
    return o;
}

const std::string kBase(200, 'x');

} // namespace

TEST_CASE("stop rule") {
    CHECK(should_stop("abc", "abc", 2, 5).reason == StopReason::MinorChanges);
    CHECK_FALSE(should_stop("abc", "xyz", 2, 5).stop);
    CHECK(should_stop("abc", "xyz", 5, 5).reason == StopReason::IterationLimit);
    const std::string a(100, 'a');
    std::string b = a;
    b[0] = 'b';
    b[1] = 'b';
    CHECK(should_stop(a, b, 2, 5).similarity == doctest::Approx(0.98));
    CHECK(should_stop(a, b, 2, 5).stop);
    b[2] = 'b';
    CHECK_FALSE(should_stop(a, b, 2, 5).stop);
    CHECK(to_string(StopReason::MinorChanges) == "minor-changes");
    CHECK(to_string(StopReason::IterationLimit) == "iteration-limit");
}

TEST_CASE("converges on minor changes between consecutive revisions") {
    const std::string r1 = "Classify the user turn into services. " + kBase;
    const std::string r2 = "Classify the user turn into domains. " + kBase;
    const std::string r3 = "Classify the user turn into domains! " + kBase;
    auto mock = refinement_mock({r1, r2, r3}, {"be more specific"});
    Gateway gw(mock, no_sleep());
    auto result = refine_prompt("Which service?", gw);
    CHECK(result.trace.stop_reason == StopReason::MinorChanges);
    REQUIRE(result.trace.iterations.size() == 3);
    CHECK(result.prompt == r3);
    CHECK(result.trace.iterations[0].output == "{\"domains\": [\"train\"]}");
    CHECK(result.trace.iterations[0].feedback == "be more specific");
    CHECK(gw.ledger().requests(Stage::Refinement) == 9);
    CHECK(result.trace.to_json()["stop_reason"] == "minor-changes");
}

TEST_CASE("first revision is never compared with the seed") {
    // identical to the seed, but only iteration 2 may stop on minor changes
    auto mock = refinement_mock({"seed prompt", "seed prompt"}, {"fine"});
    Gateway gw(mock, no_sleep());
    auto result = refine_prompt("seed prompt", gw);
    CHECK(result.trace.iterations.size() == 2);
    CHECK(result.trace.stop_reason == StopReason::MinorChanges);
}

TEST_CASE("stops at the iteration cap") {
    auto mock = refinement_mock({"aaaa", "bbbb", "cccc", "dddd", "eeee", "ffff"}, {"change everything"});
    Gateway gw(mock, no_sleep());
    RefinementOptions opts;
    opts.max_iters = 4;
    auto result = refine_prompt("seed", gw, opts);
    CHECK(result.trace.stop_reason == StopReason::IterationLimit);
    CHECK(result.trace.iterations.size() == 4);
    CHECK(result.prompt == "dddd");

    opts.max_iters = 1;
    Gateway gw1(refinement_mock({"zz"}, {"f"}), no_sleep());
    CHECK(refine_prompt("seed", gw1, opts).trace.stop_reason == StopReason::IterationLimit);
}

TEST_CASE("code fences around revisions are stripped") {
    auto mock = refinement_mock({"```\nnew prompt\n```", "```text\nnew prompt\n```"}, {"ok"});
    Gateway gw(mock, no_sleep());
    CHECK(refine_prompt("old", gw).prompt == "new prompt");
}

TEST_CASE("empty feedback twice is a refusal loop") {
    SUBCASE("two in a row") {
        Gateway gw(refinement_mock({"x"}, {"", " \n"}), no_sleep());
        CHECK_THROWS_AS(refine_prompt("seed", gw), RefusalLoop);
    }
    SUBCASE("one empty answer is re-asked") {
        Gateway gw(refinement_mock({"a1", "a1"}, {"", "feedback", "more"}), no_sleep());
        auto r = refine_prompt("seed", gw);
        CHECK(r.trace.iterations[0].feedback == "feedback");
    }
}

TEST_CASE("option validation") {
    Gateway gw(std::make_shared<MockBackend>(), no_sleep());
    RefinementOptions o;
    o.max_iters = 0;
    CHECK_THROWS_AS(refine_prompt("x", gw, o), ConfigError);
    CHECK_THROWS_AS(refine_prompt("  ", gw), ConfigError);
    CHECK(default_refinement_dialogue().find("USER:") != std::string::npos);
}
