#include <benchmark/benchmark.h>

#include <random>

#include "ovdst/budget.hpp"
#include "ovdst/evaluator.hpp"
#include "ovdst/gateway.hpp"
#include "ovdst/multiwoz_schema.hpp"

using namespace ovdst;

namespace {

const std::vector<std::string> kValues = {"north", "centre", "17:45", "london liverpool street",
                                          "cambridge belfry lodge", "cheap", "expensive", "4"};

StateSeq random_states(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto keys = multiwoz::builtin_schema().slot_keys();
    StateSeq out;
    DialogueState s;
    for (std::size_t i = 0; i < n; ++i) {
        if (i % 8 == 0) s = {};
        s.set(keys[rng() % keys.size()], SlotValue::informed(kValues[rng() % kValues.size()]));
        out.push_back(s);
    }
    return out;
}

Corpus synthetic_corpus(std::size_t dialogues) {
    Corpus c;
    c.schema = multiwoz::builtin_schema();
    const auto domains = c.schema.domains();
    std::mt19937_64 rng(7);
    for (std::size_t d = 0; d < dialogues; ++d) {
        Dialogue dlg;
        dlg.id = "D" + std::to_string(d);
        std::vector<DomainSet> gold;
        for (std::size_t t = 0; t < 7; ++t) {
            dlg.turns.push_back({2 * t, Speaker::User, "u"});
            dlg.turns.push_back({2 * t + 1, Speaker::System, "s"});
            gold.push_back({domains[rng() % domains.size()]});
        }
        dlg.gold_turn_domains = std::move(gold);
        c.dialogues.push_back(std::move(dlg));
    }
    return c;
}

} // namespace

static void bm_fuzzy_match(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(fuzzy_match("london liverpool streets", "london liverpool street"));
        benchmark::DoNotOptimize(fuzzy_match("cambridge belfry lodge", "the cambridge belfry"));
    }
}
BENCHMARK(bm_fuzzy_match);

static void bm_jga(benchmark::State& state) {
    const auto pred = random_states(static_cast<std::size_t>(state.range(0)), 1);
    const auto gold = random_states(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(jga(pred, gold));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_jga)->Arg(1000)->Arg(7372);

static void bm_corpus_stats(benchmark::State& state) {
    const Corpus c = synthetic_corpus(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(budget_table(corpus_stats(c)));
}
BENCHMARK(bm_corpus_stats)->Arg(1000);

static void bm_repair_json(benchmark::State& state) {
    const std::string raw = "Sure! Here is the state:\n```json\n{'area': 'north', 'price range': \"cheap\", "
                            "'stars': 4, 'parking': None,}\n```";
    for (auto _ : state) benchmark::DoNotOptimize(repair_json(raw));
}
BENCHMARK(bm_repair_json);
BENCHMARK_MAIN();
