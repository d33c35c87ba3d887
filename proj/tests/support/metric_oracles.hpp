#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ovdst/dialogue.hpp"

// Slow, obviously-correct recounts of the evaluation metrics. They share no
// code with the library beyond the state containers.
namespace ovdst::oracle {

std::size_t levenshtein(const std::string& a, const std::string& b);
// Values in random fixtures are already canonical, so only the distance rule applies.
bool value_match(const SlotValue& p, const SlotValue& g, double threshold);

double jga(const std::vector<DialogueState>& pred, const std::vector<DialogueState>& gold, double threshold);
double aga(const std::vector<std::vector<DialogueState>>& pred, const std::vector<std::vector<DialogueState>>& gold,
           double threshold);
double domain_accuracy(const std::vector<DomainSet>& pred, const std::vector<DomainSet>& gold);
std::map<std::pair<std::string, std::string>, std::uint64_t> matrix(const std::vector<DomainSet>& pred,
                                                                    const std::vector<DomainSet>& gold);
// position -> (hits, count)
std::map<std::size_t, std::pair<std::size_t, std::size_t>> positions(const std::vector<std::vector<DomainSet>>& pred,
                                                                     const std::vector<std::vector<DomainSet>>& gold);

struct Fixture {
    std::vector<std::vector<DialogueState>> pred_states, gold_states;
    std::vector<std::vector<DomainSet>> pred_domains, gold_domains;

    std::vector<DialogueState> flat_pred() const;
    std::vector<DialogueState> flat_gold() const;
    std::vector<DomainSet> flat_pred_domains() const;
    std::vector<DomainSet> flat_gold_domains() const;
};

// Random dialogues over a small vocabulary with near-duplicate values, so
// fuzzy matches, dontcare and requested markers all occur.
Fixture random_fixture(std::mt19937_64& rng);

extern const std::vector<std::string> kDomains;

} // namespace ovdst::oracle
