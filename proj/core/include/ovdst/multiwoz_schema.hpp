#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ovdst/dialogue.hpp"

namespace ovdst::multiwoz {

// The eight MultiWOZ domains and 61 slots under their canonical hyphenated
// names. Ontology lists are empty; the dataset adapter fills them from
// ontology.json when present.
Schema builtin_schema();

// Entity type -> qualified slot keys, exactly the rows of the MultiWOZ
// entity/slot table. DONTCARE applies to every slot and has no row here.
const std::vector<std::pair<EntityType, std::vector<std::string>>>& entity_slot_table();

} // namespace ovdst::multiwoz
