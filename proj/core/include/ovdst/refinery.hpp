#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovdst/gateway.hpp"

namespace ovdst {

enum class StopReason { MinorChanges, IterationLimit };

std::string_view to_string(StopReason r);

struct StopDecision {
    bool stop = false;
    std::optional<StopReason> reason;
    double similarity = 0.0;
};

struct RefinementOptions {
    int max_iters = 5;
    double minor_change_similarity = 0.98;
    // Dialogue the model runs the prompt on before critiquing its own output.
    std::string sample_dialogue;
    SamplingParams params;
};

struct RefinementIteration {
    std::string prompt;    // revision produced by this iteration
    std::string output;    // what the previous prompt produced on the sample
    std::string feedback;  // the model's critique of that output
    double change_score = 0.0;  // edit similarity between previous and new prompt
};

struct RefinementTrace {
    std::vector<RefinementIteration> iterations;
    StopReason stop_reason = StopReason::IterationLimit;

    nlohmann::json to_json() const;
};

struct RefinementResult {
    std::string prompt;
    RefinementTrace trace;
};

// MinorChanges when edit similarity(prev, next) >= threshold, otherwise
// IterationLimit once iteration reaches max_iters.
StopDecision should_stop(std::string_view prev, std::string_view next, int iteration, int max_iters,
                         double threshold = 0.98);

// Generate -> self-feedback -> revise until the revisions settle or the
// iteration cap is hit. The first revision is never compared against the
// seed description; convergence is judged between consecutive revisions.
RefinementResult refine_prompt(const std::string& initial, Gateway& gateway, RefinementOptions options = {});

// Built-in miniature dialogue used when no sample is supplied.
const std::string& default_refinement_dialogue();

} // namespace ovdst
