#include "ovdst/refinery.hpp"

#include "ovdst/errors.hpp"
#include "ovdst/text.hpp"

namespace ovdst {

std::string_view to_string(StopReason r) {
    return r == StopReason::MinorChanges ? "minor-changes" : "iteration-limit";
}

nlohmann::json RefinementTrace::to_json() const {
    nlohmann::json its = nlohmann::json::array();
    for (const auto& it : iterations) {
        its.push_back({{"prompt", it.prompt},
                       {"output", it.output},
                       {"feedback", it.feedback},
                       {"change_score", it.change_score}});
    }
    return {{"iterations", std::move(its)}, {"stop_reason", std::string(to_string(stop_reason))}};
}

StopDecision should_stop(std::string_view prev, std::string_view next, int iteration, int max_iters,
                         double threshold) {
    StopDecision d;
    d.similarity = text::edit_similarity(prev, next);
    if (d.similarity >= threshold) {
        d.stop = true;
        d.reason = StopReason::MinorChanges;
    } else if (iteration >= max_iters) {
        d.stop = true;
        d.reason = StopReason::IterationLimit;
    }
    return d;
}

const std::string& default_refinement_dialogue() {
    static const std::string dialogue =
        "USER: I need a train to cambridge on tuesday, leaving after 09:15.\n"
        "SYSTEM: There are 12 trains. Where will you be departing from?\n"
        "USER: From london kings cross. Book it for 2 people please.\n"
        "SYSTEM: Booked TR1234, reference number ABC123. Anything else?\n"
        "USER: I also want a cheap hotel in the north, any star rating is fine.\n";
    return dialogue;
}

namespace {

std::string strip_fences(const std::string& s) {
    std::string t = text::trim(s);
    if (!t.starts_with("```")) return t;
    auto nl = t.find('\n');
    auto close = t.rfind("```");
    if (nl == std::string::npos || close <= nl) return t;
    return text::trim(t.substr(nl + 1, close - nl - 1));
}

std::string task_request(const std::string& prompt, const std::string& sample) {
    return prompt + "\n\n" + sample;
}

std::string feedback_request(const std::string& prompt, const std::string& sample, const std::string& output) {
    return "Review the prompt below, the dialogue it was applied to, and the output you produced for it. "
           "Point out ambiguities, inaccuracies, missing instructions and formatting problems in the output, "
           "and say how the prompt could be improved to avoid them.\n\n"
           "PROMPT:\n" + prompt + "\n\nDIALOGUE:\n" + sample + "\n\nOUTPUT:\n" + output + "\n\nFEEDBACK:";
}

std::string revision_request(const std::string& prompt, const std::string& output, const std::string& feedback) {
    return "Rewrite the prompt below so that it addresses the feedback, for example by adding more specific "
           "instructions or restructuring the format. Return only the revised prompt text.\n\n"
           "PROMPT:\n" + prompt + "\n\nOUTPUT:\n" + output + "\n\nFEEDBACK:\n" + feedback + "\n\nREVISED PROMPT:";
}

} // namespace

RefinementResult refine_prompt(const std::string& initial, Gateway& gateway, RefinementOptions options) {
    if (options.max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (text::trim(initial).empty()) throw ConfigError("initial prompt must be non-empty");
    const std::string& sample =
        options.sample_dialogue.empty() ? default_refinement_dialogue() : options.sample_dialogue;

    auto ask = [&](std::string text) {
        PromptSpec spec;
        spec.text = std::move(text);
        spec.params = options.params;
        spec.stage = Stage::Refinement;
        return gateway.complete(spec);
    };

    RefinementResult result;
    std::string current = initial;
    for (int iteration = 1; iteration <= options.max_iters; ++iteration) {
        RefinementIteration it;
        it.output = ask(task_request(current, sample));
        it.feedback = text::trim(ask(feedback_request(current, sample, it.output)));
        if (it.feedback.empty()) {
            it.feedback = text::trim(ask(feedback_request(current, sample, it.output)));
            if (it.feedback.empty()) throw RefusalLoop("model returned empty feedback twice in a row");
        }
        it.prompt = strip_fences(ask(revision_request(current, it.output, it.feedback)));
        if (it.prompt.empty()) it.prompt = current;
        it.change_score = text::edit_similarity(current, it.prompt);

        StopDecision decision;
        if (iteration == 1) {
            if (iteration >= options.max_iters) decision = {true, StopReason::IterationLimit, it.change_score};
        } else {
            decision = should_stop(current, it.prompt, iteration, options.max_iters,
                                   options.minor_change_similarity);
        }
        current = it.prompt;
        result.trace.iterations.push_back(std::move(it));
        if (decision.stop) {
            result.trace.stop_reason = *decision.reason;
            break;
        }
    }
    result.prompt = current;
    return result;
}

} // namespace ovdst
