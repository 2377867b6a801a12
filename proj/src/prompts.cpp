#include "smrag/prompts.hpp"

namespace smrag {

namespace {

std::string passage_block(const Passage& p) {
    std::string out = "Passage id: " + p.id + "\n";
    if (!p.title.empty()) out += "Title: " + p.title + "\n";
    out += p.text + "\n";
    return out;
}

std::string header(std::string_view task, const Conversation& history) {
    std::string out(task);
    out += "\n### Conversation History:\n";
    out += render_dialogue(history);
    return out;
}

}  // namespace

std::string render_dialogue(const Conversation& conv) {
    std::string out;
    for (const auto& t : conv.turns) {
        out += t.role == Role::user ? "User: " : "Assistant: ";
        out += t.text;
        out += '\n';
    }
    return out;
}

std::string decision_prompt(const Conversation& history, std::span<const Passage> prior_passages) {
    std::string out = header(kDecisionTask, history);
    if (!prior_passages.empty()) {
        out += "### Previously Retrieved Passages:\n";
        for (const auto& p : prior_passages) out += passage_block(p);
    }
    out += "### Instruction:\nDecide whether answering the last user turn needs new passages [Retrieve], "
           "needs no evidence [No Retrieve], or can use the passages already in the conversation "
           "[Continue to Use Evidence].\n### Decision:";
    return out;
}

std::string generation_prompt(const Conversation& history, const Passage* passage) {
    std::string out = header(kGenerateTask, history);
    if (passage) out += "### Passage:\n" + passage_block(*passage);
    out += "### Response:\n";
    return out;
}

std::string relevance_prompt(const Conversation& history, const Passage& passage) {
    std::string out = header(kRelevanceTask, history);
    out += "### Passage:\n" + passage_block(passage);
    out += "### Is the passage relevant to the conversation?";
    return out;
}

std::string groundedness_prompt(const Conversation& history, const Passage& passage, std::string_view so_far,
                                std::string_view segment) {
    std::string out = header(kGroundednessTask, history);
    out += "### Passage:\n" + passage_block(passage);
    out += "### Response So Far:\n";
    out += so_far;
    out += "\n### Segment:\n";
    out += segment;
    out += "\n### Is the segment supported by the passage?";
    return out;
}

std::string utility_prompt(const Conversation& history, const Passage* passage, std::string_view so_far) {
    std::string out = header(kUtilityTask, history);
    if (passage) out += "### Passage:\n" + passage_block(*passage);
    out += "### Response:\n";
    out += so_far;
    out += "\n### Rate the usefulness of the response from 1 to 5.";
    return out;
}

std::string rewrite_prompt(const Conversation& history) {
    std::string out = header(kRewriteTask, history);
    out += "### Rewrite the last user turn as a single self-contained question.\n### Question:";
    return out;
}

}  // namespace smrag
