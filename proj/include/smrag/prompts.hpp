#pragma once

#include <span>
#include <string>
#include <string_view>

#include "smrag/core.hpp"

namespace smrag {

// Pipeline prompts. Each starts with a "### Task:" header naming its stage so
// scripted backends (and humans reading logs) can tell the calls apart.

inline constexpr std::string_view kDecisionTask = "### Task: retrieval-decision";
inline constexpr std::string_view kGenerateTask = "### Task: respond";
inline constexpr std::string_view kRelevanceTask = "### Task: relevance";
inline constexpr std::string_view kGroundednessTask = "### Task: groundedness";
inline constexpr std::string_view kUtilityTask = "### Task: utility";
inline constexpr std::string_view kRewriteTask = "### Task: rewrite";

/// "User: ..." / "Assistant: ..." lines.
std::string render_dialogue(const Conversation& conv);

/// Decision prompt; prior passages are listed only when present.
std::string decision_prompt(const Conversation& history, std::span<const Passage> prior_passages);

/// Generation prompt for one candidate; `passage` is null on the
/// no-retrieval path.
std::string generation_prompt(const Conversation& history, const Passage* passage);

std::string relevance_prompt(const Conversation& history, const Passage& passage);

/// Conditions on the passage and the response generated so far, ending with
/// the segment being judged.
std::string groundedness_prompt(const Conversation& history, const Passage& passage, std::string_view so_far,
                                std::string_view segment);

std::string utility_prompt(const Conversation& history, const Passage* passage, std::string_view so_far);

/// Single-question rewrite of the conversation (a query-rewriting baseline).
std::string rewrite_prompt(const Conversation& history);

}  // namespace smrag
