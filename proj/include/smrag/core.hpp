#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "smrag/error.hpp"

namespace smrag {

using json = nlohmann::json;

enum class Role { user, assistant };

const char* to_string(Role role) noexcept;
Role role_from_string(std::string_view s);

/// One conversational turn. Attached passages cover both evidence a user
/// pasted into a question and passages retrieved for an earlier answer.
struct Turn {
    Role role = Role::user;
    std::string text;
    std::vector<std::string> attached_passage_ids;
    std::optional<std::vector<std::string>> gold_passage_ids;  // benchmark only
    std::optional<std::string> gold_rewrite;                   // benchmark only

    bool operator==(const Turn&) const = default;
};

struct Conversation {
    std::string id;
    std::vector<Turn> turns;

    bool operator==(const Conversation&) const = default;
};

struct Passage {
    std::string id;
    std::string title;
    std::string text;

    /// Text used for indexing: title + " " + text when the title is non-empty.
    std::string indexed_text() const;

    bool operator==(const Passage&) const = default;
};

struct ScoringWeights {
    double relevance = 1.0;
    double groundedness = 1.0;
    double utility = 0.5;

    bool operator==(const ScoringWeights&) const = default;
};

enum class RetrieverKind { bm25, dense };

const char* to_string(RetrieverKind kind) noexcept;
RetrieverKind retriever_kind_from_string(std::string_view s);

/// How S(group) is read off a normalized token distribution.
///   desirable: probability of the single most desirable token.
///   weighted:  expected credit (e.g. [Partially supported] = 0.5).
enum class ScoringMode { desirable, weighted };

const char* to_string(ScoringMode mode) noexcept;
ScoringMode scoring_mode_from_string(std::string_view s);

struct PipelineConfig {
    std::size_t top_k = 5;
    std::size_t beam_size = 2;
    ScoringWeights weights;
    std::size_t max_segments = 4;
    RetrieverKind retriever_kind = RetrieverKind::bm25;

    ScoringMode scoring_mode = ScoringMode::desirable;
    // Number of most recent assistant turns whose attached passages count as
    // prior evidence for [Continue to Use Evidence].
    std::size_t evidence_window = 2;
    // p_norm used when a backend returns no token log-probabilities.
    double p_unavailable_fallback = 0.5;
    std::size_t max_tokens = 256;
    double temperature = 0.0;
    std::size_t summary_max_tokens = 128;

    bool operator==(const PipelineConfig&) const = default;
};

struct Violation {
    std::optional<std::size_t> turn_index;
    std::string message;

    bool operator==(const Violation&) const = default;
};

struct ValidationResult {
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }
    bool mentions(std::string_view fragment) const;
    std::string describe() const;
};

class Corpus;

/// Checks alternation, user-first ordering and non-empty turn text. When a
/// corpus is given, attached passage ids must also resolve.
ValidationResult validate_conversation(const Conversation& conv, const Corpus* corpus = nullptr);

ValidationResult validate_config(const PipelineConfig& cfg);

std::string trim(std::string_view s);

void to_json(json& j, const Turn& t);
void from_json(const json& j, Turn& t);
void to_json(json& j, const Conversation& c);
void from_json(const json& j, Conversation& c);
void to_json(json& j, const Passage& p);
void from_json(const json& j, Passage& p);
void to_json(json& j, const ScoringWeights& w);
void from_json(const json& j, ScoringWeights& w);
void to_json(json& j, const PipelineConfig& c);

/// Reads a config record; absent fields keep the values already in `cfg`.
/// Unknown keys are rejected.
void apply_config_overrides(const json& j, PipelineConfig& cfg);

}  // namespace smrag
