#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smrag/core.hpp"

namespace smrag {

/// Reflection-token vocabulary. Enumerator order inside a group is the
/// canonical order used by GroupScores.
enum class ReflectionToken {
    retrieve,
    no_retrieve,
    continue_to_use_evidence,
    relevant,
    non_relevant,
    fully_supported,
    partially_supported,
    no_support,
    utility_1,
    utility_2,
    utility_3,
    utility_4,
    utility_5,
};

enum class TokenGroup { retrieval3, relevance, groundedness, utility };

/// Bumped whenever a canonical surface form changes.
inline constexpr int kTokenTableVersion = 1;

struct TokenEntry {
    ReflectionToken token;
    TokenGroup group;
    std::string_view surface;
};

/// The canonical token table shared by backends, datagen and the service.
std::span<const TokenEntry> token_table() noexcept;

std::string_view surface(ReflectionToken token) noexcept;
TokenGroup group_of(ReflectionToken token) noexcept;
std::span<const ReflectionToken> group_tokens(TokenGroup group) noexcept;
std::vector<std::string> group_surfaces(TokenGroup group);
const char* to_string(TokenGroup group) noexcept;
TokenGroup token_group_from_string(std::string_view s);

/// Resolves a bracketed span (brackets included) to a token. Accepts the
/// canonical forms plus aliases such as "[Irrelevant]".
std::optional<ReflectionToken> lookup_token(std::string_view bracketed);

/// Log-probability sentinel for "no mass".
inline constexpr double kNoMass = -std::numeric_limits<double>::infinity();

struct GroupScores {
    TokenGroup group = TokenGroup::relevance;
    std::vector<double> probs;  // aligned with group_tokens(group)

    double prob(ReflectionToken token) const;
    ReflectionToken argmax() const;  // ties resolve to the earlier canonical token
};

/// Softmax over the group's log-probabilities. Missing tokens count as kNoMass.
GroupScores normalize_group(const std::map<ReflectionToken, double>& raw, TokenGroup group);

/// Same, keyed by surface strings (the shape backends return).
GroupScores normalize_group(const std::map<std::string, double>& raw, TokenGroup group);

/// S(group): probability of [Relevant], [Fully supported] or [Utility:5].
double desirable_score(const GroupScores& gs);

/// Expected-credit variant: partial support counts 0.5, utility level L
/// counts (L - 1) / 4.
double weighted_score(const GroupScores& gs);

double group_score(const GroupScores& gs, ScoringMode mode);

/// p_norm + w1 * s_rel + w2 * s_grd + w3 * s_utl.
double compose_score(double p_norm, double s_rel, double s_grd, double s_utl, const ScoringWeights& w);

struct CandidateScore {
    double p_norm = 0.0;
    std::optional<double> s_rel;  // absent when there is no passage
    std::optional<double> s_grd;  // absent when there is no passage
    double s_utl = 0.0;
    double composite = 0.0;
    bool p_unavailable = false;

    /// Recomputes the composite for `w`, treating absent group scores as 0.
    double recompute(const ScoringWeights& w) const;
    bool consistent_with(const ScoringWeights& w, double tol = 1e-12) const;

    bool operator==(const CandidateScore&) const = default;
};

CandidateScore make_candidate_score(double p_norm, std::optional<double> s_rel,
                                    std::optional<double> s_grd, double s_utl,
                                    const ScoringWeights& w);

struct TokenAt {
    ReflectionToken token;
    std::size_t position;  // byte offset of '[' in the annotated text

    bool operator==(const TokenAt&) const = default;
};

struct AnnotatedSegment {
    std::string text;
    std::vector<TokenAt> tokens;
    // Byte range [begin, end) of the annotated text covered by this segment,
    // including its reflection tokens.
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct AnnotatedOutput {
    std::vector<AnnotatedSegment> segments;

    std::string plain_text() const;
    std::size_t token_count() const;
};

/// Lenient parse of generator output. A groundedness token closes a segment;
/// utility tokens directly after it still belong to the closed segment.
AnnotatedOutput parse_annotated(std::string_view text);

/// Removes every recognized reflection token, keeping all other text.
std::string strip_tokens(std::string_view text);

void to_json(json& j, const GroupScores& gs);
void from_json(const json& j, GroupScores& gs);
void to_json(json& j, const CandidateScore& s);
void from_json(const json& j, CandidateScore& s);

}  // namespace smrag
