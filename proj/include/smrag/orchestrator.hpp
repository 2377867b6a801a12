#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smrag/backend.hpp"
#include "smrag/core.hpp"
#include "smrag/reflection.hpp"
#include "smrag/retrieval.hpp"

namespace smrag {

enum class DecisionChoice { retrieve, no_retrieve, continue_to_use_evidence };

const char* to_string(DecisionChoice c) noexcept;  // "Retrieve", "NoRetrieve", "ContinueToUseEvidence"
DecisionChoice decision_choice_from_string(std::string_view s);

struct RetrievalDecision {
    DecisionChoice choice = DecisionChoice::retrieve;
    GroupScores scores;  // retrieval3
};

struct RetrievalQuery {
    std::string summary;
    std::string question;
    std::string combined;
    bool structured = true;  // false when the reply lacked Summary:/Question: markers

    bool operator==(const RetrievalQuery&) const = default;
};

struct ScoredSegment {
    std::string text;
    CandidateScore score;
};

struct CandidateResponse {
    std::optional<Passage> passage;
    std::vector<ScoredSegment> segments;
    double total = 0.0;
    bool failed = false;
    std::string error;

    std::string text() const;
};

struct Event {
    std::size_t turn = 0;  // index of the user turn that started it
    std::size_t seq = 0;   // position within the turn
    std::string kind;      // decision | query | retrieved | candidate | selected
    std::int64_t ts_ms = 0;
    json payload;

    bool operator==(const Event&) const = default;
};

using EventSink = std::function<void(const Event&)>;

struct TurnResult {
    std::string user_text;
    RetrievalDecision decision;
    std::optional<RetrievalQuery> query;
    RankedList retrieved;
    std::vector<CandidateResponse> candidates;
    std::size_t selected_index = 0;
    std::size_t retriever_calls = 0;
    std::vector<Event> events;

    const CandidateResponse& selected() const { return candidates.at(selected_index); }
};

// ------------------------------------------------------------ operations

/// Scores the three retrieval tokens and picks the argmax (ties:
/// Retrieve > ContinueToUseEvidence > NoRetrieve). Continue is masked out
/// when there are no prior passages.
RetrievalDecision decide_retrieval(const Conversation& history, std::span<const Passage> prior_passages,
                                   const LanguageBackend& backend);

/// Splits a summarizer reply on its "Summary:" / "Question:" markers.
RetrievalQuery parse_summary(std::string_view reply);

RetrievalQuery summarize_for_retrieval(const Conversation& history, const LanguageBackend& backend,
                                       std::size_t max_tokens = 128);

/// Passages attached to the most recent `cfg.evidence_window` assistant turns
/// (and the user turns among them), most recent first, deduplicated, capped at
/// top_k. Ids must resolve in `corpus`.
std::vector<Passage> prior_passages(const Conversation& conv, const Corpus& corpus, const PipelineConfig& cfg);

/// One candidate per passage, or a single passage-free candidate when
/// `passages` is empty. Output order follows `passages`.
std::vector<CandidateResponse> generate_candidates(const Conversation& history, const std::vector<Passage>& passages,
                                                   const PipelineConfig& cfg, const LanguageBackend& backend);

/// A path through a segment tree: the chosen continuation at each step.
struct BeamPath {
    std::vector<std::size_t> choices;
    double total = 0.0;
};

/// Composite scores of the continuations available after `prefix`; empty
/// when the prefix is a completed sequence.
using Expander = std::function<std::vector<double>(std::span<const std::size_t> prefix)>;

/// Segment-level beam search. Keeps the top `beam_size` partial paths by
/// cumulative score at each step and returns the best completed path. Ties
/// go to the lexicographically smaller path.
BeamPath beam_search(const Expander& expand, std::size_t beam_size, std::size_t max_steps);

/// Beam selection over candidate segment chains, rescoring each segment with
/// `weights`. Failed candidates never win. Returns the index into
/// `candidates`; throws if every candidate failed.
std::size_t beam_select(const std::vector<CandidateResponse>& candidates, std::size_t beam_size,
                        const ScoringWeights& weights);

// -------------------------------------------------------------- pipeline

using Clock = std::function<std::int64_t()>;

/// Wall-clock milliseconds since the epoch.
std::int64_t system_clock_ms();

class Pipeline {
public:
    Pipeline(const LanguageBackend& backend, const Retriever& retriever, const Corpus& corpus, PipelineConfig cfg);

    /// Runs one turn on `conv`. The conversation is only modified when the
    /// turn completes; any failure leaves it untouched.
    TurnResult run_turn(Conversation& conv, std::string_view message, const EventSink& sink = {}) const;

    const PipelineConfig& config() const noexcept { return cfg_; }
    std::size_t retriever_calls() const noexcept { return retriever_calls_.load(); }
    void set_clock(Clock clock) { clock_ = std::move(clock); }

private:
    const LanguageBackend& backend_;
    const Retriever& retriever_;
    const Corpus& corpus_;
    PipelineConfig cfg_;
    Clock clock_ = system_clock_ms;
    mutable std::atomic<std::size_t> retriever_calls_{0};
};

void to_json(json& j, const RetrievalDecision& d);
void from_json(const json& j, RetrievalDecision& d);
void to_json(json& j, const RetrievalQuery& q);
void from_json(const json& j, RetrievalQuery& q);
void to_json(json& j, const CandidateResponse& c);
void from_json(const json& j, CandidateResponse& c);
void to_json(json& j, const Event& e);
void from_json(const json& j, Event& e);
void to_json(json& j, const TurnResult& r);
void from_json(const json& j, TurnResult& r);

}  // namespace smrag
