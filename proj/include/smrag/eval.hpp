#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "smrag/backend.hpp"
#include "smrag/core.hpp"
#include "smrag/datagen.hpp"
#include "smrag/jsonl.hpp"
#include "smrag/retrieval.hpp"

namespace smrag {

/// Bumped whenever a report record changes shape.
inline constexpr int kReportVersion = 1;

// ------------------------------------------------------- critic accuracy

enum class CriticVariant { with_passages, without_passages, not_applicable };

const char* to_string(CriticVariant v) noexcept;  // "with_passages", "without_passages", "n/a"
CriticVariant critic_variant_from_string(std::string_view s);

struct CriticPrediction {
    std::string id;  // optional record name used in error messages
    CriticTask task = CriticTask::relevance;
    CriticVariant variant = CriticVariant::not_applicable;
    std::string predicted;
    std::string gold;
};

struct CriticEvalRow {
    CriticTask task = CriticTask::relevance;
    CriticVariant variant = CriticVariant::not_applicable;
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t n = 0;

    bool operator==(const CriticEvalRow&) const = default;
};

/// Maps a label onto the task alphabet: aliases resolve to their canonical
/// token and bare utility levels "1".."5" become "[Utility:N]". Returns
/// nullopt when the label is outside the alphabet.
std::optional<std::string> canonical_label(CriticTask task, std::string_view label);

/// Accuracy per (task, variant), rows ordered by task then variant.
/// Summarization has no alphabet and is rejected.
std::vector<CriticEvalRow> critic_accuracy(const std::vector<CriticPrediction>& predictions);

CriticPrediction critic_prediction_from_json(const json& j);

std::string critic_report_table(const std::vector<CriticEvalRow>& rows);
json critic_report_json(const std::vector<CriticEvalRow>& rows);

// ---------------------------------------------------- retrieval report

enum class Representation { last_turn, full_conversation, rewrite, summary, gold_rewrite };

const char* to_string(Representation r) noexcept;
Representation representation_from_string(std::string_view s);
std::vector<Representation> all_representations();

struct RetrievalReportRow {
    Representation representation = Representation::last_turn;
    RetrieverKind retriever = RetrieverKind::bm25;
    std::vector<std::size_t> ks;
    std::vector<double> recall;  // mean recall@k, aligned with ks
    std::vector<double> hit;     // mean hit@k, aligned with ks
    std::size_t n_questions = 0;
    std::size_t skipped = 0;

    double recall_at(std::size_t k) const;  // throws if k was not evaluated

    bool operator==(const RetrievalReportRow&) const = default;
};

struct RetrievalReportOptions {
    std::vector<Representation> representations = all_representations();
    std::vector<RetrieverKind> retrievers = {RetrieverKind::bm25};
    std::vector<std::size_t> ks = {5, 10};
    std::size_t parallelism = 4;
};

struct RetrievalReport {
    std::vector<RetrievalReportRow> rows;  // representation-major
    std::vector<std::string> warnings;
};

/// A benchmark question: a user turn carrying gold passage ids, evaluated
/// with the conversation up to and including that turn.
struct BenchmarkQuestion {
    std::string conversation_id;
    std::size_t turn_index = 0;
    Conversation history;
    std::set<std::string> gold;
    std::optional<std::string> gold_rewrite;
};

/// Every user turn with a non-empty gold set, ordered by conversation id
/// then turn index. User turns without gold are counted in `missing_gold`.
std::vector<BenchmarkQuestion> benchmark_questions(const std::vector<Conversation>& benchmark,
                                                   std::size_t* missing_gold = nullptr);

/// The query string a representation produces for one question. Rewrite
/// and summary need `backend`; gold_rewrite returns nullopt when absent.
std::optional<std::string> representation_query(Representation rep, const BenchmarkQuestion& q,
                                                const LanguageBackend* backend);

RetrievalReport retrieval_report(const std::vector<Conversation>& benchmark,
                                 const std::map<RetrieverKind, const Retriever*>& retrievers,
                                 const LanguageBackend* backend, const RetrievalReportOptions& options = {});

std::string retrieval_report_table(const RetrievalReport& report);
json retrieval_report_json(const RetrievalReport& report);

// --------------------------------------------------------- run metrics

struct TurnNumberStats {
    std::size_t turn_number = 0;  // 1-based ordinal of the user turn
    std::size_t turns = 0;
    std::size_t retrieve = 0;
    double retrieval_rate = 0.0;
    double mean_selected_total = 0.0;
    // Mean s_grd of the selected candidate's segments (the pipeline's own
    // groundedness estimate); absent when no such turn had a passage.
    std::optional<double> mean_pipeline_s_grd;

    bool operator==(const TurnNumberStats&) const = default;
};

struct RunMetrics {
    std::size_t turns = 0;
    double retrieval_rate = 0.0;
    std::map<std::string, std::size_t> decision_histogram;  // all three decisions, zeros included
    std::vector<TurnNumberStats> per_turn;

    bool operator==(const RunMetrics&) const = default;
};

/// One run-log line: {conversation_id, turn_number, result: TurnResult}.
json run_log_line(const std::string& conversation_id, std::size_t turn_number, const json& turn_result);

RunMetrics run_metrics(const std::vector<JsonlRecord>& runlog);
RunMetrics run_metrics(std::istream& runlog);

std::string run_metrics_table(const RunMetrics& m);
json run_metrics_json(const RunMetrics& m);

}  // namespace smrag
