#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smrag/backend.hpp"
#include "smrag/core.hpp"

namespace smrag {

enum class CriticTask { retrieval2, retrieval3, relevance, groundedness, utility, summarization, judge_eval };

const char* to_string(CriticTask task) noexcept;
CriticTask critic_task_from_string(std::string_view s);

/// Bumped on any edit to a template asset.
inline constexpr int kTemplateVersion = 1;

/// The verbatim few-shot preamble (or fill-in form, for judge_eval).
std::string_view template_text(CriticTask task) noexcept;

/// Content hash of (version, task, template text); recorded in every
/// dataset record.
std::string template_hash(CriticTask task);

/// Canonical label alphabet. Retrieval and critic tasks use token surface
/// forms ("[Retrieve]", "[Utility:3]"); judge_eval uses "0".."5";
/// summarization has none.
std::vector<std::string> label_alphabet(CriticTask task);
bool in_alphabet(CriticTask task, std::string_view label);

/// Canonical answer-line rendering of a label, e.g. "Rating: [Relevant]"
/// or "Perceived utility: 4".
std::string format_label(CriticTask task, std::string_view label);

struct TaskInstance {
    Conversation conversation;
    std::optional<Passage> evidence;
    std::optional<std::string> response;
    std::optional<std::string> preceding;
    std::optional<std::string> source;  // opaque provenance tag, e.g. "Q" or "U"

    bool operator==(const TaskInstance&) const = default;
};

/// Template preamble followed by the instance in the exemplar layout.
/// Throws DataError naming the missing field and the task.
std::string render_prompt(CriticTask task, const TaskInstance& instance);

/// Conversation turns one per line, as in the labeling exemplars.
std::string render_history(const Conversation& conv);

/// Extracts a label from a judge reply. Prefers a "Rating"/"GPT-4-Rating"/
/// "Perceived utility"/"Score" line; falls back to scanning the whole reply.
std::string parse_judge_label(CriticTask task, std::string_view text);

struct LabeledInstance {
    CriticTask task = CriticTask::retrieval2;
    TaskInstance instance;
    std::optional<std::string> label;  // absent when parsing failed
    std::string raw_judge_output;
    std::optional<std::string> failure;
    std::string template_hash;
    std::string judge;
};

struct LabelCount {
    std::string label;
    std::size_t count = 0;
    double percentage = 0.0;  // of labeled instances, 0..100
};

struct LabelStats {
    CriticTask task = CriticTask::retrieval2;
    std::size_t instances = 0;
    std::size_t labeled = 0;
    std::size_t failed = 0;
    std::vector<LabelCount> labels;  // alphabet order

    /// Task / #instances / token / percentage table.
    std::string to_table() const;
};

struct LabeledDataset {
    std::vector<LabeledInstance> records;  // input order
    LabelStats stats;
};

LabelStats compute_stats(CriticTask task, const std::vector<LabeledInstance>& records);

struct CollectOptions {
    std::size_t parallelism = 4;
    std::size_t max_tokens = 512;
    double temperature = 0.0;
};

/// Thrown when the judge becomes unreachable; holds every record finished
/// before the failure, in input order.
class CollectionAborted : public Error {
public:
    CollectionAborted(LabeledDataset partial, const std::string& message)
        : Error(ErrorKind::backend, message), partial_(std::move(partial)) {}

    const LabeledDataset& partial() const noexcept { return partial_; }

private:
    LabeledDataset partial_;
};

LabeledDataset collect_labels(const LanguageBackend& judge, CriticTask task, const std::vector<TaskInstance>& instances,
                              const CollectOptions& options = {});

json to_json_record(const LabeledInstance& rec);
json to_json_record(const LabelStats& stats);
TaskInstance task_instance_from_json(const json& j);

}  // namespace smrag
