#include "smrag/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <future>
#include <sstream>

#include "smrag/reflection.hpp"

namespace smrag {

namespace {

constexpr CriticTask kAllTasks[] = {CriticTask::retrieval2,   CriticTask::retrieval3, CriticTask::relevance,
                                    CriticTask::groundedness, CriticTask::utility,    CriticTask::summarization,
                                    CriticTask::judge_eval};

std::string_view task_noun(CriticTask task) {
    switch (task) {
    case CriticTask::retrieval2: return "retrieval";
    case CriticTask::retrieval3: return "3-way retrieval";
    case CriticTask::relevance: return "relevance";
    case CriticTask::groundedness: return "groundedness";
    case CriticTask::utility: return "utility";
    case CriticTask::summarization: return "summarization";
    case CriticTask::judge_eval: return "judge evaluation";
    }
    return "?";
}

[[noreturn]] void missing(std::string_view field, CriticTask task) {
    throw DataError(std::string(field) + " required for " + std::string(task_noun(task)));
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}

}  // namespace

const char* to_string(CriticTask task) noexcept {
    switch (task) {
    case CriticTask::retrieval2: return "retrieval2";
    case CriticTask::retrieval3: return "retrieval3";
    case CriticTask::relevance: return "relevance";
    case CriticTask::groundedness: return "groundedness";
    case CriticTask::utility: return "utility";
    case CriticTask::summarization: return "summarization";
    case CriticTask::judge_eval: return "judge_eval";
    }
    return "?";
}

CriticTask critic_task_from_string(std::string_view s) {
    for (auto t : kAllTasks)
        if (s == to_string(t)) return t;
    throw DataError("unknown task '" + std::string(s) + "'");
}

std::string template_hash(CriticTask task) {
    std::string material = "v" + std::to_string(kTemplateVersion) + "|" + to_string(task) + "|";
    material += template_text(task);
    return content_digest(material);
}

std::vector<std::string> label_alphabet(CriticTask task) {
    switch (task) {
    case CriticTask::retrieval2: return {"[Retrieve]", "[No Retrieve]"};
    case CriticTask::retrieval3: return group_surfaces(TokenGroup::retrieval3);
    case CriticTask::relevance: return group_surfaces(TokenGroup::relevance);
    case CriticTask::groundedness: return group_surfaces(TokenGroup::groundedness);
    case CriticTask::utility: return group_surfaces(TokenGroup::utility);
    case CriticTask::judge_eval: return {"0", "1", "2", "3", "4", "5"};
    case CriticTask::summarization: return {};
    }
    return {};
}

bool in_alphabet(CriticTask task, std::string_view label) {
    const auto alphabet = label_alphabet(task);
    return std::find(alphabet.begin(), alphabet.end(), label) != alphabet.end();
}

std::string format_label(CriticTask task, std::string_view label) {
    if (!in_alphabet(task, label))
        throw DataError("'" + std::string(label) + "' is not a " + to_string(task) + " label");
    if (task == CriticTask::utility) {
        // "[Utility:N]" -> "Perceived utility: N"
        return "Perceived utility: " + std::string(label.substr(9, 1));
    }
    if (task == CriticTask::judge_eval) return "Score: " + std::string(label);
    return "Rating: " + std::string(label);
}

std::string render_history(const Conversation& conv) {
    std::string out;
    for (const auto& t : conv.turns) {
        out += t.text;
        out += '\n';
    }
    return out;
}

std::string render_prompt(CriticTask task, const TaskInstance& inst) {
    if (inst.conversation.turns.empty()) missing("conversation", task);
    const bool needs_evidence =
        task == CriticTask::retrieval3 || task == CriticTask::relevance || task == CriticTask::groundedness;
    const bool needs_response = task == CriticTask::retrieval3 || task == CriticTask::groundedness ||
                                task == CriticTask::utility || task == CriticTask::judge_eval;
    if (needs_evidence && !inst.evidence) missing("evidence", task);
    if (needs_response && !inst.response) missing("response", task);

    const std::string history = render_history(inst.conversation);
    std::string out(template_text(task));
    switch (task) {
    case CriticTask::retrieval2:
        out += "\nConversation History\n" + history + "Rating:";
        break;
    case CriticTask::retrieval3:
        out += "\nConversation History\n" + history;
        if (inst.preceding) out += "Preceding sentences: " + *inst.preceding + "\n";
        out += "Evidence: " + inst.evidence->indexed_text() + "\n";
        out += "Response: " + *inst.response + "\nRating:";
        break;
    case CriticTask::relevance:
        out += "\nConversation History\n" + history;
        out += "Evidence: " + inst.evidence->indexed_text() + "\nRating:";
        break;
    case CriticTask::groundedness:
        out += "\nConversation History\n" + history;
        out += "Response: " + *inst.response + "\n";
        out += "Evidence: " + inst.evidence->indexed_text() + "\nRating:";
        break;
    case CriticTask::utility:
        out += "\nConversation History:\n" + history;
        out += "Response: " + *inst.response + "\nPerceived utility:";
        break;
    case CriticTask::summarization:
        // The reply carries its own "Summary:" and "Question:" markers.
        out += "\nConveration History:\n" + history;
        break;
    case CriticTask::judge_eval: {
        const auto& turns = inst.conversation.turns;
        auto last_user = std::find_if(turns.rbegin(), turns.rend(), [](const Turn& t) { return t.role == Role::user; });
        if (last_user == turns.rend()) missing("user question", task);
        Conversation before{inst.conversation.id, {turns.begin(), last_user.base() - 1}};
        std::string history_before = render_history(before);
        if (!history_before.empty()) history_before.pop_back();
        replace_all(out, "{conversation}", history_before);
        replace_all(out, "{question}", last_user->text);
        replace_all(out, "{generated_response}", *inst.response);
        break;
    }
    }
    return out;
}

// ----------------------------------------------------------------- parsing

namespace {

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::optional<std::string> bracket_label(CriticTask task, std::string_view text) {
    std::size_t i = 0;
    while ((i = text.find('[', i)) != std::string_view::npos) {
        const auto close = text.find(']', i + 1);
        if (close == std::string_view::npos) break;
        if (auto tok = lookup_token(text.substr(i, close - i + 1))) {
            const std::string canonical(surface(*tok));
            if (in_alphabet(task, canonical)) return canonical;
        }
        i += 1;
    }
    return std::nullopt;
}

std::optional<int> first_int_in_range(std::string_view text, int lo, int hi) {
    std::size_t i = 0;
    while (i < text.size()) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        const auto digits = text.substr(i, j - i);
        if (digits.size() <= 2) {
            const int v = std::stoi(std::string(digits));
            if (v >= lo && v <= hi) return v;
        }
        i = j;
    }
    return std::nullopt;
}

std::optional<std::string> extract(CriticTask task, std::string_view text) {
    switch (task) {
    case CriticTask::utility: {
        if (auto b = bracket_label(task, text)) return b;
        if (auto v = first_int_in_range(text, 1, 5)) return "[Utility:" + std::to_string(*v) + "]";
        return std::nullopt;
    }
    case CriticTask::judge_eval: {
        if (auto v = first_int_in_range(text, 0, 5)) return std::to_string(*v);
        return std::nullopt;
    }
    case CriticTask::summarization: return std::nullopt;
    default: return bracket_label(task, text);
    }
}

bool is_answer_line(std::string_view line) {
    std::string l = lowercase(trim(line));
    while (!l.empty() && (l.front() == '*' || l.front() == '#')) l.erase(l.begin());
    for (std::string_view prefix : {"rating", "gpt-4-rating", "perceived utility", "score"})
        if (l.rfind(prefix, 0) == 0) return true;
    return false;
}

}  // namespace

std::string parse_judge_label(CriticTask task, std::string_view text) {
    std::istringstream lines{std::string(text)};
    std::string line;
    while (std::getline(lines, line)) {
        if (!is_answer_line(line)) continue;
        const auto colon = line.find(':');
        const std::string_view value = colon == std::string::npos ? std::string_view(line)
                                                                  : std::string_view(line).substr(colon + 1);
        if (auto label = extract(task, value)) return *label;
    }
    if (auto label = extract(task, text)) return *label;
    throw DataError(std::string("no parseable ") + to_string(task) + " label in judge reply: " + std::string(text));
}

// -------------------------------------------------------------- collection

LabelStats compute_stats(CriticTask task, const std::vector<LabeledInstance>& records) {
    LabelStats stats;
    stats.task = task;
    stats.instances = records.size();
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) {
        if (r.label) {
            ++stats.labeled;
            ++counts[*r.label];
        } else {
            ++stats.failed;
        }
    }
    if (stats.labeled == 0) return stats;
    for (const auto& label : label_alphabet(task)) {
        const std::size_t n = counts[label];
        stats.labels.push_back(
            {label, n, 100.0 * static_cast<double>(n) / static_cast<double>(stats.labeled)});
    }
    return stats;
}

std::string LabelStats::to_table() const {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %-12s %-28s %s\n", "task", "#instances", "token", "percentage");
    out << buf;
    if (labels.empty()) {
        std::snprintf(buf, sizeof buf, "%-14s %-12zu %-28s %s\n", to_string(task), instances, "-", "-");
        out << buf;
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::string count = i == 0 ? std::to_string(instances) : "";
        std::snprintf(buf, sizeof buf, "%-14s %-12s %-28s %.0f%%\n", i == 0 ? to_string(task) : "", count.c_str(),
                      labels[i].label.c_str(), labels[i].percentage);
        out << buf;
    }
    out << "labeled " << labeled << ", failed " << failed << "\n";
    return out.str();
}

LabeledDataset collect_labels(const LanguageBackend& judge, CriticTask task, const std::vector<TaskInstance>& instances,
                              const CollectOptions& options) {
    if (task == CriticTask::summarization)
        throw UsageError("summarization replies are free text; there is no label to collect");
    const std::string hash = template_hash(task);
    const std::string judge_name = judge.identity();

    auto label_one = [&](const TaskInstance& inst) {
        LabeledInstance rec;
        rec.task = task;
        rec.instance = inst;
        rec.template_hash = hash;
        rec.judge = judge_name;
        GenerationRequest req;
        req.prompt = render_prompt(task, inst);
        req.max_tokens = options.max_tokens;
        req.temperature = options.temperature;
        rec.raw_judge_output = judge.generate(req).text;
        try {
            rec.label = parse_judge_label(task, rec.raw_judge_output);
        } catch (const DataError& e) {
            rec.failure = e.what();
        }
        return rec;
    };

    LabeledDataset out;
    const std::size_t width = std::max<std::size_t>(1, options.parallelism);
    for (std::size_t start = 0; start < instances.size(); start += width) {
        const std::size_t end = std::min(instances.size(), start + width);
        std::vector<std::future<LabeledInstance>> pending;
        for (std::size_t i = start; i < end; ++i)
            pending.push_back(std::async(std::launch::async, label_one, std::cref(instances[i])));
        std::optional<std::string> abort_reason;
        for (auto& f : pending) {
            try {
                auto rec = f.get();
                if (!abort_reason) out.records.push_back(std::move(rec));
            } catch (const BackendError& e) {
                if (!abort_reason) abort_reason = e.what();
            }
        }
        if (abort_reason) {
            out.stats = compute_stats(task, out.records);
            const std::string message = "label collection aborted after " + std::to_string(out.records.size()) +
                                        " records: " + *abort_reason;
            throw CollectionAborted(std::move(out), message);
        }
    }
    out.stats = compute_stats(task, out.records);
    return out;
}

// -------------------------------------------------------------------- json

json to_json_record(const LabeledInstance& rec) {
    json j{{"task", to_string(rec.task)},
           {"conversation", rec.instance.conversation},
           {"label", rec.label ? json(*rec.label) : json(nullptr)},
           {"raw_judge_output", rec.raw_judge_output},
           {"template_hash", rec.template_hash},
           {"template_version", kTemplateVersion},
           {"judge", rec.judge}};
    if (rec.instance.evidence) j["evidence"] = *rec.instance.evidence;
    if (rec.instance.response) j["response"] = *rec.instance.response;
    if (rec.instance.preceding) j["preceding"] = *rec.instance.preceding;
    if (rec.instance.source) j["source"] = *rec.instance.source;
    if (rec.failure) j["failure"] = *rec.failure;
    return j;
}

json to_json_record(const LabelStats& stats) {
    json labels = json::array();
    for (const auto& l : stats.labels)
        labels.push_back({{"token", l.label}, {"count", l.count}, {"percentage", l.percentage}});
    return json{{"task", to_string(stats.task)},
                {"instances", stats.instances},
                {"labeled", stats.labeled},
                {"failed", stats.failed},
                {"labels", labels}};
}

TaskInstance task_instance_from_json(const json& j) {
    TaskInstance inst;
    inst.conversation = j.at("conversation").get<Conversation>();
    if (j.contains("evidence") && !j["evidence"].is_null()) inst.evidence = j["evidence"].get<Passage>();
    if (j.contains("response") && !j["response"].is_null()) inst.response = j["response"].get<std::string>();
    if (j.contains("preceding") && !j["preceding"].is_null()) inst.preceding = j["preceding"].get<std::string>();
    if (j.contains("source") && !j["source"].is_null()) inst.source = j["source"].get<std::string>();
    return inst;
}

}  // namespace smrag
