#include "smrag/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <istream>
#include <sstream>
#include <tuple>

#include "smrag/orchestrator.hpp"
#include "smrag/prompts.hpp"
#include "smrag/reflection.hpp"

namespace smrag {

namespace {

std::string fixed(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    auto line = [&](const std::vector<std::string>& cells) {
        std::string out;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) out += " | ";
            out += c + 1 == cells.size() ? cells[c] : pad(cells[c], width[c]);
        }
        return out + "\n";
    };
    std::string out = line(header);
    std::string rule;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c) rule += "-+-";
        rule.append(width[c], '-');
    }
    out += rule + "\n";
    for (const auto& r : rows) out += line(r);
    return out;
}

}  // namespace

// ------------------------------------------------------- critic accuracy

const char* to_string(CriticVariant v) noexcept {
    switch (v) {
    case CriticVariant::with_passages: return "with_passages";
    case CriticVariant::without_passages: return "without_passages";
    case CriticVariant::not_applicable: return "n/a";
    }
    return "?";
}

CriticVariant critic_variant_from_string(std::string_view s) {
    if (s == "with_passages") return CriticVariant::with_passages;
    if (s == "without_passages") return CriticVariant::without_passages;
    if (s == "n/a" || s.empty()) return CriticVariant::not_applicable;
    throw DataError("unknown critic variant '" + std::string(s) + "'");
}

std::optional<std::string> canonical_label(CriticTask task, std::string_view label) {
    const std::string t = trim(label);
    if (in_alphabet(task, t)) return t;
    if (task == CriticTask::utility && t.size() == 1 && t[0] >= '1' && t[0] <= '5')
        return "[Utility:" + t + "]";
    if (auto tok = lookup_token(t)) {
        std::string canon(surface(*tok));
        if (in_alphabet(task, canon)) return canon;
    }
    if (task == CriticTask::retrieval2) {
        if (t == "[Retrieval]") return std::string("[Retrieve]");
        if (t == "[No Retrieval]") return std::string("[No Retrieve]");
    }
    return std::nullopt;
}

std::vector<CriticEvalRow> critic_accuracy(const std::vector<CriticPrediction>& predictions) {
    std::map<std::pair<CriticTask, CriticVariant>, CriticEvalRow> rows;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        const std::string name = "record " + std::to_string(i) + (p.id.empty() ? "" : " (" + p.id + ")");
        if (p.task == CriticTask::summarization) throw DataError(name + ": summarization has no label alphabet");
        const auto predicted = canonical_label(p.task, p.predicted);
        if (!predicted)
            throw DataError(name + ": predicted label '" + p.predicted + "' is not in the " + to_string(p.task) +
                            " alphabet");
        const auto gold = canonical_label(p.task, p.gold);
        if (!gold)
            throw DataError(name + ": gold label '" + p.gold + "' is not in the " + to_string(p.task) + " alphabet");
        auto& row = rows[{p.task, p.variant}];
        row.task = p.task;
        row.variant = p.variant;
        ++row.n;
        if (*predicted == *gold) ++row.correct;
    }
    std::vector<CriticEvalRow> out;
    for (auto& [key, row] : rows) {
        row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.n);
        out.push_back(row);
    }
    return out;
}

CriticPrediction critic_prediction_from_json(const json& j) {
    CriticPrediction p;
    p.id = j.value("id", std::string{});
    p.task = critic_task_from_string(j.at("task").get<std::string>());
    p.variant = critic_variant_from_string(j.value("variant", std::string("n/a")));
    p.predicted = j.at("predicted").get<std::string>();
    p.gold = j.at("gold").get<std::string>();
    return p;
}

namespace {

// Critic_sm on the multi-turn test split.
std::optional<double> paper_critic_accuracy(CriticTask task, CriticVariant variant) {
    switch (task) {
    case CriticTask::retrieval2:
        if (variant == CriticVariant::without_passages) return 0.83;
        if (variant == CriticVariant::with_passages) return 0.77;
        return std::nullopt;
    case CriticTask::retrieval3: return 0.63;
    case CriticTask::relevance: return 0.77;
    case CriticTask::groundedness: return 0.61;
    case CriticTask::utility: return 0.80;
    default: return std::nullopt;
    }
}

}  // namespace

std::string critic_report_table(const std::vector<CriticEvalRow>& rows) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        const auto ref = paper_critic_accuracy(r.task, r.variant);
        cells.push_back({to_string(r.task), to_string(r.variant), fixed(r.accuracy), std::to_string(r.correct),
                         std::to_string(r.n), ref ? fixed(*ref) + "*" : "-"});
    }
    std::string out = render_table({"task", "variant", "accuracy", "correct", "n", "paper"}, cells);
    out += "* paper-reported, not reproduced: Critic_sm on the multi-turn test split (needs a fine-tuned 7B critic).\n";
    return out;
}

json critic_report_json(const std::vector<CriticEvalRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        json row{{"task", to_string(r.task)},
                 {"variant", to_string(r.variant)},
                 {"accuracy", r.accuracy},
                 {"correct", r.correct},
                 {"n", r.n}};
        if (auto ref = paper_critic_accuracy(r.task, r.variant))
            row["paper_reported"] = {{"accuracy", *ref}, {"note", "paper-reported, not reproduced"}};
        arr.push_back(row);
    }
    return json{{"report", "critic-accuracy"}, {"version", kReportVersion}, {"rows", arr}};
}

// ---------------------------------------------------- retrieval report

const char* to_string(Representation r) noexcept {
    switch (r) {
    case Representation::last_turn: return "last_turn";
    case Representation::full_conversation: return "full_conversation";
    case Representation::rewrite: return "rewrite";
    case Representation::summary: return "summary";
    case Representation::gold_rewrite: return "gold_rewrite";
    }
    return "?";
}

Representation representation_from_string(std::string_view s) {
    for (auto r : all_representations())
        if (s == to_string(r)) return r;
    throw UsageError("unknown representation '" + std::string(s) + "'");
}

std::vector<Representation> all_representations() {
    return {Representation::last_turn, Representation::full_conversation, Representation::rewrite,
            Representation::summary, Representation::gold_rewrite};
}

double RetrievalReportRow::recall_at(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (ks[i] == k) return recall[i];
    throw UsageError("recall@" + std::to_string(k) + " was not evaluated");
}

std::vector<BenchmarkQuestion> benchmark_questions(const std::vector<Conversation>& benchmark,
                                                   std::size_t* missing_gold) {
    std::vector<BenchmarkQuestion> out;
    std::size_t missing = 0;
    for (const auto& conv : benchmark) {
        for (std::size_t i = 0; i < conv.turns.size(); ++i) {
            const Turn& t = conv.turns[i];
            if (t.role != Role::user) continue;
            if (!t.gold_passage_ids || t.gold_passage_ids->empty()) {
                ++missing;
                continue;
            }
            BenchmarkQuestion q;
            q.conversation_id = conv.id;
            q.turn_index = i;
            q.history.id = conv.id;
            q.history.turns.assign(conv.turns.begin(), conv.turns.begin() + static_cast<std::ptrdiff_t>(i) + 1);
            q.gold.insert(t.gold_passage_ids->begin(), t.gold_passage_ids->end());
            q.gold_rewrite = t.gold_rewrite;
            out.push_back(std::move(q));
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const BenchmarkQuestion& a, const BenchmarkQuestion& b) {
        return std::tie(a.conversation_id, a.turn_index) < std::tie(b.conversation_id, b.turn_index);
    });
    if (missing_gold) *missing_gold = missing;
    return out;
}

std::optional<std::string> representation_query(Representation rep, const BenchmarkQuestion& q,
                                                const LanguageBackend* backend) {
    switch (rep) {
    case Representation::last_turn: return q.history.turns.back().text;
    case Representation::full_conversation: {
        std::string out;
        for (const auto& t : q.history.turns) {
            if (!out.empty()) out += ' ';
            out += t.text;
        }
        return out;
    }
    case Representation::rewrite: {
        if (!backend) throw UsageError("the rewrite representation needs a backend");
        GenerationRequest req;
        req.prompt = rewrite_prompt(q.history);
        req.max_tokens = 64;
        req.stop = {"\n"};
        std::string text = trim(backend->generate(req).text);
        if (text.empty()) throw DataError("empty rewrite for " + q.conversation_id);
        return text;
    }
    case Representation::summary:
        if (!backend) throw UsageError("the summary representation needs a backend");
        return summarize_for_retrieval(q.history, *backend).combined;
    case Representation::gold_rewrite:
        return q.gold_rewrite;
    }
    return std::nullopt;
}

RetrievalReport retrieval_report(const std::vector<Conversation>& benchmark,
                                 const std::map<RetrieverKind, const Retriever*>& retrievers,
                                 const LanguageBackend* backend, const RetrievalReportOptions& options) {
    if (options.ks.empty()) throw UsageError("no cutoffs requested");
    for (auto k : options.ks)
        if (k == 0) throw UsageError("cutoff k must be >= 1");
    for (auto kind : options.retrievers)
        if (!retrievers.count(kind) || !retrievers.at(kind))
            throw UsageError(std::string("no ") + to_string(kind) + " retriever configured");

    std::size_t missing = 0;
    const auto questions = benchmark_questions(benchmark, &missing);
    const std::size_t max_k = *std::max_element(options.ks.begin(), options.ks.end());

    struct Cell {
        bool skipped = true;
        std::vector<double> recall;
        std::vector<double> hit;
    };
    const std::size_t n_reps = options.representations.size();
    const std::size_t n_ret = options.retrievers.size();

    // cells[q][rep * n_ret + ret]
    auto evaluate = [&](const BenchmarkQuestion& q) {
        std::vector<Cell> cells(n_reps * n_ret);
        for (std::size_t r = 0; r < n_reps; ++r) {
            const auto query = representation_query(options.representations[r], q, backend);
            if (!query) continue;
            for (std::size_t m = 0; m < n_ret; ++m) {
                const RankedList ranked = retrievers.at(options.retrievers[m])->retrieve(*query, max_k);
                Cell& c = cells[r * n_ret + m];
                c.skipped = false;
                for (auto k : options.ks) {
                    c.recall.push_back(recall_at_k(ranked, q.gold, k));
                    c.hit.push_back(hit_at_k(ranked, q.gold, k));
                }
            }
        }
        return cells;
    };

    std::vector<std::vector<Cell>> results(questions.size());
    const std::size_t width = std::max<std::size_t>(1, options.parallelism);
    for (std::size_t start = 0; start < questions.size(); start += width) {
        std::vector<std::future<std::vector<Cell>>> batch;
        const std::size_t end = std::min(questions.size(), start + width);
        for (std::size_t i = start; i < end; ++i)
            batch.push_back(std::async(std::launch::async, evaluate, std::cref(questions[i])));
        for (std::size_t i = start; i < end; ++i) results[i] = batch[i - start].get();
    }

    RetrievalReport report;
    if (missing) report.warnings.push_back(std::to_string(missing) + " user turn(s) without gold passages skipped");
    for (std::size_t r = 0; r < n_reps; ++r) {
        for (std::size_t m = 0; m < n_ret; ++m) {
            RetrievalReportRow row;
            row.representation = options.representations[r];
            row.retriever = options.retrievers[m];
            row.ks = options.ks;
            row.recall.assign(options.ks.size(), 0.0);
            row.hit.assign(options.ks.size(), 0.0);
            row.skipped = missing;
            for (const auto& cells : results) {
                const Cell& c = cells[r * n_ret + m];
                if (c.skipped) {
                    ++row.skipped;
                    continue;
                }
                ++row.n_questions;
                for (std::size_t i = 0; i < options.ks.size(); ++i) {
                    row.recall[i] += c.recall[i];
                    row.hit[i] += c.hit[i];
                }
            }
            if (row.n_questions) {
                for (std::size_t i = 0; i < options.ks.size(); ++i) {
                    row.recall[i] /= static_cast<double>(row.n_questions);
                    row.hit[i] /= static_cast<double>(row.n_questions);
                }
            } else {
                report.warnings.push_back(std::string("no questions evaluated for ") + to_string(row.representation) +
                                          "/" + to_string(row.retriever));
            }
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

namespace {

struct PaperRecall {
    double r5;
    double r10;
};

std::optional<PaperRecall> paper_recall(Representation rep, RetrieverKind kind) {
    const bool bm25 = kind == RetrieverKind::bm25;
    switch (rep) {
    case Representation::full_conversation: return bm25 ? PaperRecall{0.50, 0.58} : PaperRecall{0.53, 0.61};
    case Representation::gold_rewrite: return bm25 ? PaperRecall{0.50, 0.61} : PaperRecall{0.58, 0.69};
    case Representation::rewrite: return bm25 ? PaperRecall{0.45, 0.55} : PaperRecall{0.53, 0.64};
    case Representation::summary: return bm25 ? PaperRecall{0.56, 0.66} : PaperRecall{0.61, 0.71};
    default: return std::nullopt;
    }
}

}  // namespace

std::string retrieval_report_table(const RetrievalReport& report) {
    std::vector<std::string> header{"retriever", "representation"};
    const auto ks = report.rows.empty() ? std::vector<std::size_t>{} : report.rows.front().ks;
    for (auto k : ks) header.push_back("R@" + std::to_string(k));
    for (auto k : ks) header.push_back("hit@" + std::to_string(k));
    header.push_back("n");
    header.push_back("skipped");
    header.push_back("paper R@5/R@10");

    std::vector<std::vector<std::string>> cells;
    for (const auto& row : report.rows) {
        std::vector<std::string> c{to_string(row.retriever), to_string(row.representation)};
        for (double v : row.recall) c.push_back(fixed(v));
        for (double v : row.hit) c.push_back(fixed(v));
        c.push_back(std::to_string(row.n_questions));
        c.push_back(std::to_string(row.skipped));
        const auto ref = paper_recall(row.representation, row.retriever);
        c.push_back(ref ? fixed(ref->r5) + "/" + fixed(ref->r10) + "*" : "-");
        cells.push_back(std::move(c));
    }
    std::string out = render_table(header, cells);
    out += "* paper-reported, not reproduced: QReCC with the full passage collection; the dense rows used "
           "Contriever and the rewrite rows T5QR.\n";
    for (const auto& w : report.warnings) out += "warning: " + w + "\n";
    return out;
}

json retrieval_report_json(const RetrievalReport& report) {
    json rows = json::array();
    for (const auto& row : report.rows) {
        json recall = json::object();
        json hit = json::object();
        for (std::size_t i = 0; i < row.ks.size(); ++i) {
            recall[std::to_string(row.ks[i])] = row.recall[i];
            hit[std::to_string(row.ks[i])] = row.hit[i];
        }
        json j{{"representation", to_string(row.representation)},
               {"retriever", to_string(row.retriever)},
               {"recall", recall},
               {"hit", hit},
               {"n_questions", row.n_questions},
               {"skipped", row.skipped}};
        if (auto ref = paper_recall(row.representation, row.retriever))
            j["paper_reported"] = {{"r_at_5", ref->r5}, {"r_at_10", ref->r10}, {"note", "paper-reported, not reproduced"}};
        rows.push_back(std::move(j));
    }
    return json{{"report", "retrieval-effectiveness"},
                {"version", kReportVersion},
                {"rows", rows},
                {"warnings", report.warnings}};
}

// --------------------------------------------------------- run metrics

json run_log_line(const std::string& conversation_id, std::size_t turn_number, const json& turn_result) {
    return json{{"conversation_id", conversation_id}, {"turn_number", turn_number}, {"result", turn_result}};
}

RunMetrics run_metrics(const std::vector<JsonlRecord>& runlog) {
    RunMetrics m;
    for (auto c : {DecisionChoice::retrieve, DecisionChoice::no_retrieve, DecisionChoice::continue_to_use_evidence})
        m.decision_histogram[to_string(c)] = 0;

    struct Acc {
        std::size_t turns = 0;
        std::size_t retrieve = 0;
        double total = 0.0;
        double grd = 0.0;
        std::size_t grd_n = 0;
    };
    std::map<std::size_t, Acc> per_turn;
    std::size_t retrieve = 0;

    for (const auto& rec : runlog) {
        DecisionChoice choice;
        std::size_t turn_number = 0;
        const CandidateResponse* selected = nullptr;
        TurnResult result;
        try {
            const json& v = rec.value;
            turn_number = v.at("turn_number").get<std::size_t>();
            if (turn_number == 0) throw DataError("turn_number must be >= 1");
            result = v.at("result").get<TurnResult>();
            choice = result.decision.choice;
            selected = &result.selected();
        } catch (const std::exception& e) {
            throw DataError("run log line " + std::to_string(rec.line) + ": malformed record: " + e.what());
        }
        ++m.turns;
        ++m.decision_histogram[to_string(choice)];
        Acc& acc = per_turn[turn_number];
        ++acc.turns;
        if (choice == DecisionChoice::retrieve) {
            ++retrieve;
            ++acc.retrieve;
        }
        acc.total += selected->total;
        for (const auto& seg : selected->segments) {
            if (seg.score.s_grd) {
                acc.grd += *seg.score.s_grd;
                ++acc.grd_n;
            }
        }
    }
    m.retrieval_rate = m.turns ? static_cast<double>(retrieve) / static_cast<double>(m.turns) : 0.0;
    for (const auto& [number, acc] : per_turn) {
        TurnNumberStats s;
        s.turn_number = number;
        s.turns = acc.turns;
        s.retrieve = acc.retrieve;
        s.retrieval_rate = static_cast<double>(acc.retrieve) / static_cast<double>(acc.turns);
        s.mean_selected_total = acc.total / static_cast<double>(acc.turns);
        if (acc.grd_n) s.mean_pipeline_s_grd = acc.grd / static_cast<double>(acc.grd_n);
        m.per_turn.push_back(s);
    }
    return m;
}

RunMetrics run_metrics(std::istream& runlog) { return run_metrics(read_jsonl(runlog)); }

std::string run_metrics_table(const RunMetrics& m) {
    std::ostringstream out;
    out << "turns: " << m.turns << "\n";
    out << "retrieval_rate: " << fixed(m.retrieval_rate, 4) << "\n";
    for (const auto& [decision, count] : m.decision_histogram) out << "decision " << decision << ": " << count << "\n";
    std::vector<std::vector<std::string>> cells;
    for (const auto& s : m.per_turn)
        cells.push_back({std::to_string(s.turn_number), std::to_string(s.turns), std::to_string(s.retrieve),
                         fixed(s.retrieval_rate, 4), fixed(s.mean_selected_total, 4),
                         s.mean_pipeline_s_grd ? fixed(*s.mean_pipeline_s_grd, 4) : "-"});
    out << render_table({"turn", "n", "retrieve", "retrieval_rate", "mean_selected_total", "pipeline_s_grd"}, cells);
    out << "pipeline_s_grd is the pipeline's own groundedness score, not an external groundedness metric.\n";
    return out.str();
}

json run_metrics_json(const RunMetrics& m) {
    json per_turn = json::array();
    for (const auto& s : m.per_turn)
        per_turn.push_back({{"turn_number", s.turn_number},
                            {"turns", s.turns},
                            {"retrieve", s.retrieve},
                            {"retrieval_rate", s.retrieval_rate},
                            {"mean_selected_total", s.mean_selected_total},
                            {"pipeline_s_grd", s.mean_pipeline_s_grd ? json(*s.mean_pipeline_s_grd) : json(nullptr)}});
    return json{{"report", "run-metrics"},
                {"version", kReportVersion},
                {"turns", m.turns},
                {"retrieval_rate", m.retrieval_rate},
                {"decision_histogram", m.decision_histogram},
                {"per_turn", per_turn}};
}

}  // namespace smrag
