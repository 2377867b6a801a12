#include "smrag/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <future>
#include <set>

#include "smrag/datagen.hpp"
#include "smrag/prompts.hpp"

namespace smrag {

const char* to_string(DecisionChoice c) noexcept {
    switch (c) {
    case DecisionChoice::retrieve: return "Retrieve";
    case DecisionChoice::no_retrieve: return "NoRetrieve";
    case DecisionChoice::continue_to_use_evidence: return "ContinueToUseEvidence";
    }
    return "?";
}

DecisionChoice decision_choice_from_string(std::string_view s) {
    if (s == "Retrieve") return DecisionChoice::retrieve;
    if (s == "NoRetrieve") return DecisionChoice::no_retrieve;
    if (s == "ContinueToUseEvidence") return DecisionChoice::continue_to_use_evidence;
    throw DataError("unknown decision '" + std::string(s) + "'");
}

std::string CandidateResponse::text() const {
    std::string out;
    for (const auto& s : segments) out += s.text;
    return trim(out);
}

std::int64_t system_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// -------------------------------------------------------------- decision

RetrievalDecision decide_retrieval(const Conversation& history, std::span<const Passage> prior,
                                   const LanguageBackend& backend) {
    if (history.turns.empty() || history.turns.back().role != Role::user)
        throw DataError("retrieval decision needs a conversation ending with a user turn");
    ScoreRequest req{decision_prompt(history, prior), group_surfaces(TokenGroup::retrieval3)};
    const ScoreMap raw = backend.score_continuations(req);

    std::map<ReflectionToken, double> keyed;
    for (auto tok : group_tokens(TokenGroup::retrieval3)) {
        auto it = raw.find(std::string(surface(tok)));
        keyed[tok] = it == raw.end() ? kNoMass : it->second;
    }
    if (prior.empty()) keyed[ReflectionToken::continue_to_use_evidence] = kNoMass;

    RetrievalDecision d;
    d.scores = normalize_group(keyed, TokenGroup::retrieval3);
    const double p_ret = d.scores.prob(ReflectionToken::retrieve);
    const double p_cont = d.scores.prob(ReflectionToken::continue_to_use_evidence);
    const double p_none = d.scores.prob(ReflectionToken::no_retrieve);
    if (p_ret >= p_cont && p_ret >= p_none) d.choice = DecisionChoice::retrieve;
    else if (p_cont >= p_none) d.choice = DecisionChoice::continue_to_use_evidence;
    else d.choice = DecisionChoice::no_retrieve;
    return d;
}

// ----------------------------------------------------------- summarizing

RetrievalQuery parse_summary(std::string_view reply) {
    constexpr std::string_view kSummary = "Summary:";
    constexpr std::string_view kQuestion = "Question:";
    const std::string text = trim(reply);
    const auto s = text.find(kSummary);
    const auto q = text.find(kQuestion, s == std::string::npos ? 0 : s);

    RetrievalQuery out;
    if (s == std::string::npos && q == std::string::npos) {
        out.combined = text;
        out.structured = false;
        return out;
    }
    if (s != std::string::npos) {
        const auto start = s + kSummary.size();
        out.summary = trim(std::string_view(text).substr(start, q == std::string::npos ? std::string::npos : q - start));
    } else {
        out.summary = trim(std::string_view(text).substr(0, q));
    }
    if (q != std::string::npos) {
        auto rest = std::string_view(text).substr(q + kQuestion.size());
        rest = rest.substr(0, rest.find('\n'));
        out.question = trim(rest);
    }
    if (out.summary.empty()) out.combined = out.question;
    else if (out.question.empty()) out.combined = out.summary;
    else out.combined = out.summary + " " + out.question;
    return out;
}

RetrievalQuery summarize_for_retrieval(const Conversation& history, const LanguageBackend& backend,
                                       std::size_t max_tokens) {
    GenerationRequest req;
    req.prompt = render_prompt(CriticTask::summarization, TaskInstance{history, {}, {}, {}, {}});
    req.max_tokens = max_tokens;
    req.stop = {"\nConveration History", "\nConversation History"};
    const Generation g = backend.generate(req);
    RetrievalQuery q = parse_summary(g.text);
    if (q.combined.empty()) throw DataError("empty query from summarizer");
    return q;
}

// ---------------------------------------------------------- prior evidence

std::vector<Passage> prior_passages(const Conversation& conv, const Corpus& corpus, const PipelineConfig& cfg) {
    std::vector<Passage> out;
    std::set<std::string> seen;
    std::size_t assistants = 0;
    for (auto it = conv.turns.rbegin(); it != conv.turns.rend(); ++it) {
        if (it->role == Role::assistant) {
            if (assistants == cfg.evidence_window) break;
            ++assistants;
        }
        for (const auto& id : it->attached_passage_ids) {
            if (!seen.insert(id).second) continue;
            const Passage* p = corpus.find(id);
            if (!p) throw DataError("attached passage '" + id + "' is not in the corpus");
            out.push_back(*p);
            if (out.size() == cfg.top_k) return out;
        }
    }
    return out;
}

// ------------------------------------------------------------ candidates

namespace {

double score_group(const LanguageBackend& backend, const std::string& prompt, TokenGroup group, ScoringMode mode) {
    const ScoreMap raw = backend.score_continuations(ScoreRequest{prompt, group_surfaces(group)});
    return group_score(normalize_group(raw, group), mode);
}

CandidateResponse generate_one(const Conversation& history, const Passage* passage, const PipelineConfig& cfg,
                               const LanguageBackend& backend) {
    CandidateResponse cand;
    if (passage) cand.passage = *passage;

    GenerationRequest req;
    req.prompt = generation_prompt(history, passage);
    req.max_tokens = cfg.max_tokens;
    req.temperature = cfg.temperature;
    const Generation g = backend.generate(req);

    const AnnotatedOutput parsed = parse_annotated(g.text);

    // Assign each generated token to the segment holding its first byte.
    std::vector<std::vector<double>> seg_logprobs(parsed.segments.size());
    std::size_t offset = 0;
    std::size_t seg = 0;
    for (const auto& tok : g.tokens) {
        while (seg + 1 < parsed.segments.size() && offset >= parsed.segments[seg + 1].begin) ++seg;
        if (!parsed.segments.empty()) seg_logprobs[seg].push_back(tok.logprob);
        offset += tok.text.size();
    }

    std::optional<double> s_rel;
    if (passage) s_rel = score_group(backend, relevance_prompt(history, *passage), TokenGroup::relevance, cfg.scoring_mode);

    std::string so_far;
    for (std::size_t i = 0; i < parsed.segments.size() && cand.segments.size() < cfg.max_segments; ++i) {
        const auto& segment = parsed.segments[i];
        if (trim(segment.text).empty()) continue;

        double p_norm = cfg.p_unavailable_fallback;
        bool p_unavailable = true;
        if (!seg_logprobs[i].empty()) {
            Generation part;
            for (double lp : seg_logprobs[i]) part.tokens.push_back({"", lp});
            p_norm = sequence_logprob_norm(part);
            p_unavailable = false;
        }

        std::optional<double> s_grd;
        if (passage)
            s_grd = score_group(backend, groundedness_prompt(history, *passage, so_far, segment.text),
                                TokenGroup::groundedness, cfg.scoring_mode);
        const std::string with_segment = so_far + segment.text;
        const double s_utl =
            score_group(backend, utility_prompt(history, passage, with_segment), TokenGroup::utility, cfg.scoring_mode);

        ScoredSegment scored{segment.text, make_candidate_score(p_norm, s_rel, s_grd, s_utl, cfg.weights)};
        scored.score.p_unavailable = p_unavailable;
        cand.total += scored.score.composite;
        cand.segments.push_back(std::move(scored));
        so_far = with_segment;
    }
    if (cand.segments.empty()) throw DataError("generator returned no response text");
    return cand;
}

}  // namespace

std::vector<CandidateResponse> generate_candidates(const Conversation& history, const std::vector<Passage>& passages,
                                                   const PipelineConfig& cfg, const LanguageBackend& backend) {
    std::vector<const Passage*> slots;
    if (passages.empty()) slots.push_back(nullptr);
    for (const auto& p : passages) slots.push_back(&p);

    std::vector<std::future<CandidateResponse>> pending;
    pending.reserve(slots.size());
    for (const Passage* p : slots)
        pending.push_back(std::async(std::launch::async, generate_one, std::cref(history), p, std::cref(cfg),
                                     std::cref(backend)));

    std::vector<CandidateResponse> out;
    std::exception_ptr first_error;
    for (std::size_t i = 0; i < pending.size(); ++i) {
        try {
            out.push_back(pending[i].get());
        } catch (const Error& e) {
            CandidateResponse failed;
            if (slots[i]) failed.passage = *slots[i];
            failed.failed = true;
            failed.error = e.what();
            if (!first_error) first_error = std::current_exception();
            out.push_back(std::move(failed));
        }
    }
    if (std::all_of(out.begin(), out.end(), [](const CandidateResponse& c) { return c.failed; }))
        std::rethrow_exception(first_error);
    return out;
}

// ------------------------------------------------------------------ beam

namespace {

bool path_better(const BeamPath& a, const BeamPath& b) {
    if (a.total != b.total) return a.total > b.total;
    return a.choices < b.choices;
}

}  // namespace

BeamPath beam_search(const Expander& expand, std::size_t beam_size, std::size_t max_steps) {
    if (beam_size == 0) throw UsageError("beam size must be >= 1");
    std::vector<BeamPath> live{BeamPath{}};
    std::vector<BeamPath> finished;
    for (std::size_t step = 0; step < max_steps && !live.empty(); ++step) {
        std::vector<BeamPath> children;
        for (const auto& path : live) {
            const auto options = expand(path.choices);
            if (options.empty()) {
                if (!path.choices.empty()) finished.push_back(path);
                continue;
            }
            for (std::size_t i = 0; i < options.size(); ++i) {
                BeamPath child = path;
                child.choices.push_back(i);
                child.total += options[i];
                children.push_back(std::move(child));
            }
        }
        std::sort(children.begin(), children.end(), path_better);
        if (children.size() > beam_size) children.resize(beam_size);
        live = std::move(children);
    }
    for (auto& path : live)
        if (!path.choices.empty()) finished.push_back(std::move(path));
    if (finished.empty()) return {};
    return *std::min_element(finished.begin(), finished.end(), path_better);
}

std::size_t beam_select(const std::vector<CandidateResponse>& candidates, std::size_t beam_size,
                        const ScoringWeights& weights) {
    std::vector<std::size_t> viable;
    std::size_t longest = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].failed || candidates[i].segments.empty()) continue;
        viable.push_back(i);
        longest = std::max(longest, candidates[i].segments.size());
    }
    if (viable.empty()) throw Error(ErrorKind::internal, "no viable candidate to select");

    const Expander expand = [&](std::span<const std::size_t> prefix) -> std::vector<double> {
        if (prefix.empty()) {
            std::vector<double> first;
            for (auto c : viable) first.push_back(candidates[c].segments.front().score.recompute(weights));
            return first;
        }
        const auto& segs = candidates[viable[prefix.front()]].segments;
        if (prefix.size() >= segs.size()) return {};
        return {segs[prefix.size()].score.recompute(weights)};
    };
    const BeamPath best = beam_search(expand, beam_size, longest);
    return viable[best.choices.front()];
}

// -------------------------------------------------------------- pipeline

Pipeline::Pipeline(const LanguageBackend& backend, const Retriever& retriever, const Corpus& corpus,
                   PipelineConfig cfg)
    : backend_(backend), retriever_(retriever), corpus_(corpus), cfg_(std::move(cfg)) {
    const auto v = validate_config(cfg_);
    if (!v.ok()) throw DataError("invalid pipeline config: " + v.describe());
}

namespace {

json candidate_payload(std::size_t index, const CandidateResponse& c) {
    json j = c;
    j["index"] = index;
    return j;
}

}  // namespace

TurnResult Pipeline::run_turn(Conversation& conv, std::string_view message, const EventSink& sink) const {
    if (trim(message).empty()) throw DataError("empty turn text");

    Conversation working = conv;
    working.turns.push_back(Turn{Role::user, std::string(message), {}, std::nullopt, std::nullopt});
    const auto check = validate_conversation(working);
    if (!check.ok()) throw DataError("conversation invalid: " + check.describe());
    const std::size_t turn_index = working.turns.size() - 1;

    TurnResult result;
    result.user_text = std::string(message);
    auto emit = [&](std::string kind, json payload) {
        Event e{turn_index, result.events.size(), std::move(kind), clock_(), std::move(payload)};
        result.events.push_back(e);
        if (sink) sink(e);
    };

    const std::vector<Passage> prior = prior_passages(working, corpus_, cfg_);
    result.decision = decide_retrieval(working, prior, backend_);
    emit("decision", result.decision);

    std::vector<Passage> passages;
    switch (result.decision.choice) {
    case DecisionChoice::retrieve: {
        result.query = summarize_for_retrieval(working, backend_, cfg_.summary_max_tokens);
        emit("query", *result.query);
        ++retriever_calls_;
        result.retriever_calls = 1;
        result.retrieved = retriever_.retrieve(result.query->combined, cfg_.top_k);
        emit("retrieved", result.retrieved);
        for (const auto& e : result.retrieved.entries) {
            const Passage* p = corpus_.find(e.id);
            if (!p) throw DataError("retriever returned unknown passage '" + e.id + "'");
            passages.push_back(*p);
        }
        break;
    }
    case DecisionChoice::continue_to_use_evidence:
        passages = prior;
        break;
    case DecisionChoice::no_retrieve:
        break;
    }

    result.candidates = generate_candidates(working, passages, cfg_, backend_);
    for (std::size_t i = 0; i < result.candidates.size(); ++i) emit("candidate", candidate_payload(i, result.candidates[i]));

    result.selected_index = beam_select(result.candidates, cfg_.beam_size, cfg_.weights);
    const CandidateResponse& chosen = result.selected();
    emit("selected", json{{"index", result.selected_index},
                          {"text", chosen.text()},
                          {"passage_id", chosen.passage ? json(chosen.passage->id) : json(nullptr)},
                          {"total", chosen.total}});

    Turn reply{Role::assistant, chosen.text(), {}, std::nullopt, std::nullopt};
    if (chosen.passage) reply.attached_passage_ids.push_back(chosen.passage->id);
    working.turns.push_back(std::move(reply));
    conv = std::move(working);
    return result;
}

// ------------------------------------------------------------------ json

void to_json(json& j, const RetrievalDecision& d) {
    j = json{{"choice", to_string(d.choice)}, {"scores", d.scores}};
}

void from_json(const json& j, RetrievalDecision& d) {
    d.choice = decision_choice_from_string(j.at("choice").get<std::string>());
    d.scores = j.at("scores").get<GroupScores>();
}

void to_json(json& j, const RetrievalQuery& q) {
    j = json{{"summary", q.summary}, {"question", q.question}, {"combined", q.combined}, {"structured", q.structured}};
}

void from_json(const json& j, RetrievalQuery& q) {
    q.summary = j.at("summary").get<std::string>();
    q.question = j.at("question").get<std::string>();
    q.combined = j.at("combined").get<std::string>();
    q.structured = j.value("structured", true);
}

void to_json(json& j, const CandidateResponse& c) {
    json segments = json::array();
    for (const auto& s : c.segments) segments.push_back({{"text", s.text}, {"score", s.score}});
    j = json{{"passage", c.passage ? json(*c.passage) : json(nullptr)},
             {"segments", segments},
             {"total", c.total},
             {"failed", c.failed},
             {"error", c.error}};
}

void from_json(const json& j, CandidateResponse& c) {
    c = CandidateResponse{};
    if (!j.at("passage").is_null()) c.passage = j.at("passage").get<Passage>();
    for (const auto& s : j.at("segments"))
        c.segments.push_back({s.at("text").get<std::string>(), s.at("score").get<CandidateScore>()});
    c.total = j.at("total").get<double>();
    c.failed = j.value("failed", false);
    c.error = j.value("error", std::string{});
}

void to_json(json& j, const Event& e) {
    j = json{{"turn", e.turn}, {"seq", e.seq}, {"kind", e.kind}, {"ts", e.ts_ms}, {"payload", e.payload}};
}

void from_json(const json& j, Event& e) {
    e.turn = j.at("turn").get<std::size_t>();
    e.seq = j.at("seq").get<std::size_t>();
    e.kind = j.at("kind").get<std::string>();
    e.ts_ms = j.at("ts").get<std::int64_t>();
    e.payload = j.at("payload");
}

void to_json(json& j, const TurnResult& r) {
    j = json{{"user_text", r.user_text},
             {"decision", r.decision},
             {"query", r.query ? json(*r.query) : json(nullptr)},
             {"retrieved", r.retrieved},
             {"candidates", r.candidates},
             {"selected_index", r.selected_index},
             {"selected_text", r.candidates.empty() ? std::string{} : r.selected().text()},
             {"retriever_calls", r.retriever_calls},
             {"events", r.events}};
}

void from_json(const json& j, TurnResult& r) {
    r = TurnResult{};
    r.user_text = j.at("user_text").get<std::string>();
    r.decision = j.at("decision").get<RetrievalDecision>();
    if (!j.at("query").is_null()) r.query = j.at("query").get<RetrievalQuery>();
    r.retrieved = j.at("retrieved").get<RankedList>();
    r.candidates = j.at("candidates").get<std::vector<CandidateResponse>>();
    r.selected_index = j.at("selected_index").get<std::size_t>();
    r.retriever_calls = j.at("retriever_calls").get<std::size_t>();
    r.events = j.at("events").get<std::vector<Event>>();
    if (r.selected_index >= r.candidates.size()) throw DataError("selected_index out of range");
}

}  // namespace smrag
