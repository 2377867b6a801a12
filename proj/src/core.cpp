#include "smrag/core.hpp"

#include <cmath>
#include <sstream>

#include "smrag/retrieval.hpp"

namespace smrag {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::data: return "data";
    case ErrorKind::backend: return "backend";
    case ErrorKind::internal: return "internal";
    }
    return "internal";
}

const char* to_string(Role role) noexcept {
    return role == Role::user ? "user" : "assistant";
}

Role role_from_string(std::string_view s) {
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw DataError("unknown role '" + std::string(s) + "'");
}

const char* to_string(RetrieverKind kind) noexcept {
    return kind == RetrieverKind::bm25 ? "bm25" : "dense";
}

RetrieverKind retriever_kind_from_string(std::string_view s) {
    if (s == "bm25") return RetrieverKind::bm25;
    if (s == "dense") return RetrieverKind::dense;
    throw DataError("unknown retriever kind '" + std::string(s) + "'");
}

const char* to_string(ScoringMode mode) noexcept {
    return mode == ScoringMode::desirable ? "desirable" : "weighted";
}

ScoringMode scoring_mode_from_string(std::string_view s) {
    if (s == "desirable") return ScoringMode::desirable;
    if (s == "weighted") return ScoringMode::weighted;
    throw DataError("unknown scoring mode '" + std::string(s) + "'");
}

std::string Passage::indexed_text() const {
    if (title.empty()) return text;
    return title + " " + text;
}

std::string trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n\f\v";
    const auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(ws);
    return std::string(s.substr(first, last - first + 1));
}

bool ValidationResult::mentions(std::string_view fragment) const {
    for (const auto& v : violations)
        if (v.message.find(fragment) != std::string::npos) return true;
    return false;
}

std::string ValidationResult::describe() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i) out << "; ";
        if (violations[i].turn_index) out << "turn " << *violations[i].turn_index << ": ";
        out << violations[i].message;
    }
    return out.str();
}

ValidationResult validate_conversation(const Conversation& conv, const Corpus* corpus) {
    ValidationResult result;
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
        const Turn& t = conv.turns[i];
        if (i == 0 && t.role != Role::user)
            result.violations.push_back({i, "must start with user"});
        if (i > 0 && t.role == conv.turns[i - 1].role)
            result.violations.push_back({i, "roles must alternate user/assistant"});
        if (trim(t.text).empty())
            result.violations.push_back({i, "empty turn text"});
        if (corpus) {
            for (const auto& id : t.attached_passage_ids)
                if (!corpus->find(id))
                    result.violations.push_back({i, "unresolvable attached passage '" + id + "'"});
        }
    }
    return result;
}

ValidationResult validate_config(const PipelineConfig& cfg) {
    ValidationResult result;
    if (cfg.top_k < 1) result.violations.push_back({std::nullopt, "top_k >= 1"});
    if (cfg.beam_size < 1) result.violations.push_back({std::nullopt, "beam_size >= 1"});
    if (cfg.max_segments < 1) result.violations.push_back({std::nullopt, "max_segments >= 1"});
    const auto& w = cfg.weights;
    if (!std::isfinite(w.relevance) || !std::isfinite(w.groundedness) || !std::isfinite(w.utility))
        result.violations.push_back({std::nullopt, "weights finite"});
    if (cfg.evidence_window < 1) result.violations.push_back({std::nullopt, "evidence_window >= 1"});
    if (!(cfg.p_unavailable_fallback >= 0.0 && cfg.p_unavailable_fallback <= 1.0))
        result.violations.push_back({std::nullopt, "p_unavailable_fallback in [0,1]"});
    if (cfg.max_tokens < 1) result.violations.push_back({std::nullopt, "max_tokens >= 1"});
    if (cfg.summary_max_tokens < 1)
        result.violations.push_back({std::nullopt, "summary_max_tokens >= 1"});
    if (!(cfg.temperature >= 0.0) || !std::isfinite(cfg.temperature))
        result.violations.push_back({std::nullopt, "temperature >= 0"});
    return result;
}

void to_json(json& j, const Turn& t) {
    j = json{{"role", to_string(t.role)}, {"text", t.text}};
    if (!t.attached_passage_ids.empty()) j["attached_passage_ids"] = t.attached_passage_ids;
    if (t.gold_passage_ids) j["gold_passage_ids"] = *t.gold_passage_ids;
    if (t.gold_rewrite) j["gold_rewrite"] = *t.gold_rewrite;
}

void from_json(const json& j, Turn& t) {
    t = Turn{};
    t.role = role_from_string(j.at("role").get<std::string>());
    t.text = j.at("text").get<std::string>();
    if (auto it = j.find("attached_passage_ids"); it != j.end())
        t.attached_passage_ids = it->get<std::vector<std::string>>();
    if (auto it = j.find("gold_passage_ids"); it != j.end() && !it->is_null())
        t.gold_passage_ids = it->get<std::vector<std::string>>();
    if (auto it = j.find("gold_rewrite"); it != j.end() && !it->is_null())
        t.gold_rewrite = it->get<std::string>();
}

void to_json(json& j, const Conversation& c) {
    j = json{{"id", c.id}, {"turns", c.turns}};
}

void from_json(const json& j, Conversation& c) {
    c.id = j.at("id").get<std::string>();
    c.turns = j.at("turns").get<std::vector<Turn>>();
}

void to_json(json& j, const Passage& p) {
    j = json{{"id", p.id}, {"title", p.title}, {"text", p.text}};
}

void from_json(const json& j, Passage& p) {
    p.id = j.at("id").get<std::string>();
    p.title = j.value("title", std::string{});
    p.text = j.at("text").get<std::string>();
}

void to_json(json& j, const ScoringWeights& w) {
    j = json{{"w1", w.relevance}, {"w2", w.groundedness}, {"w3", w.utility}};
}

void from_json(const json& j, ScoringWeights& w) {
    if (j.is_array()) {
        if (j.size() != 3) throw DataError("weights array must have 3 entries");
        w = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
        return;
    }
    // null survives a JSON round trip of a NaN weight; keep it non-finite so
    // validation reports it.
    auto read = [&](const char* key, double fallback) {
        auto it = j.find(key);
        if (it == j.end()) return fallback;
        if (it->is_null()) return std::nan("");
        return it->get<double>();
    };
    w.relevance = read("w1", w.relevance);
    w.groundedness = read("w2", w.groundedness);
    w.utility = read("w3", w.utility);
}

void to_json(json& j, const PipelineConfig& c) {
    j = json{{"top_k", c.top_k},
             {"beam_size", c.beam_size},
             {"weights", c.weights},
             {"max_segments", c.max_segments},
             {"retriever_kind", to_string(c.retriever_kind)},
             {"scoring_mode", to_string(c.scoring_mode)},
             {"evidence_window", c.evidence_window},
             {"p_unavailable_fallback", c.p_unavailable_fallback},
             {"max_tokens", c.max_tokens},
             {"temperature", c.temperature},
             {"summary_max_tokens", c.summary_max_tokens}};
}

namespace {

std::size_t read_count(const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw DataError(key + " must be an integer");
    const auto n = v.get<long long>();
    if (n < 0) return 0;  // rejected by validate_config as "< 1"
    return static_cast<std::size_t>(n);
}

}  // namespace

void apply_config_overrides(const json& j, PipelineConfig& cfg) {
    if (!j.is_object()) throw DataError("config must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const json& v = it.value();
        try {
            if (key == "top_k") cfg.top_k = read_count(v, key);
            else if (key == "beam_size") cfg.beam_size = read_count(v, key);
            else if (key == "max_segments") cfg.max_segments = read_count(v, key);
            else if (key == "evidence_window") cfg.evidence_window = read_count(v, key);
            else if (key == "max_tokens") cfg.max_tokens = read_count(v, key);
            else if (key == "summary_max_tokens") cfg.summary_max_tokens = read_count(v, key);
            else if (key == "weights") from_json(v, cfg.weights);
            else if (key == "retriever_kind") cfg.retriever_kind = retriever_kind_from_string(v.get<std::string>());
            else if (key == "scoring_mode") cfg.scoring_mode = scoring_mode_from_string(v.get<std::string>());
            else if (key == "p_unavailable_fallback") cfg.p_unavailable_fallback = v.get<double>();
            else if (key == "temperature") cfg.temperature = v.get<double>();
            else throw DataError("unknown config key '" + key + "'");
        } catch (const json::exception& e) {
            throw DataError("config key '" + key + "': " + e.what());
        }
    }
}

}  // namespace smrag
