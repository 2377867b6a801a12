#include "smrag/backend.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>

#include "smrag/reflection.hpp"

namespace smrag {

const char* to_string(FinishReason f) noexcept { return f == FinishReason::stop ? "stop" : "length"; }

const char* to_string(BackendFailure f) noexcept {
    switch (f) {
    case BackendFailure::unreachable: return "backend-unreachable";
    case BackendFailure::no_matching_rule: return "no-matching-rule";
    case BackendFailure::http_error: return "http-error";
    case BackendFailure::bad_response: return "bad-response";
    case BackendFailure::invalid_request: return "invalid-request";
    }
    return "?";
}

BackendError::BackendError(BackendFailure failure, const std::string& prompt_digest, const std::string& message)
    : Error(ErrorKind::backend,
            std::string(to_string(failure)) + " (prompt " + prompt_digest + "): " + message),
      failure_(failure),
      digest_(prompt_digest) {}

void validate(const GenerationRequest& req) {
    if (req.max_tokens < 1)
        throw BackendError(BackendFailure::invalid_request, content_digest(req.prompt), "max_tokens must be >= 1");
    if (!(req.temperature >= 0.0))
        throw BackendError(BackendFailure::invalid_request, content_digest(req.prompt), "temperature must be >= 0");
}

void validate(const ScoreRequest& req) {
    if (req.candidates.empty())
        throw BackendError(BackendFailure::invalid_request, content_digest(req.prompt), "no candidates to score");
    std::set<std::string> seen(req.candidates.begin(), req.candidates.end());
    if (seen.size() != req.candidates.size())
        throw BackendError(BackendFailure::invalid_request, content_digest(req.prompt), "duplicate candidates");
}

double sequence_logprob_norm(const Generation& g) {
    if (g.tokens.empty()) throw DataError("sequence probability undefined for zero tokens");
    double sum = 0.0;
    for (const auto& t : g.tokens) {
        if (t.logprob == kNoMass) return 0.0;
        sum += t.logprob;
    }
    return std::exp(sum / static_cast<double>(g.tokens.size()));
}

namespace {

void truncate_tokens(Generation& g, std::size_t cut) {
    std::vector<TokenLogprob> kept;
    std::size_t offset = 0;
    for (auto& t : g.tokens) {
        if (offset >= cut) break;
        if (offset + t.text.size() > cut) t.text.resize(cut - offset);
        offset += t.text.size();
        kept.push_back(std::move(t));
    }
    g.tokens = std::move(kept);
}

}  // namespace

Generation apply_limits(Generation g, const GenerationRequest& req) {
    std::size_t cut = std::string::npos;
    for (const auto& s : req.stop) {
        if (s.empty()) continue;
        const auto pos = g.text.find(s);
        if (pos != std::string::npos && pos < cut) cut = pos;
    }
    if (cut != std::string::npos) {
        g.text.resize(cut);
        truncate_tokens(g, cut);
        g.finish = FinishReason::stop;
    }
    if (g.tokens.size() > req.max_tokens) {
        g.tokens.resize(req.max_tokens);
        std::string text;
        for (const auto& t : g.tokens) text += t.text;
        g.text = std::move(text);
        g.finish = FinishReason::length;
    }
    return g;
}

// ---------------------------------------------------------------- mock

bool ScriptRule::matches(std::string_view prompt) const {
    if (pattern) return std::regex_search(prompt.begin(), prompt.end(), *pattern);
    return prompt.find(match) != std::string_view::npos;
}

namespace {

void check_generation(const Generation& g, const std::string& match) {
    if (g.tokens.empty()) return;
    std::string joined;
    for (const auto& t : g.tokens) {
        if (t.logprob > 0.0) throw DataError("script rule '" + match + "': token logprob > 0");
        joined += t.text;
    }
    if (joined != g.text) throw DataError("script rule '" + match + "': token texts do not concatenate to text");
}

}  // namespace

void MockScript::add(ScriptRule rule) {
    if (rule.match.rfind("re:", 0) == 0) {
        try {
            rule.pattern.emplace(rule.match.substr(3));
        } catch (const std::regex_error& e) {
            throw DataError("script rule '" + rule.match + "': bad pattern: " + e.what());
        }
    }
    if (rule.kind == RuleKind::generate) check_generation(std::get<Generation>(rule.payload), rule.match);
    rules_.push_back(std::move(rule));
}

MockScript& MockScript::on_generate(std::string match, Generation g) {
    add(ScriptRule{std::move(match), RuleKind::generate, std::move(g), std::nullopt});
    return *this;
}

MockScript& MockScript::on_generate(std::string match, std::string text, std::vector<TokenLogprob> tokens) {
    return on_generate(std::move(match), Generation{std::move(text), std::move(tokens), FinishReason::stop});
}

MockScript& MockScript::on_score(std::string match, ScoreMap scores) {
    add(ScriptRule{std::move(match), RuleKind::score, std::move(scores), std::nullopt});
    return *this;
}

MockScript MockScript::from_jsonl(std::istream& in) {
    MockScript script;
    for (const auto& rec : read_jsonl(in)) {
        const json& r = rec.value;
        try {
            ScriptRule rule;
            rule.match = r.at("match").get<std::string>();
            const auto kind = r.at("kind").get<std::string>();
            const json& payload = r.at("payload");
            if (kind == "generate") {
                rule.kind = RuleKind::generate;
                rule.payload = payload.get<Generation>();
            } else if (kind == "score") {
                rule.kind = RuleKind::score;
                ScoreMap scores;
                const json& s = payload.contains("scores") ? payload.at("scores") : payload;
                for (const auto& [cand, lp] : s.items()) scores[cand] = logprob_from_json(lp);
                rule.payload = std::move(scores);
            } else {
                throw DataError("unknown rule kind '" + kind + "'");
            }
            script.add(std::move(rule));
        } catch (const json::exception& e) {
            throw DataError("script line " + std::to_string(rec.line) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("script line " + std::to_string(rec.line) + ": " + e.what());
        }
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open script " + path.string());
    return from_jsonl(in);
}

std::string MockScript::to_jsonl() const {
    std::string out;
    for (const auto& r : rules_) {
        json rec{{"match", r.match}, {"kind", r.kind == RuleKind::generate ? "generate" : "score"}};
        if (r.kind == RuleKind::generate) {
            rec["payload"] = std::get<Generation>(r.payload);
        } else {
            json scores = json::object();
            for (const auto& [c, lp] : std::get<ScoreMap>(r.payload)) scores[c] = logprob_to_json(lp);
            rec["payload"] = json{{"scores", scores}};
        }
        out += dump_line(rec);
        out += '\n';
    }
    return out;
}

ScriptedBackend::ScriptedBackend(MockScript script, std::string name)
    : script_(std::move(script)), name_(std::move(name)) {}

const ScriptRule* ScriptedBackend::find(RuleKind kind, std::string_view prompt) const {
    for (const auto& r : script_.rules())
        if (r.kind == kind && r.matches(prompt)) return &r;
    return nullptr;
}

Generation ScriptedBackend::generate(const GenerationRequest& req) const {
    validate(req);
    ++generate_calls_;
    const auto* rule = find(RuleKind::generate, req.prompt);
    if (!rule)
        throw BackendError(BackendFailure::no_matching_rule, content_digest(req.prompt), "no generate rule matches");
    return apply_limits(std::get<Generation>(rule->payload), req);
}

ScoreMap ScriptedBackend::score_continuations(const ScoreRequest& req) const {
    validate(req);
    ++score_calls_;
    const auto* rule = find(RuleKind::score, req.prompt);
    if (!rule) throw BackendError(BackendFailure::no_matching_rule, content_digest(req.prompt), "no score rule matches");
    const auto& scripted = std::get<ScoreMap>(rule->payload);
    ScoreMap out;
    for (const auto& c : req.candidates) {
        auto it = scripted.find(c);
        out[c] = it == scripted.end() ? kNoMass : it->second;
    }
    return out;
}

// -------------------------------------------------------------- remote

RemoteBackend::RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty()) throw UsageError("remote backend requires a base URL");
    if (cfg_.max_retries < 0) throw UsageError("max_retries must be >= 0");
}

json RemoteBackend::post(const std::string& path, const json& body, const std::string& digest) const {
    httplib::Client client(cfg_.base_url);
    const auto ct = cfg_.connect_timeout.count();
    const auto rt = cfg_.read_timeout.count();
    client.set_connection_timeout(ct / 1000, (ct % 1000) * 1000);
    client.set_read_timeout(rt / 1000, (rt % 1000) * 1000);
    client.set_write_timeout(rt / 1000, (rt % 1000) * 1000);

    const std::string payload = body.dump();
    auto backoff = cfg_.initial_backoff;
    std::string last_error;
    bool last_was_transport = true;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        ++attempts_;
        auto res = client.Post(path, payload, "application/json");
        if (!res) {
            last_was_transport = true;
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 400 && res->status < 500)
            throw BackendError(BackendFailure::http_error, digest,
                               "HTTP " + std::to_string(res->status) + " from " + path + ": " + res->body);
        if (res->status >= 500) {
            last_was_transport = false;
            last_error = "HTTP " + std::to_string(res->status) + " from " + path;
            continue;
        }
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw BackendError(BackendFailure::bad_response, digest, std::string("unparseable body: ") + e.what());
        }
    }
    throw BackendError(last_was_transport ? BackendFailure::unreachable : BackendFailure::http_error, digest,
                       last_error + " after " + std::to_string(cfg_.max_retries + 1) + " attempts");
}

Generation RemoteBackend::generate(const GenerationRequest& req) const {
    validate(req);
    const auto digest = content_digest(req.prompt);
    const json reply = post("/v1/generate", req, digest);
    Generation g;
    try {
        g = reply.get<Generation>();
    } catch (const std::exception& e) {
        throw BackendError(BackendFailure::bad_response, digest, e.what());
    }
    return apply_limits(std::move(g), req);
}

ScoreMap RemoteBackend::score_continuations(const ScoreRequest& req) const {
    validate(req);
    const auto digest = content_digest(req.prompt);
    const json reply = post("/v1/score", json{{"prompt", req.prompt}, {"candidates", req.candidates}}, digest);
    ScoreMap out;
    try {
        const json& scores = reply.at("scores");
        for (const auto& c : req.candidates) {
            auto it = scores.find(c);
            out[c] = it == scores.end() ? kNoMass : logprob_from_json(*it);
        }
    } catch (const std::exception& e) {
        throw BackendError(BackendFailure::bad_response, digest, e.what());
    }
    return out;
}

// ------------------------------------------------------------------ json

json logprob_to_json(double lp) {
    if (!std::isfinite(lp)) return nullptr;
    return lp;
}

double logprob_from_json(const json& j) {
    if (j.is_null()) return kNoMass;
    return j.get<double>();
}

void to_json(json& j, const Generation& g) {
    json tokens = json::array();
    for (const auto& t : g.tokens) tokens.push_back({{"t", t.text}, {"lp", logprob_to_json(t.logprob)}});
    j = json{{"text", g.text}, {"tokens", tokens}, {"finish", to_string(g.finish)}};
}

void from_json(const json& j, Generation& g) {
    g.text = j.at("text").get<std::string>();
    g.tokens.clear();
    if (auto it = j.find("tokens"); it != j.end() && !it->is_null())
        for (const auto& t : *it) g.tokens.push_back({t.at("t").get<std::string>(), logprob_from_json(t.at("lp"))});
    const auto finish = j.value("finish", std::string("stop"));
    if (finish == "stop") g.finish = FinishReason::stop;
    else if (finish == "length") g.finish = FinishReason::length;
    else throw DataError("unknown finish reason '" + finish + "'");
}

void to_json(json& j, const GenerationRequest& r) {
    j = json{{"prompt", r.prompt}, {"max_tokens", r.max_tokens}, {"stop", r.stop}, {"temperature", r.temperature}};
}

void from_json(const json& j, GenerationRequest& r) {
    r.prompt = j.at("prompt").get<std::string>();
    r.max_tokens = j.value("max_tokens", std::size_t{256});
    r.stop = j.value("stop", std::vector<std::string>{});
    r.temperature = j.value("temperature", 0.0);
}

}  // namespace smrag
