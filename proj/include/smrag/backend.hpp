#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "smrag/core.hpp"
#include "smrag/jsonl.hpp"

namespace smrag {

struct GenerationRequest {
    std::string prompt;
    std::size_t max_tokens = 256;
    std::vector<std::string> stop;
    double temperature = 0.0;
};

struct TokenLogprob {
    std::string text;
    double logprob = 0.0;

    bool operator==(const TokenLogprob&) const = default;
};

enum class FinishReason { stop, length };

const char* to_string(FinishReason f) noexcept;

struct Generation {
    std::string text;
    std::vector<TokenLogprob> tokens;  // empty when the backend exposes no logprobs
    FinishReason finish = FinishReason::stop;

    bool operator==(const Generation&) const = default;
};

struct ScoreRequest {
    std::string prompt;
    std::vector<std::string> candidates;
};

using ScoreMap = std::map<std::string, double>;

enum class BackendFailure { unreachable, no_matching_rule, http_error, bad_response, invalid_request };

const char* to_string(BackendFailure f) noexcept;

/// Backend failures carry a digest of the prompt so logs can name the
/// request without echoing it.
class BackendError : public Error {
public:
    BackendError(BackendFailure failure, const std::string& prompt_digest, const std::string& message);

    BackendFailure failure() const noexcept { return failure_; }
    const std::string& prompt_digest() const noexcept { return digest_; }

private:
    BackendFailure failure_;
    std::string digest_;
};

/// Language-model access used by the pipeline, the labeling tools and the
/// evaluators. Implementations must tolerate concurrent calls.
class LanguageBackend {
public:
    virtual ~LanguageBackend() = default;
    virtual Generation generate(const GenerationRequest& req) const = 0;
    /// One entry per candidate; unscorable candidates map to kNoMass, never omitted.
    virtual ScoreMap score_continuations(const ScoreRequest& req) const = 0;
    virtual std::string identity() const = 0;
};

void validate(const GenerationRequest& req);
void validate(const ScoreRequest& req);

/// exp(mean token logprob). Throws on zero tokens.
double sequence_logprob_norm(const Generation& g);

/// Cuts `g` at the earliest stop sequence (finish = stop) and at
/// `max_tokens` tokens (finish = length). Token texts stay consistent with
/// the text; a token straddling the cut is shortened and keeps its logprob.
Generation apply_limits(Generation g, const GenerationRequest& req);

// ---------------------------------------------------------------- mock

enum class RuleKind { generate, score };

struct ScriptRule {
    std::string match;  // substring, or a regex when prefixed with "re:"
    RuleKind kind = RuleKind::generate;
    std::variant<Generation, ScoreMap> payload;

    bool matches(std::string_view prompt) const;

    std::optional<std::regex> pattern;  // compiled form of a "re:" match
};

/// Ordered rule table; the first rule of the request's kind whose match
/// hits the prompt answers it.
class MockScript {
public:
    MockScript() = default;

    MockScript& on_generate(std::string match, Generation g);
    MockScript& on_generate(std::string match, std::string text, std::vector<TokenLogprob> tokens);
    MockScript& on_score(std::string match, ScoreMap scores);
    void add(ScriptRule rule);

    const std::vector<ScriptRule>& rules() const noexcept { return rules_; }

    /// Line-delimited {match, kind: generate|score, payload}.
    static MockScript from_jsonl(std::istream& in);
    static MockScript load(const std::filesystem::path& path);
    std::string to_jsonl() const;

private:
    std::vector<ScriptRule> rules_;
};

class ScriptedBackend final : public LanguageBackend {
public:
    explicit ScriptedBackend(MockScript script, std::string name = "scripted");

    Generation generate(const GenerationRequest& req) const override;
    ScoreMap score_continuations(const ScoreRequest& req) const override;
    std::string identity() const override { return name_; }

    std::size_t generate_calls() const noexcept { return generate_calls_.load(); }
    std::size_t score_calls() const noexcept { return score_calls_.load(); }

private:
    const ScriptRule* find(RuleKind kind, std::string_view prompt) const;

    const MockScript script_;
    std::string name_;
    mutable std::atomic<std::size_t> generate_calls_{0};
    mutable std::atomic<std::size_t> score_calls_{0};
};

// -------------------------------------------------------------- remote

struct RemoteConfig {
    std::string base_url;  // e.g. "http://127.0.0.1:8081"
    std::chrono::milliseconds connect_timeout{2000};
    std::chrono::milliseconds read_timeout{60000};
    int max_retries = 2;
    std::chrono::milliseconds initial_backoff{100};
};

/// JSON-over-HTTP client for POST /v1/generate and POST /v1/score. A 4xx is
/// terminal; 5xx and transport failures retry with exponential backoff.
class RemoteBackend final : public LanguageBackend {
public:
    explicit RemoteBackend(RemoteConfig cfg);

    Generation generate(const GenerationRequest& req) const override;
    ScoreMap score_continuations(const ScoreRequest& req) const override;
    std::string identity() const override { return "remote:" + cfg_.base_url; }

    std::size_t attempts() const noexcept { return attempts_.load(); }

private:
    json post(const std::string& path, const json& body, const std::string& digest) const;

    RemoteConfig cfg_;
    mutable std::atomic<std::size_t> attempts_{0};
};

void to_json(json& j, const Generation& g);
void from_json(const json& j, Generation& g);
void to_json(json& j, const GenerationRequest& r);
void from_json(const json& j, GenerationRequest& r);

/// Log-probabilities as JSON numbers; the no-mass sentinel travels as null.
json logprob_to_json(double lp);
double logprob_from_json(const json& j);

}  // namespace smrag
