#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "smrag/backend.hpp"
#include "smrag/core.hpp"
#include "smrag/orchestrator.hpp"
#include "smrag/retrieval.hpp"

namespace httplib {
class Server;
}

namespace smrag {

/// Startup settings. Loaded from an optional JSON file, then overridden by
/// environment variables:
///   SMRAG_LISTEN       host:port
///   SMRAG_CORPUS       corpus JSONL
///   SMRAG_INDEX        BM25 snapshot (built from the corpus when absent)
///   SMRAG_BACKEND_URL  remote language backend
///   SMRAG_SCRIPT       scripted backend rule file
///   SMRAG_WEIGHTS      "w1,w2,w3" default scoring weights
///   SMRAG_DATA_DIR     session storage
struct ServiceSettings {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> index;
    std::optional<std::string> backend_url;
    std::optional<std::filesystem::path> script;
    std::filesystem::path data_dir = "smrag-data";
    PipelineConfig pipeline;
};

using EnvLookup = std::function<std::optional<std::string>(const char* name)>;

/// Reads the real process environment.
std::optional<std::string> process_env(const char* name);

/// Parses "host:port" (host may be omitted: ":8080").
void parse_listen(std::string_view spec, std::string& host, int& port);

/// "1,1,0.5" or a JSON weights record.
ScoringWeights parse_weights(std::string_view spec);

ServiceSettings load_service_settings(const std::optional<std::filesystem::path>& file, const EnvLookup& env);

/// Service failure mapped onto an HTTP status and a stable code.
class ServiceError : public Error {
public:
    ServiceError(int status, std::string code, const std::string& message, json detail = nullptr);

    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }
    const json& detail() const noexcept { return detail_; }
    json body() const;

private:
    int status_;
    std::string code_;
    json detail_;
};

struct Session {
    std::string id;
    Conversation conversation;
    PipelineConfig config;
    std::string config_ref;  // digest of the config record
    std::int64_t created_at = 0;
    std::int64_t updated_at = 0;
    std::vector<TurnResult> turn_results;
};

json session_json(const Session& s);

/// Shared read-only state plus the session table. Every public method is
/// safe to call concurrently; turns on one session are serialized.
class SessionService {
public:
    SessionService(const LanguageBackend& backend, const Corpus& corpus, std::shared_ptr<const Bm25Index> bm25,
                   std::filesystem::path data_dir, PipelineConfig defaults = {});
    ~SessionService();

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    /// Loads every persisted session. A trailing partial line in a turn log
    /// is ignored; any other corruption raises DataError.
    void load();

    json create_session(const json& overrides);
    json get_session(const std::string& id) const;
    json post_turn(const std::string& id, const std::string& text);
    json corpus_stats() const;

    std::optional<Session> snapshot(const std::string& id) const;
    std::vector<std::string> session_ids() const;

    /// Streams event lines for `id`, starting with the full history. Returns
    /// when `write` returns false, when `follow` is false and the history is
    /// drained, or when the service shuts down.
    void stream_events(const std::string& id, bool follow, const std::function<bool(const std::string&)>& write) const;

    /// Wakes every follower so streams can end.
    void shutdown();

    void set_clock(Clock clock) { clock_ = std::move(clock); }

private:
    struct State;

    std::shared_ptr<State> find(const std::string& id) const;
    const Retriever& retriever_for(const PipelineConfig& cfg) const;
    std::string new_id() const;

    const LanguageBackend& backend_;
    const Corpus& corpus_;
    std::shared_ptr<const Bm25Index> bm25_;
    std::unique_ptr<Bm25Retriever> bm25_retriever_;
    std::unique_ptr<DenseRetriever> dense_retriever_;
    std::filesystem::path data_dir_;
    PipelineConfig defaults_;
    Clock clock_ = system_clock_ms;

    mutable std::shared_mutex table_mutex_;
    std::map<std::string, std::shared_ptr<State>> sessions_;
    std::atomic<bool> stopping_{false};
};

/// Registers the HTTP routes of `service` on `server`.
void mount_routes(httplib::Server& server, SessionService& service);

/// Bundles the loaded corpus, index, backend and HTTP server.
class ServiceRuntime {
public:
    explicit ServiceRuntime(const ServiceSettings& settings);
    ~ServiceRuntime();

    /// Binds the listen address (port 0 picks a free port) and returns the port.
    int bind();
    /// Serves until stop(); blocks.
    void serve();
    void stop();

    SessionService& sessions() { return *service_; }

private:
    ServiceSettings settings_;
    Corpus corpus_;
    std::shared_ptr<const Bm25Index> index_;
    std::unique_ptr<LanguageBackend> backend_;
    std::unique_ptr<SessionService> service_;
    std::unique_ptr<httplib::Server> server_;
};

/// Scripted when `script` is set, remote when `backend_url` is set.
std::unique_ptr<LanguageBackend> make_backend(const std::optional<std::filesystem::path>& script,
                                              const std::optional<std::string>& backend_url);

}  // namespace smrag
