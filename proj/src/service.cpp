#include "smrag/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <random>
#include <sstream>

#include <httplib.h>

#include "smrag/jsonl.hpp"
#include "smrag/reflection.hpp"

namespace smrag {

namespace fs = std::filesystem;

// -------------------------------------------------------------- settings

std::optional<std::string> process_env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

void parse_listen(std::string_view spec, std::string& host, int& port) {
    const auto colon = spec.rfind(':');
    if (colon == std::string_view::npos) throw UsageError("listen address must be host:port, got '" + std::string(spec) + "'");
    const std::string h(spec.substr(0, colon));
    const std::string p(spec.substr(colon + 1));
    char* end = nullptr;
    const long value = std::strtol(p.c_str(), &end, 10);
    if (p.empty() || *end != '\0' || value < 0 || value > 65535)
        throw UsageError("invalid port in listen address '" + std::string(spec) + "'");
    if (!h.empty()) host = h;
    port = static_cast<int>(value);
}

ScoringWeights parse_weights(std::string_view spec) {
    const std::string s = trim(spec);
    ScoringWeights w;
    if (!s.empty() && (s.front() == '{' || s.front() == '[')) {
        try {
            from_json(json::parse(s), w);
        } catch (const json::exception& e) {
            throw UsageError("invalid weights '" + s + "': " + e.what());
        }
        return w;
    }
    std::vector<double> values;
    std::stringstream in(s);
    std::string part;
    while (std::getline(in, part, ',')) {
        const std::string t = trim(part);
        char* end = nullptr;
        const double v = std::strtod(t.c_str(), &end);
        if (t.empty() || *end != '\0') throw UsageError("invalid weights '" + s + "'");
        values.push_back(v);
    }
    if (values.size() != 3) throw UsageError("weights need three values w1,w2,w3, got '" + s + "'");
    return {values[0], values[1], values[2]};
}

ServiceSettings load_service_settings(const std::optional<fs::path>& file, const EnvLookup& env) {
    ServiceSettings s;
    if (file) {
        json j;
        try {
            j = json::parse(read_file(*file));
        } catch (const json::exception& e) {
            throw DataError("settings file " + file->string() + ": " + e.what());
        }
        if (!j.is_object()) throw DataError("settings file " + file->string() + " must hold an object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            const json& v = it.value();
            if (key == "listen") parse_listen(v.get<std::string>(), s.host, s.port);
            else if (key == "corpus") s.corpus = v.get<std::string>();
            else if (key == "index") s.index = v.get<std::string>();
            else if (key == "backend_url") s.backend_url = v.get<std::string>();
            else if (key == "script") s.script = v.get<std::string>();
            else if (key == "data_dir") s.data_dir = v.get<std::string>();
            else if (key == "pipeline") apply_config_overrides(v, s.pipeline);
            else throw DataError("settings file " + file->string() + ": unknown key '" + key + "'");
        }
    }
    if (auto v = env("SMRAG_LISTEN")) parse_listen(*v, s.host, s.port);
    if (auto v = env("SMRAG_CORPUS")) s.corpus = *v;
    if (auto v = env("SMRAG_INDEX")) s.index = *v;
    if (auto v = env("SMRAG_BACKEND_URL")) s.backend_url = *v;
    if (auto v = env("SMRAG_SCRIPT")) s.script = *v;
    if (auto v = env("SMRAG_WEIGHTS")) s.pipeline.weights = parse_weights(*v);
    if (auto v = env("SMRAG_DATA_DIR")) s.data_dir = *v;
    return s;
}

// ---------------------------------------------------------------- errors

ServiceError::ServiceError(int status, std::string code, const std::string& message, json detail)
    : Error(status >= 500 ? ErrorKind::internal : ErrorKind::data, message),
      status_(status),
      code_(std::move(code)),
      detail_(std::move(detail)) {}

json ServiceError::body() const { return json{{"code", code_}, {"message", what()}, {"detail", detail_}}; }

// --------------------------------------------------------------- session

json session_json(const Session& s) {
    return json{{"id", s.id},
                {"config", s.config},
                {"config_ref", s.config_ref},
                {"created_at", s.created_at},
                {"updated_at", s.updated_at},
                {"conversation", s.conversation},
                {"turn_results", s.turn_results}};
}

struct SessionService::State {
    std::mutex turn_mutex;  // held for the whole of a turn
    mutable std::mutex mutex;
    mutable std::condition_variable changed;
    Session session;
    std::vector<std::string> event_lines;
    fs::path dir;
    std::size_t pending_events = 0;  // live events of the turn in flight
};

namespace {

constexpr int kSessionFormatVersion = 1;

fs::path manifest_path(const fs::path& dir) { return dir / "manifest.json"; }
fs::path turns_path(const fs::path& dir) { return dir / "turns.jsonl"; }

// Appends one complete line with a single write and syncs it. On a short
// write the file is cut back so no partial record stays behind.
void append_line(const fs::path& path, const std::string& line) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (fd < 0) throw Error(ErrorKind::internal, "cannot open " + path.string() + ": " + std::strerror(errno));
    const off_t before = ::lseek(fd, 0, SEEK_END);
    const std::string data = line + "\n";
    std::size_t done = 0;
    bool ok = true;
    while (done < data.size()) {
        const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            ok = false;
            break;
        }
        done += static_cast<std::size_t>(n);
    }
    if (ok && ::fsync(fd) != 0) ok = false;
    if (!ok) {
        const std::string reason = std::strerror(errno);
        if (before >= 0 && ::ftruncate(fd, before) != 0) {
            // Nothing more to do; the reload path ignores a trailing partial line.
        }
        ::close(fd);
        throw Error(ErrorKind::internal, "cannot append to " + path.string() + ": " + reason);
    }
    ::close(fd);
}

std::string event_line(const Event& e) { return dump_line(json(e)); }

}  // namespace

SessionService::SessionService(const LanguageBackend& backend, const Corpus& corpus,
                               std::shared_ptr<const Bm25Index> bm25, fs::path data_dir, PipelineConfig defaults)
    : backend_(backend),
      corpus_(corpus),
      bm25_(std::move(bm25)),
      data_dir_(std::move(data_dir)),
      defaults_(std::move(defaults)) {
    const auto v = validate_config(defaults_);
    if (!v.ok()) throw DataError("invalid default pipeline config: " + v.describe());
    if (!bm25_) bm25_ = std::make_shared<const Bm25Index>(Bm25Index::build(corpus_));
    bm25_retriever_ = std::make_unique<Bm25Retriever>(bm25_);
    dense_retriever_ = std::make_unique<DenseRetriever>(
        std::make_shared<const DenseIndex>(std::make_shared<const HashingEmbedder>(), corpus_));
    fs::create_directories(data_dir_ / "sessions");
}

SessionService::~SessionService() { shutdown(); }

void SessionService::load() {
    std::map<std::string, std::shared_ptr<State>> loaded;
    for (const auto& entry : fs::directory_iterator(data_dir_ / "sessions")) {
        if (!entry.is_directory()) continue;
        const fs::path dir = entry.path();
        if (!fs::exists(manifest_path(dir))) continue;  // creation never finished

        auto st = std::make_shared<State>();
        st->dir = dir;
        Session& s = st->session;
        try {
            const json m = json::parse(read_file(manifest_path(dir)));
            if (m.at("version").get<int>() != kSessionFormatVersion)
                throw DataError("unsupported session format version");
            s.id = m.at("id").get<std::string>();
            s.config = PipelineConfig{};
            apply_config_overrides(m.at("config"), s.config);
            s.config_ref = m.at("config_ref").get<std::string>();
            s.created_at = m.at("created_at").get<std::int64_t>();
            s.updated_at = s.created_at;
            s.conversation.id = s.id;
        } catch (const std::exception& e) {
            throw DataError("session manifest " + manifest_path(dir).string() + ": " + e.what());
        }

        if (fs::exists(turns_path(dir))) {
            const std::string content = read_file(turns_path(dir));
            std::size_t pos = 0;
            std::size_t line_no = 0;
            while (pos < content.size()) {
                const auto nl = content.find('\n', pos);
                if (nl == std::string::npos) break;  // trailing partial record from an interrupted append
                ++line_no;
                const std::string_view line(content.data() + pos, nl - pos);
                pos = nl + 1;
                if (trim(line).empty()) continue;
                try {
                    const json rec = json::parse(line);
                    s.conversation.turns.push_back(rec.at("user").get<Turn>());
                    s.conversation.turns.push_back(rec.at("assistant").get<Turn>());
                    s.turn_results.push_back(rec.at("result").get<TurnResult>());
                    s.updated_at = rec.at("ts").get<std::int64_t>();
                } catch (const std::exception& e) {
                    throw DataError(turns_path(dir).string() + " line " + std::to_string(line_no) + ": " + e.what());
                }
            }
        }
        for (const auto& r : s.turn_results)
            for (const auto& e : r.events) st->event_lines.push_back(event_line(e));
        loaded.emplace(s.id, std::move(st));
    }
    std::unique_lock lock(table_mutex_);
    sessions_ = std::move(loaded);
}

std::string SessionService::new_id() const {
    static std::mutex rng_mutex;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(rng_mutex);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s-%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

std::shared_ptr<SessionService::State> SessionService::find(const std::string& id) const {
    std::shared_lock lock(table_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "not_found", "unknown session '" + id + "'");
    return it->second;
}

const Retriever& SessionService::retriever_for(const PipelineConfig& cfg) const {
    if (cfg.retriever_kind == RetrieverKind::dense) return *dense_retriever_;
    return *bm25_retriever_;
}

json SessionService::create_session(const json& overrides) {
    PipelineConfig cfg = defaults_;
    try {
        apply_config_overrides(overrides.is_null() ? json::object() : overrides, cfg);
    } catch (const Error& e) {
        throw ServiceError(400, "bad_request", e.what());
    }
    const auto v = validate_config(cfg);
    if (!v.ok()) {
        json detail = json::array();
        for (const auto& viol : v.violations) detail.push_back(viol.message);
        throw ServiceError(422, "validation_failed", "invalid pipeline config", detail);
    }

    auto st = std::make_shared<State>();
    Session& s = st->session;
    s.config = cfg;
    s.config_ref = content_digest(dump_line(json(cfg)));
    s.created_at = s.updated_at = clock_();

    std::unique_lock lock(table_mutex_);
    do {
        s.id = new_id();
    } while (sessions_.count(s.id) || fs::exists(data_dir_ / "sessions" / s.id));
    s.conversation.id = s.id;
    st->dir = data_dir_ / "sessions" / s.id;
    fs::create_directories(st->dir);
    write_file_atomic(manifest_path(st->dir), dump_line(json{{"version", kSessionFormatVersion},
                                                             {"id", s.id},
                                                             {"config", cfg},
                                                             {"config_ref", s.config_ref},
                                                             {"created_at", s.created_at}}) +
                                                  "\n");
    sessions_.emplace(s.id, st);
    return session_json(s);
}

json SessionService::get_session(const std::string& id) const {
    auto st = find(id);
    std::lock_guard lock(st->mutex);
    return session_json(st->session);
}

std::optional<Session> SessionService::snapshot(const std::string& id) const {
    std::shared_ptr<State> st;
    try {
        st = find(id);
    } catch (const ServiceError&) {
        return std::nullopt;
    }
    std::lock_guard lock(st->mutex);
    return st->session;
}

std::vector<std::string> SessionService::session_ids() const {
    std::shared_lock lock(table_mutex_);
    std::vector<std::string> out;
    for (const auto& [id, st] : sessions_) out.push_back(id);
    return out;
}

json SessionService::post_turn(const std::string& id, const std::string& text) {
    auto st = find(id);
    if (trim(text).empty()) throw ServiceError(422, "validation_failed", "empty turn text");

    std::unique_lock turn(st->turn_mutex, std::try_to_lock);
    if (!turn.owns_lock()) throw ServiceError(409, "turn_in_progress", "session '" + id + "' is already running a turn");

    Conversation conv;
    PipelineConfig cfg;
    {
        std::lock_guard lock(st->mutex);
        conv = st->session.conversation;
        cfg = st->session.config;
        st->pending_events = 0;
    }
    const std::size_t turn_index = conv.turns.size();

    auto publish = [&](const std::string& line, bool live) {
        std::lock_guard lock(st->mutex);
        st->event_lines.push_back(line);
        if (live) ++st->pending_events;
        st->changed.notify_all();
    };
    auto abort_turn = [&](const std::string& message) {
        std::size_t seq;
        {
            std::lock_guard lock(st->mutex);
            seq = st->pending_events;
        }
        Event e{turn_index, seq, "aborted", clock_(), json{{"message", message}}};
        publish(event_line(e), false);
    };

    Pipeline pipeline(backend_, retriever_for(cfg), corpus_, cfg);
    pipeline.set_clock(clock_);
    TurnResult result;
    try {
        result = pipeline.run_turn(conv, text, [&](const Event& e) { publish(event_line(e), true); });
    } catch (const BackendError& e) {
        abort_turn(e.what());
        throw ServiceError(502, "backend_error", e.what(), json{{"failure", to_string(e.failure())}});
    } catch (const std::exception& e) {
        abort_turn(e.what());
        throw ServiceError(500, "pipeline_failed", e.what());
    }

    const std::int64_t ts = clock_();
    const json result_json = result;
    const json record{{"user", conv.turns[turn_index]},
                      {"assistant", conv.turns[turn_index + 1]},
                      {"result", result_json},
                      {"ts", ts}};
    try {
        append_line(turns_path(st->dir), dump_line(record));
    } catch (const std::exception& e) {
        abort_turn(e.what());
        throw ServiceError(500, "persistence_failed", e.what());
    }

    std::lock_guard lock(st->mutex);
    st->session.conversation = std::move(conv);
    st->session.turn_results.push_back(std::move(result));
    st->session.updated_at = ts;
    return result_json;
}

json SessionService::corpus_stats() const {
    return json{{"passages", corpus_.size()},
                {"vocabulary_size", bm25_->vocabulary_size()},
                {"avg_doc_length", bm25_->avg_doc_length()},
                {"bm25", {{"k1", bm25_->params().k1}, {"b", bm25_->params().b}}},
                {"backend", backend_.identity()},
                {"token_table_version", kTokenTableVersion},
                {"defaults", defaults_}};
}

void SessionService::stream_events(const std::string& id, bool follow,
                                   const std::function<bool(const std::string&)>& write) const {
    auto st = find(id);
    std::size_t cursor = 0;
    std::unique_lock lock(st->mutex);
    for (;;) {
        while (cursor < st->event_lines.size()) {
            const std::string line = st->event_lines[cursor++];
            lock.unlock();
            const bool ok = write(line + "\n");
            lock.lock();
            if (!ok) return;
        }
        if (!follow || stopping_.load()) return;
        st->changed.wait_for(lock, std::chrono::milliseconds(200));
        if (stopping_.load() && cursor >= st->event_lines.size()) return;
        if (cursor >= st->event_lines.size()) {
            // Idle: probe the connection so abandoned streams end.
            lock.unlock();
            const bool alive = write("");
            lock.lock();
            if (!alive) return;
        }
    }
}

void SessionService::shutdown() {
    stopping_.store(true);
    std::shared_lock lock(table_mutex_);
    for (const auto& [id, st] : sessions_) {
        std::lock_guard l(st->mutex);
        st->changed.notify_all();
    }
}

// ------------------------------------------------------------------ http

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
}

void send_error(httplib::Response& res, const ServiceError& e) { send_json(res, e.status(), e.body()); }

template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const ServiceError& e) {
        send_error(res, e);
    } catch (const UsageError& e) {
        send_error(res, ServiceError(400, "bad_request", e.what()));
    } catch (const DataError& e) {
        send_error(res, ServiceError(422, "validation_failed", e.what()));
    } catch (const std::exception& e) {
        send_error(res, ServiceError(500, "internal", e.what()));
    }
}

json parse_body(const httplib::Request& req) {
    if (trim(req.body).empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw ServiceError(400, "bad_request", std::string("request body is not valid JSON: ") + e.what());
    }
}

}  // namespace

void mount_routes(httplib::Server& server, SessionService& service) {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, json{{"status", "ok"}});
    });

    server.Get("/corpus/stats", [&service](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, service.corpus_stats()); });
    });

    server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = parse_body(req);
            if (!body.is_object()) throw ServiceError(400, "bad_request", "config overrides must be an object");
            send_json(res, 201, service.create_session(body));
        });
    });

    server.Get(R"(/sessions/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, service.get_session(req.matches[1])); });
    });

    server.Post(R"(/sessions/([^/]+)/turns)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = parse_body(req);
            if (!body.is_object() || !body.contains("text") || !body["text"].is_string())
                throw ServiceError(400, "bad_request", "body must be {\"text\": string}");
            send_json(res, 200, service.post_turn(req.matches[1], body["text"].get<std::string>()));
        });
    });

    server.Get(R"(/sessions/([^/]+)/events)", [&service](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        if (!service.snapshot(id)) {
            const ServiceError e(404, "not_found", "unknown session '" + id + "'");
            json line = e.body();
            line["kind"] = "error";
            res.status = 404;
            res.set_content(line.dump() + "\n", "application/x-ndjson");
            return;
        }
        const std::string follow_param = req.has_param("follow") ? req.get_param_value("follow") : "1";
        const bool follow = !(follow_param == "0" || follow_param == "false");
        res.set_chunked_content_provider(
            "application/x-ndjson", [&service, id, follow](std::size_t, httplib::DataSink& sink) {
                service.stream_events(id, follow, [&sink](const std::string& line) {
                    if (line.empty()) return sink.is_writable();
                    return sink.write(line.data(), line.size());
                });
                sink.done();
                return true;
            });
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string message = "unknown error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            message = e.what();
        } catch (...) {
        }
        send_error(res, ServiceError(500, "internal", message));
    });
}

// --------------------------------------------------------------- runtime

std::unique_ptr<LanguageBackend> make_backend(const std::optional<fs::path>& script,
                                              const std::optional<std::string>& backend_url) {
    if (script && backend_url) throw UsageError("configure either a script or a backend URL, not both");
    if (script) return std::make_unique<ScriptedBackend>(MockScript::load(*script), "scripted:" + script->filename().string());
    if (backend_url) return std::make_unique<RemoteBackend>(RemoteConfig{*backend_url});
    throw UsageError("no backend configured (set a script or a backend URL)");
}

ServiceRuntime::ServiceRuntime(const ServiceSettings& settings) : settings_(settings) {
    if (settings_.corpus.empty()) throw UsageError("no corpus configured");
    corpus_ = load_corpus_file(settings_.corpus);
    if (settings_.index) {
        auto idx = Bm25Index::load(*settings_.index);
        if (idx.doc_ids() != [&] {
                std::vector<std::string> ids;
                for (const auto& p : corpus_.passages()) ids.push_back(p.id);
                return ids;
            }())
            throw DataError("index " + settings_.index->string() + " does not match the corpus");
        index_ = std::make_shared<const Bm25Index>(std::move(idx));
    } else {
        index_ = std::make_shared<const Bm25Index>(Bm25Index::build(corpus_));
    }
    backend_ = make_backend(settings_.script, settings_.backend_url);
    service_ = std::make_unique<SessionService>(*backend_, corpus_, index_, settings_.data_dir, settings_.pipeline);
    service_->load();
    server_ = std::make_unique<httplib::Server>();
    server_->new_task_queue = [] { return new httplib::ThreadPool(32); };
    mount_routes(*server_, *service_);
}

ServiceRuntime::~ServiceRuntime() { stop(); }

int ServiceRuntime::bind() {
    if (settings_.port == 0) {
        const int port = server_->bind_to_any_port(settings_.host);
        if (port < 0) throw Error(ErrorKind::internal, "cannot bind " + settings_.host);
        return port;
    }
    if (!server_->bind_to_port(settings_.host, settings_.port))
        throw Error(ErrorKind::internal,
                    "cannot bind " + settings_.host + ":" + std::to_string(settings_.port));
    return settings_.port;
}

void ServiceRuntime::serve() { server_->listen_after_bind(); }

void ServiceRuntime::stop() {
    if (service_) service_->shutdown();
    if (server_) server_->stop();
}

}  // namespace smrag
