#include "cli.hpp"

#include <signal.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "smrag/datagen.hpp"
#include "smrag/eval.hpp"
#include "smrag/jsonl.hpp"
#include "smrag/orchestrator.hpp"
#include "smrag/retrieval.hpp"
#include "smrag/service.hpp"

namespace smrag::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------- args

struct BackendArgs {
    std::string script;
    std::string backend_url;
};

struct IndexArgs {
    std::string corpus;
    std::string out;
    double k1 = 1.2;
    double b = 0.75;
    bool force = false;
};

struct RunArgs {
    std::string bench;
    std::string corpus;
    std::string index;
    std::string config;
    BackendArgs backend;
    std::string out;
    std::size_t parallel = 4;
    long long seed = 0;
    bool force = false;
};

struct ChatArgs {
    std::string corpus;
    std::string index;
    std::string config;
    BackendArgs backend;
};

struct EvalRetrievalArgs {
    std::string bench;
    std::string corpus;
    BackendArgs backend;
    std::vector<std::string> representations;
    std::vector<std::string> retrievers{"bm25"};
    std::vector<std::size_t> ks{5, 10};
    std::size_t parallel = 4;
    std::string out;
    bool force = false;
};

struct EvalCriticArgs {
    std::string predictions;
    std::string out;
    bool force = false;
};

struct DatagenArgs {
    std::string task;
    std::string input;
    BackendArgs backend;
    std::string out;
    std::size_t parallel = 4;
    std::size_t max_tokens = 512;
    bool force = false;
};

struct ServeArgs {
    std::string config;
    std::string listen;
    std::string corpus;
    std::string index;
    BackendArgs backend;
    std::string data_dir;
};

struct Args {
    IndexArgs index;
    RunArgs run;
    ChatArgs chat;
    EvalRetrievalArgs eval_retrieval;
    EvalCriticArgs eval_critic;
    DatagenArgs datagen;
    ServeArgs serve;
    bool reference = false;
};

void add_backend_flags(CLI::App* cmd, BackendArgs& a) {
    auto* script = cmd->add_option("--script", a.script, "Scripted backend rule file (JSONL); env SMRAG_SCRIPT");
    auto* url = cmd->add_option("--backend-url", a.backend_url, "Remote language backend base URL; env SMRAG_BACKEND_URL");
    script->excludes(url);
}

void build_parser(CLI::App& app, Args& a) {
    app.require_subcommand(0, 1);
    app.add_flag("--markdown-reference", a.reference, "Print the flag reference as Markdown and exit");
    app.set_version_flag("--version", kVersion);

    auto* index = app.add_subcommand("index", "Build a BM25 index snapshot from a corpus");
    index->add_option("--corpus", a.index.corpus, "Corpus JSONL of {id, title?, text}")->required();
    index->add_option("--out", a.index.out, "Output directory")->required();
    index->add_option("--k1", a.index.k1, "BM25 k1")->capture_default_str();
    index->add_option("--b", a.index.b, "BM25 b")->capture_default_str();
    index->add_flag("--force", a.index.force, "Allow a non-empty output directory");

    auto* run = app.add_subcommand("run", "Run the pipeline over every user turn of a benchmark");
    run->add_option("--bench", a.run.bench, "Benchmark JSONL of conversations")->required();
    run->add_option("--corpus", a.run.corpus, "Corpus JSONL; env SMRAG_CORPUS");
    run->add_option("--index", a.run.index, "BM25 snapshot file or index directory; env SMRAG_INDEX");
    run->add_option("--config", a.run.config, "Pipeline config overrides (JSON)");
    add_backend_flags(run, a.run.backend);
    run->add_option("--out", a.run.out, "Output directory")->required();
    run->add_option("--parallel", a.run.parallel, "Conversations processed concurrently")->capture_default_str()
        ->check(CLI::PositiveNumber);
    run->add_option("--seed", a.run.seed, "Sampling seed recorded in the metadata")->capture_default_str();
    run->add_flag("--force", a.run.force, "Allow a non-empty output directory");

    auto* chat = app.add_subcommand("chat", "Interactive terminal conversation");
    chat->add_option("--corpus", a.chat.corpus, "Corpus JSONL; env SMRAG_CORPUS");
    chat->add_option("--index", a.chat.index, "BM25 snapshot file or index directory; env SMRAG_INDEX");
    chat->add_option("--config", a.chat.config, "Pipeline config overrides (JSON)");
    add_backend_flags(chat, a.chat.backend);

    auto* er = app.add_subcommand("eval-retrieval", "Recall@k of each conversation representation");
    er->add_option("--bench", a.eval_retrieval.bench, "Benchmark JSONL with gold_passage_ids")->required();
    er->add_option("--corpus", a.eval_retrieval.corpus, "Corpus JSONL; env SMRAG_CORPUS");
    add_backend_flags(er, a.eval_retrieval.backend);
    er->add_option("--representations", a.eval_retrieval.representations,
                   "Comma list of last_turn,full_conversation,rewrite,summary,gold_rewrite "
                   "(default: all; rewrite and summary need a backend)")
        ->delimiter(',');
    er->add_option("--retrievers", a.eval_retrieval.retrievers, "Comma list of bm25,dense")
        ->delimiter(',')
        ->capture_default_str();
    er->add_option("--ks", a.eval_retrieval.ks, "Comma list of cutoffs")->delimiter(',')->capture_default_str();
    er->add_option("--parallel", a.eval_retrieval.parallel, "Questions evaluated concurrently")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    er->add_option("--out", a.eval_retrieval.out, "Output directory")->required();
    er->add_flag("--force", a.eval_retrieval.force, "Allow a non-empty output directory");

    auto* ec = app.add_subcommand("eval-critic", "Critic accuracy per task and variant");
    ec->add_option("--predictions", a.eval_critic.predictions, "JSONL of {task, variant?, predicted, gold, id?}")
        ->required();
    ec->add_option("--out", a.eval_critic.out, "Output directory")->required();
    ec->add_flag("--force", a.eval_critic.force, "Allow a non-empty output directory");

    auto* dg = app.add_subcommand("datagen", "Collect critic labels from a judge backend");
    dg->add_option("--task", a.datagen.task,
                   "retrieval2, retrieval3, relevance, groundedness, utility, summarization or judge_eval")
        ->required();
    dg->add_option("--input", a.datagen.input, "JSONL of task instances")->required();
    add_backend_flags(dg, a.datagen.backend);
    dg->add_option("--out", a.datagen.out, "Output directory")->required();
    dg->add_option("--parallel", a.datagen.parallel, "Concurrent judge calls")->capture_default_str()
        ->check(CLI::PositiveNumber);
    dg->add_option("--max-tokens", a.datagen.max_tokens, "Judge reply token limit")->capture_default_str();
    dg->add_flag("--force", a.datagen.force, "Allow a non-empty output directory");

    auto* serve = app.add_subcommand("serve", "Start the session HTTP service");
    serve->add_option("--config", a.serve.config, "Settings file (JSON)");
    serve->add_option("--listen", a.serve.listen, "host:port; env SMRAG_LISTEN");
    serve->add_option("--corpus", a.serve.corpus, "Corpus JSONL; env SMRAG_CORPUS");
    serve->add_option("--index", a.serve.index, "BM25 snapshot file or index directory; env SMRAG_INDEX");
    add_backend_flags(serve, a.serve.backend);
    serve->add_option("--data-dir", a.serve.data_dir, "Session storage directory; env SMRAG_DATA_DIR");
}

// ------------------------------------------------------------- helpers

/// Claims an output directory. Refuses a non-empty one unless forced and
/// removes what it wrote unless commit() is called.
class OutputDir {
public:
    OutputDir(const fs::path& path, bool force) : path_(path) {
        if (fs::exists(path_)) {
            if (!fs::is_directory(path_)) throw UsageError("output path " + path_.string() + " is not a directory");
            if (!fs::is_empty(path_) && !force)
                throw UsageError("output directory " + path_.string() + " is not empty (use --force)");
        } else {
            fs::create_directories(path_);
            created_ = true;
        }
    }

    ~OutputDir() {
        if (committed_) return;
        std::error_code ec;
        if (created_) {
            fs::remove_all(path_, ec);
            return;
        }
        for (const auto& f : written_) fs::remove(f, ec);
    }

    void write(const std::string& name, const std::string& content) {
        const fs::path p = path_ / name;
        written_.push_back(p);
        write_file_atomic(p, content);
    }

    const fs::path& path() const { return path_; }
    void commit() { committed_ = true; }

private:
    fs::path path_;
    bool created_ = false;
    bool committed_ = false;
    std::vector<fs::path> written_;
};

std::string pick(const std::string& flag, const char* env) {
    if (!flag.empty()) return flag;
    return process_env(env).value_or("");
}

Corpus load_corpus(const std::string& flag) {
    const std::string path = pick(flag, "SMRAG_CORPUS");
    if (path.empty()) throw UsageError("no corpus given (--corpus or SMRAG_CORPUS)");
    return load_corpus_file(path);
}

std::shared_ptr<const Bm25Index> load_index(const std::string& flag, const Corpus& corpus) {
    std::string path = pick(flag, "SMRAG_INDEX");
    if (path.empty()) return std::make_shared<const Bm25Index>(Bm25Index::build(corpus));
    fs::path p(path);
    if (fs::is_directory(p)) p /= "index.json";
    auto index = Bm25Index::load(p);
    std::vector<std::string> ids;
    for (const auto& passage : corpus.passages()) ids.push_back(passage.id);
    if (index.doc_ids() != ids) throw DataError("index " + p.string() + " does not match the corpus");
    return std::make_shared<const Bm25Index>(std::move(index));
}

std::unique_ptr<LanguageBackend> load_backend(const BackendArgs& a, bool required = true) {
    std::optional<fs::path> script;
    std::optional<std::string> url;
    if (!a.script.empty()) script = a.script;
    else if (!a.backend_url.empty()) url = a.backend_url;
    else if (auto s = process_env("SMRAG_SCRIPT")) script = *s;
    else if (auto u = process_env("SMRAG_BACKEND_URL")) url = *u;
    if (!script && !url) {
        if (required) throw UsageError("no backend given (--script or --backend-url)");
        return nullptr;
    }
    return make_backend(script, url);
}

PipelineConfig load_config(const std::string& path) {
    PipelineConfig cfg;
    if (auto w = process_env("SMRAG_WEIGHTS")) cfg.weights = parse_weights(*w);
    if (!path.empty()) {
        json j;
        try {
            j = json::parse(read_file(path));
        } catch (const json::exception& e) {
            throw DataError("config " + path + ": " + e.what());
        }
        apply_config_overrides(j, cfg);
    }
    const auto v = validate_config(cfg);
    if (!v.ok()) throw DataError("invalid pipeline config: " + v.describe());
    return cfg;
}

std::vector<Conversation> load_benchmark(const std::string& path, const Corpus* corpus) {
    std::vector<Conversation> out;
    for (const auto& rec : read_jsonl_file(path)) {
        Conversation c;
        try {
            c = rec.value.get<Conversation>();
        } catch (const std::exception& e) {
            throw DataError(path + " line " + std::to_string(rec.line) + ": " + e.what());
        }
        const auto v = validate_conversation(c, corpus);
        if (!v.ok()) throw DataError(path + " line " + std::to_string(rec.line) + ": " + v.describe());
        out.push_back(std::move(c));
    }
    return out;
}

std::unique_ptr<Retriever> make_retriever(RetrieverKind kind, const Corpus& corpus,
                                          std::shared_ptr<const Bm25Index> bm25) {
    if (kind == RetrieverKind::dense)
        return std::make_unique<DenseRetriever>(
            std::make_shared<const DenseIndex>(std::make_shared<const HashingEmbedder>(), corpus));
    return std::make_unique<Bm25Retriever>(std::move(bm25));
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ------------------------------------------------------------ commands

int cmd_index(const IndexArgs& a, std::ostream& out) {
    const Corpus corpus = load_corpus_file(a.corpus);
    const auto index = Bm25Index::build(corpus, Bm25Params{a.k1, a.b});
    OutputDir dir(a.out, a.force);
    dir.write("index.json", index.to_snapshot().dump() + "\n");
    dir.write("meta.json", json{{"created_at", iso_now()}, {"corpus", a.corpus}, {"version", kVersion}}.dump(2) + "\n");
    dir.commit();
    out << "indexed " << index.doc_count() << " passages, " << index.vocabulary_size() << " terms -> "
        << (dir.path() / "index.json").string() << "\n";
    return kOk;
}

int cmd_run(const RunArgs& a, std::ostream& out) {
    const std::string started = iso_now();
    const Corpus corpus = load_corpus(a.corpus);
    const auto index = load_index(a.index, corpus);
    const PipelineConfig cfg = load_config(a.config);
    const auto backend = load_backend(a.backend);
    const auto benchmark = load_benchmark(a.bench, &corpus);
    const auto retriever = make_retriever(cfg.retriever_kind, corpus, index);
    OutputDir dir(a.out, a.force);

    Pipeline pipeline(*backend, *retriever, corpus, cfg);
    pipeline.set_clock([] { return std::int64_t{0}; });

    auto run_conversation = [&](const Conversation& conv) {
        std::string lines;
        std::size_t turn_number = 0;
        for (std::size_t i = 0; i < conv.turns.size(); ++i) {
            if (conv.turns[i].role != Role::user) continue;
            ++turn_number;
            Conversation history{conv.id, {conv.turns.begin(), conv.turns.begin() + static_cast<std::ptrdiff_t>(i)}};
            const TurnResult r = pipeline.run_turn(history, conv.turns[i].text);
            lines += dump_line(run_log_line(conv.id, turn_number, json(r))) + "\n";
        }
        return lines;
    };

    std::vector<std::string> chunks(benchmark.size());
    for (std::size_t start = 0; start < benchmark.size(); start += a.parallel) {
        const std::size_t end = std::min(benchmark.size(), start + a.parallel);
        std::vector<std::future<std::string>> batch;
        for (std::size_t i = start; i < end; ++i)
            batch.push_back(std::async(std::launch::async, run_conversation, std::cref(benchmark[i])));
        for (std::size_t i = start; i < end; ++i) chunks[i] = batch[i - start].get();
    }
    std::string runlog;
    for (const auto& c : chunks) runlog += c;

    std::istringstream log_in(runlog);
    const RunMetrics metrics = run_metrics(log_in);
    dir.write("runlog.jsonl", runlog);
    dir.write("metrics.json", run_metrics_json(metrics).dump(2) + "\n");
    dir.write("metrics.txt", run_metrics_table(metrics));
    dir.write("meta.json", json{{"started_at", started},
                                {"finished_at", iso_now()},
                                {"seed", a.seed},
                                {"backend", backend->identity()},
                                {"config", cfg},
                                {"bench", a.bench},
                                {"conversations", benchmark.size()},
                                {"version", kVersion}}
                                   .dump(2) +
                               "\n");
    dir.commit();
    out << run_metrics_table(metrics);
    return kOk;
}

int cmd_chat(const ChatArgs& a, std::istream& in, std::ostream& out) {
    const Corpus corpus = load_corpus(a.corpus);
    const auto index = load_index(a.index, corpus);
    const PipelineConfig cfg = load_config(a.config);
    const auto backend = load_backend(a.backend);
    const auto retriever = make_retriever(cfg.retriever_kind, corpus, index);
    Pipeline pipeline(*backend, *retriever, corpus, cfg);

    Conversation conv{"chat", {}};
    out << "smrag chat (" << backend->identity() << "); /quit to exit\n";
    std::string line;
    while (out << "> " << std::flush, std::getline(in, line)) {
        const std::string text = trim(line);
        if (text == "/quit" || text == "/exit") break;
        if (text.empty()) continue;
        try {
            const TurnResult r = pipeline.run_turn(conv, text);
            out << "[" << to_string(r.decision.choice) << "]";
            if (r.query) out << " query: " << r.query->combined;
            out << "\n";
            for (const auto& e : r.retrieved.entries) out << "  " << e.id << "  " << e.score << "\n";
            out << r.selected().text() << "\n";
        } catch (const BackendError&) {
            throw;
        } catch (const DataError& e) {
            out << "error: " << e.what() << "\n";
        }
    }
    return kOk;
}

int cmd_eval_retrieval(const EvalRetrievalArgs& a, std::ostream& out) {
    const Corpus corpus = load_corpus(a.corpus);
    const auto benchmark = load_benchmark(a.bench, nullptr);
    const auto backend = load_backend(a.backend, false);

    RetrievalReportOptions opts;
    opts.ks = a.ks;
    opts.parallelism = a.parallel;
    opts.retrievers.clear();
    for (const auto& r : a.retrievers) opts.retrievers.push_back(retriever_kind_from_string(r));
    opts.representations.clear();
    if (a.representations.empty()) {
        for (auto r : all_representations())
            if (backend || (r != Representation::rewrite && r != Representation::summary))
                opts.representations.push_back(r);
    } else {
        for (const auto& r : a.representations) opts.representations.push_back(representation_from_string(r));
    }

    const auto bm25 = std::make_shared<const Bm25Index>(Bm25Index::build(corpus));
    std::map<RetrieverKind, std::unique_ptr<Retriever>> owned;
    std::map<RetrieverKind, const Retriever*> retrievers;
    for (auto kind : opts.retrievers) {
        owned[kind] = make_retriever(kind, corpus, bm25);
        retrievers[kind] = owned[kind].get();
    }
    OutputDir dir(a.out, a.force);
    const RetrievalReport report = retrieval_report(benchmark, retrievers, backend.get(), opts);
    const std::string table = retrieval_report_table(report);
    dir.write("report.txt", table);
    dir.write("report.json", retrieval_report_json(report).dump(2) + "\n");
    dir.write("meta.json", json{{"created_at", iso_now()},
                                {"bench", a.bench},
                                {"backend", backend ? json(backend->identity()) : json(nullptr)},
                                {"version", kVersion}}
                                   .dump(2) +
                               "\n");
    dir.commit();
    out << table;
    return kOk;
}

int cmd_eval_critic(const EvalCriticArgs& a, std::ostream& out) {
    std::vector<CriticPrediction> preds;
    for (const auto& rec : read_jsonl_file(a.predictions)) {
        try {
            preds.push_back(critic_prediction_from_json(rec.value));
        } catch (const std::exception& e) {
            throw DataError(a.predictions + " line " + std::to_string(rec.line) + ": " + e.what());
        }
        if (preds.back().id.empty()) preds.back().id = "line " + std::to_string(rec.line);
    }
    const auto rows = critic_accuracy(preds);
    OutputDir dir(a.out, a.force);
    const std::string table = critic_report_table(rows);
    dir.write("report.txt", table);
    dir.write("report.json", critic_report_json(rows).dump(2) + "\n");
    dir.write("meta.json",
              json{{"created_at", iso_now()}, {"predictions", a.predictions}, {"version", kVersion}}.dump(2) + "\n");
    dir.commit();
    out << table;
    return kOk;
}

int cmd_datagen(const DatagenArgs& a, std::ostream& out) {
    const CriticTask task = critic_task_from_string(a.task);
    std::vector<TaskInstance> instances;
    for (const auto& rec : read_jsonl_file(a.input)) {
        try {
            instances.push_back(task_instance_from_json(rec.value));
        } catch (const std::exception& e) {
            throw DataError(a.input + " line " + std::to_string(rec.line) + ": " + e.what());
        }
    }
    const auto judge = load_backend(a.backend);
    OutputDir dir(a.out, a.force);
    CollectOptions opts;
    opts.parallelism = a.parallel;
    opts.max_tokens = a.max_tokens;
    const LabeledDataset data = collect_labels(*judge, task, instances, opts);

    std::string lines;
    for (const auto& r : data.records) lines += dump_line(to_json_record(r)) + "\n";
    dir.write("dataset.jsonl", lines);
    dir.write("stats.json", to_json_record(data.stats).dump(2) + "\n");
    dir.write("stats.txt", data.stats.to_table());
    dir.write("meta.json", json{{"created_at", iso_now()},
                                {"task", a.task},
                                {"judge", judge->identity()},
                                {"template_hash", template_hash(task)},
                                {"version", kVersion}}
                                   .dump(2) +
                               "\n");
    dir.commit();
    out << data.stats.to_table();
    return kOk;
}

ServiceRuntime* g_runtime = nullptr;

int cmd_serve(const ServeArgs& a, std::ostream& out) {
    std::optional<fs::path> file;
    if (!a.config.empty()) file = a.config;
    ServiceSettings s = load_service_settings(file, process_env);
    if (!a.listen.empty()) parse_listen(a.listen, s.host, s.port);
    if (!a.corpus.empty()) s.corpus = a.corpus;
    if (!a.index.empty()) {
        fs::path p(a.index);
        s.index = fs::is_directory(p) ? p / "index.json" : p;
    } else if (s.index && fs::is_directory(*s.index)) {
        s.index = *s.index / "index.json";
    }
    if (!a.data_dir.empty()) s.data_dir = a.data_dir;
    if (!a.backend.script.empty()) {
        s.script = a.backend.script;
        s.backend_url.reset();
    } else if (!a.backend.backend_url.empty()) {
        s.backend_url = a.backend.backend_url;
        s.script.reset();
    }

    // Block termination signals before any server thread starts so only the
    // waiter below receives them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    ServiceRuntime runtime(s);
    const int port = runtime.bind();
    out << "listening on " << s.host << ":" << port << std::endl;
    g_runtime = &runtime;
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        if (g_runtime) g_runtime->stop();
    });
    runtime.serve();
    g_runtime = nullptr;
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return kOk;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::usage: return kUsage;
    case ErrorKind::data: return kData;
    case ErrorKind::backend: return kBackend;
    case ErrorKind::internal: return kInternal;
    }
    return kInternal;
}

void report_error(std::ostream& err, const char* kind, const std::string& message) {
    err << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

std::string reference_for(const CLI::App& app) {
    std::string out;
    auto options = [&](const CLI::App& cmd) {
        for (const CLI::Option* opt : cmd.get_options()) {
            if (!opt->nonpositional()) continue;
            const std::string name = opt->get_name(false, true);
            if (name == "--help,-h" || name == "-h,--help") continue;
            out += "- `" + name + "`";
            if (opt->get_required()) out += " (required)";
            if (!opt->get_default_str().empty()) out += " (default `" + opt->get_default_str() + "`)";
            out += ": " + opt->get_description() + "\n";
        }
    };
    out += "### smrag\n\n";
    options(app);
    for (const CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
        out += "\n### smrag " + sub->get_name() + "\n\n" + sub->get_description() + "\n\n";
        options(*sub);
    }
    return out;
}

}  // namespace

std::string flag_reference() {
    CLI::App app{"SELF-multi-RAG conversational QA engine", "smrag"};
    Args args;
    build_parser(app, args);
    return reference_for(app);
}

int dispatch(const std::vector<std::string>& raw, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"SELF-multi-RAG conversational QA engine", "smrag"};
    Args a;
    build_parser(app, a);

    std::vector<std::string> args(raw.rbegin(), raw.rend());  // CLI11 consumes from the back
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return kOk;
    } catch (const CLI::ParseError& e) {
        report_error(err, "usage", e.what());
        return kUsage;
    }

    if (a.reference) {
        out << reference_for(app);
        return kOk;
    }
    if (app.get_subcommands().empty()) {
        out << app.help();
        return kUsage;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();

    try {
        if (cmd == "index") return cmd_index(a.index, out);
        if (cmd == "run") return cmd_run(a.run, out);
        if (cmd == "chat") return cmd_chat(a.chat, in, out);
        if (cmd == "eval-retrieval") return cmd_eval_retrieval(a.eval_retrieval, out);
        if (cmd == "eval-critic") return cmd_eval_critic(a.eval_critic, out);
        if (cmd == "datagen") return cmd_datagen(a.datagen, out);
        if (cmd == "serve") return cmd_serve(a.serve, out);
        report_error(err, "usage", "unknown command " + cmd);
        return kUsage;
    } catch (const Error& e) {
        report_error(err, to_string(e.kind()), e.what());
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        report_error(err, "data", e.what());
        return kData;
    } catch (const json::exception& e) {
        report_error(err, "data", e.what());
        return kData;
    } catch (const std::exception& e) {
        report_error(err, "internal", e.what());
        return kInternal;
    }
}

}  // namespace smrag::cli
