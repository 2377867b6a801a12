#include <doctest.h>

#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "smrag/eval.hpp"

using namespace smrag;
using fx::assistant;
using fx::user;

// ------------------------------------------------------- critic accuracy

TEST_CASE("critic accuracy examples") {
    std::vector<CriticPrediction> preds;
    for (int i = 0; i < 10; ++i)
        preds.push_back({"r" + std::to_string(i), CriticTask::relevance, CriticVariant::not_applicable, "[Relevant]",
                         "[Relevant]"});
    auto rows = critic_accuracy(preds);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].accuracy == 1.0);
    CHECK(rows[0].n == 10);

    std::vector<CriticPrediction> r3 = {
        {"a", CriticTask::retrieval3, CriticVariant::with_passages, "[Retrieve]", "[Retrieve]"},
        {"b", CriticTask::retrieval3, CriticVariant::with_passages, "[No Retrieve]", "[Retrieve]"},
        {"c", CriticTask::retrieval3, CriticVariant::with_passages, "[Continue to Use Evidence]",
         "[Continue to Use Evidence]"},
        {"d", CriticTask::retrieval3, CriticVariant::with_passages, "[Retrieve]", "[No Retrieve]"},
    };
    rows = critic_accuracy(r3);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].accuracy == 0.5);
    CHECK(rows[0].correct == 2);
}

TEST_CASE("utility is scored on exact level and aliases canonicalize") {
    const std::vector<CriticPrediction> preds = {
        {"a", CriticTask::utility, CriticVariant::not_applicable, "4", "[Utility:4]"},
        {"b", CriticTask::utility, CriticVariant::not_applicable, "[Utility:5]", "[Utility:4]"},
        {"c", CriticTask::relevance, CriticVariant::not_applicable, "[Irrelevant]", "[Non Relevant]"},
        {"d", CriticTask::retrieval2, CriticVariant::without_passages, "[No Retrieval]", "[No Retrieve]"},
    };
    const auto rows = critic_accuracy(preds);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
        if (r.task == CriticTask::utility) CHECK(r.accuracy == 0.5);
        else CHECK(r.accuracy == 1.0);
    }
    CHECK(canonical_label(CriticTask::utility, "3") == "[Utility:3]");
    CHECK_FALSE(canonical_label(CriticTask::utility, "6").has_value());
}

TEST_CASE("alphabet violations name the record") {
    const std::vector<CriticPrediction> preds = {
        {"ok", CriticTask::relevance, CriticVariant::not_applicable, "[Relevant]", "[Relevant]"},
        {"bad-one", CriticTask::relevance, CriticVariant::not_applicable, "[Fully supported]", "[Relevant]"},
    };
    CHECK_THROWS_WITH_AS(critic_accuracy(preds), doctest::Contains("bad-one"), DataError);
    CHECK_THROWS_WITH_AS(critic_accuracy(preds), doctest::Contains("record 1"), DataError);
    const std::vector<CriticPrediction> summ = {
        {"s", CriticTask::summarization, CriticVariant::not_applicable, "x", "x"}};
    CHECK_THROWS_AS(critic_accuracy(summ), DataError);
}

TEST_CASE("critic accuracy equals a recount on random predictions") {
    std::mt19937_64 rng(314);
    const std::vector<CriticTask> tasks = {CriticTask::retrieval2, CriticTask::retrieval3, CriticTask::relevance,
                                           CriticTask::groundedness, CriticTask::utility};
    const std::vector<CriticVariant> variants = {CriticVariant::with_passages, CriticVariant::without_passages,
                                                 CriticVariant::not_applicable};
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<CriticPrediction> preds;
        std::map<std::pair<int, int>, std::pair<std::size_t, std::size_t>> expect;  // correct, n
        const std::size_t n = 1 + rng() % 60;
        for (std::size_t i = 0; i < n; ++i) {
            const int ti = static_cast<int>(rng() % tasks.size());
            const int vi = static_cast<int>(rng() % variants.size());
            const auto alphabet = label_alphabet(tasks[ti]);
            const std::string gold = alphabet[rng() % alphabet.size()];
            const std::string pred = alphabet[rng() % alphabet.size()];
            preds.push_back({"p" + std::to_string(i), tasks[ti], variants[vi], pred, gold});
            auto& cell = expect[{ti, vi}];
            cell.first += pred == gold ? 1 : 0;
            cell.second += 1;
        }
        const auto rows = critic_accuracy(preds);
        CHECK(rows.size() == expect.size());
        for (const auto& row : rows) {
            const int ti = static_cast<int>(std::find(tasks.begin(), tasks.end(), row.task) - tasks.begin());
            const int vi = static_cast<int>(std::find(variants.begin(), variants.end(), row.variant) - variants.begin());
            const auto [correct, total] = expect.at({ti, vi});
            CHECK(row.correct == correct);
            CHECK(row.n == total);
            CHECK(row.accuracy == static_cast<double>(correct) / static_cast<double>(total));
        }
    }
}

TEST_CASE("critic report marks reference values as not reproduced") {
    const std::vector<CriticPrediction> preds = {
        {"a", CriticTask::relevance, CriticVariant::not_applicable, "[Relevant]", "[Relevant]"}};
    const auto rows = critic_accuracy(preds);
    CHECK(critic_report_table(rows).find("paper-reported, not reproduced") != std::string::npos);
    const json j = critic_report_json(rows);
    CHECK(j["version"] == kReportVersion);
    CHECK(j["rows"][0]["n"] == 1);
}

TEST_CASE("critic predictions parse from records") {
    const auto p = critic_prediction_from_json(
        json{{"id", "x"}, {"task", "relevance"}, {"variant", "n/a"}, {"predicted", "[Relevant]"}, {"gold", "[Relevant]"}});
    CHECK(p.task == CriticTask::relevance);
    CHECK(p.variant == CriticVariant::not_applicable);
}

// ---------------------------------------------------- retrieval report

namespace {

struct Planted {
    Corpus corpus = fx::planted_corpus();
    std::shared_ptr<const Bm25Index> index = std::make_shared<Bm25Index>(Bm25Index::build(corpus));
    Bm25Retriever bm25{index};
    DenseRetriever dense{std::make_shared<DenseIndex>(std::make_shared<HashingEmbedder>(256), corpus)};
    ScriptedBackend backend{fx::planted_script()};
};

const RetrievalReportRow& row_for(const RetrievalReport& r, Representation rep, RetrieverKind kind) {
    for (const auto& row : r.rows)
        if (row.representation == rep && row.retriever == kind) return row;
    throw std::runtime_error("row not found");
}

}  // namespace

TEST_CASE("planted benchmark separates last-turn from summary retrieval") {
    Planted p;
    const auto report = retrieval_report(fx::planted_benchmark(), {{RetrieverKind::bm25, &p.bm25}}, &p.backend);
    CHECK(report.rows.size() == 5);
    CHECK(row_for(report, Representation::last_turn, RetrieverKind::bm25).recall_at(5) == 0.0);
    CHECK(row_for(report, Representation::full_conversation, RetrieverKind::bm25).recall_at(5) == 1.0);
    CHECK(row_for(report, Representation::summary, RetrieverKind::bm25).recall_at(5) == 1.0);
    CHECK(row_for(report, Representation::gold_rewrite, RetrieverKind::bm25).recall_at(5) == 1.0);
    CHECK(row_for(report, Representation::rewrite, RetrieverKind::bm25).recall_at(5) == 0.0);
    for (const auto& row : report.rows) {
        CHECK(row.n_questions == 2);
        CHECK(row.recall_at(5) <= row.recall_at(10));
    }
    const std::string table = retrieval_report_table(report);
    CHECK(table.find("last_turn") != std::string::npos);
    CHECK(table.find("paper-reported, not reproduced") != std::string::npos);
}

TEST_CASE("row count is representations times retrievers and reports are reproducible") {
    Planted p;
    RetrievalReportOptions opts;
    opts.retrievers = {RetrieverKind::bm25, RetrieverKind::dense};
    const std::map<RetrieverKind, const Retriever*> rs = {{RetrieverKind::bm25, &p.bm25},
                                                          {RetrieverKind::dense, &p.dense}};
    const auto a = retrieval_report(fx::planted_benchmark(), rs, &p.backend, opts);
    CHECK(a.rows.size() == 10);
    opts.parallelism = 1;
    const auto b = retrieval_report(fx::planted_benchmark(), rs, &p.backend, opts);
    CHECK(retrieval_report_json(a).dump() == retrieval_report_json(b).dump());
    CHECK(retrieval_report_table(a) == retrieval_report_table(b));
    for (const auto& row : a.rows)
        for (std::size_t i = 0; i < row.ks.size(); ++i) {
            CHECK(row.recall[i] >= 0.0);
            CHECK(row.recall[i] <= 1.0);
            CHECK(row.recall[i] <= row.hit[i]);
        }
}

TEST_CASE("gold at rank one for every representation gives all ones") {
    Corpus c;
    c.add({"only", "", "lighthouse keeper logbook"});
    c.add({"other", "", "bakery bread"});
    const auto idx = std::make_shared<Bm25Index>(Bm25Index::build(c));
    const Bm25Retriever bm25(idx);
    MockScript s;
    s.on_generate("summarise the conversation history", fx::text_only("Summary: lighthouse. Question: lighthouse?"));
    s.on_generate("### Task: rewrite", fx::text_only("lighthouse keeper"));
    const ScriptedBackend b(s);
    const std::vector<Conversation> bench = {
        Conversation{"q", {fx::gold_user("lighthouse keeper logbook?", {"only"}, "lighthouse logbook")}}};
    const auto report = retrieval_report(bench, {{RetrieverKind::bm25, &bm25}}, &b);
    for (const auto& row : report.rows) {
        CHECK(row.recall_at(5) == 1.0);
        CHECK(row.recall_at(10) == 1.0);
    }
}

TEST_CASE("questions without gold are skipped with a warning") {
    Planted p;
    auto bench = fx::planted_benchmark();
    bench.push_back(Conversation{"c3", {user("no gold here")}});
    bench[0].turns.push_back(assistant("later"));
    bench[0].turns.push_back(fx::gold_user("empty gold", {}));
    std::size_t missing = 0;
    const auto qs = benchmark_questions(bench, &missing);
    CHECK(qs.size() == 2);
    CHECK(missing == 4);  // the two opening turns, c3 and the empty gold set
    RetrievalReportOptions opts;
    opts.representations = {Representation::last_turn};
    const auto report = retrieval_report(bench, {{RetrieverKind::bm25, &p.bm25}}, nullptr, opts);
    CHECK(report.rows.size() == 1);
    CHECK(report.rows[0].skipped >= 2);
    CHECK_FALSE(report.warnings.empty());
}

TEST_CASE("representation queries") {
    const auto qs = benchmark_questions(fx::planted_benchmark());
    REQUIRE(qs.size() == 2);
    CHECK(qs[0].conversation_id == "c1");
    CHECK(representation_query(Representation::last_turn, qs[0], nullptr) == "What happened later?");
    CHECK(representation_query(Representation::full_conversation, qs[0], nullptr)->find("zanzibar") !=
          std::string::npos);
    CHECK(representation_query(Representation::gold_rewrite, qs[0], nullptr) ==
          "What happened to zanzibar clove plantations later?");
    CHECK_THROWS(representation_query(Representation::summary, qs[0], nullptr));
    auto no_rewrite = qs[0];
    no_rewrite.gold_rewrite.reset();
    CHECK_FALSE(representation_query(Representation::gold_rewrite, no_rewrite, nullptr).has_value());
}

// --------------------------------------------------------- run metrics

namespace {

TurnResult synthetic_turn(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TurnResult r;
    r.user_text = "q";
    const int d = static_cast<int>(rng() % 3);
    r.decision.choice = d == 0 ? DecisionChoice::retrieve
                        : d == 1 ? DecisionChoice::no_retrieve
                                 : DecisionChoice::continue_to_use_evidence;
    r.decision.scores = GroupScores{TokenGroup::retrieval3, {1.0, 0.0, 0.0}};
    if (r.decision.choice == DecisionChoice::retrieve) r.query = RetrievalQuery{"s", "q", "s q", true};
    const std::size_t n = 1 + rng() % 3;
    for (std::size_t i = 0; i < n; ++i) {
        CandidateResponse c;
        const bool passage = r.decision.choice != DecisionChoice::no_retrieve;
        if (passage) c.passage = Passage{"p" + std::to_string(i), "", "text"};
        const std::size_t segs = 1 + rng() % 3;
        for (std::size_t k = 0; k < segs; ++k) {
            c.segments.push_back({"s", make_candidate_score(u(rng), passage ? std::optional<double>(u(rng)) : std::nullopt,
                                                            passage ? std::optional<double>(u(rng)) : std::nullopt,
                                                            u(rng), ScoringWeights{})});
            c.total += c.segments.back().score.composite;
        }
        r.candidates.push_back(c);
    }
    r.selected_index = rng() % n;
    return r;
}

}  // namespace

TEST_CASE("retrieval rate examples") {
    std::mt19937_64 rng(1);
    std::string log;
    for (int i = 0; i < 10; ++i) {
        TurnResult r = synthetic_turn(rng);
        r.decision.choice = i % 2 ? DecisionChoice::retrieve : DecisionChoice::no_retrieve;
        log += dump_line(run_log_line("c", static_cast<std::size_t>(i + 1), json(r))) + "\n";
    }
    std::istringstream in(log);
    const auto m = run_metrics(in);
    CHECK(m.turns == 10);
    CHECK(m.retrieval_rate == 0.5);
    CHECK(m.decision_histogram.at("ContinueToUseEvidence") == 0);

    std::string none;
    for (int i = 0; i < 4; ++i) {
        TurnResult r = synthetic_turn(rng);
        r.decision.choice = DecisionChoice::no_retrieve;
        none += dump_line(run_log_line("c", 1, json(r))) + "\n";
    }
    std::istringstream in2(none);
    CHECK(run_metrics(in2).retrieval_rate == 0.0);
}

TEST_CASE("malformed run log lines report their line number") {
    std::mt19937_64 rng(2);
    const std::string good = dump_line(run_log_line("c", 1, json(synthetic_turn(rng))));
    std::istringstream in(good + "\n" + good + "\n{\"turn_number\": 1}\n");
    CHECK_THROWS_WITH_AS(run_metrics(in), doctest::Contains("line 3"), DataError);
}

TEST_CASE("run metrics equal a recount over raw records") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<JsonlRecord> log;
        const std::size_t n = rng() % 30;
        for (std::size_t i = 0; i < n; ++i)
            log.push_back({i + 1, run_log_line("c" + std::to_string(i % 4), 1 + rng() % 4, json(synthetic_turn(rng)))});

        // Recount straight from the JSON.
        std::size_t turns = 0, retrieve = 0;
        std::map<std::string, std::size_t> hist;
        std::map<std::size_t, std::tuple<std::size_t, std::size_t, double, double, std::size_t>> per;
        for (const auto& rec : log) {
            const json& res = rec.value["result"];
            const std::string choice = res["decision"]["choice"];
            const json& sel = res["candidates"][res["selected_index"].get<std::size_t>()];
            ++turns;
            ++hist[choice];
            auto& [t, r, total, grd, grd_n] = per[rec.value["turn_number"].get<std::size_t>()];
            ++t;
            if (choice == "Retrieve") ++retrieve, ++r;
            total += sel["total"].get<double>();
            for (const auto& seg : sel["segments"])
                if (!seg["score"]["s_grd"].is_null()) grd += seg["score"]["s_grd"].get<double>(), ++grd_n;
        }

        const auto m = run_metrics(log);
        CHECK(m.turns == turns);
        CHECK(m.retrieval_rate == (turns ? static_cast<double>(retrieve) / static_cast<double>(turns) : 0.0));
        for (const auto& [k, v] : hist) CHECK(m.decision_histogram.at(k) == v);
        REQUIRE(m.per_turn.size() == per.size());
        std::size_t i = 0;
        for (const auto& [number, acc] : per) {
            const auto& [t, r, total, grd, grd_n] = acc;
            const auto& s = m.per_turn[i++];
            CHECK(s.turn_number == number);
            CHECK(s.turns == t);
            CHECK(s.retrieve == r);
            CHECK(s.retrieval_rate == static_cast<double>(r) / static_cast<double>(t));
            CHECK(s.mean_selected_total == doctest::Approx(total / static_cast<double>(t)).epsilon(1e-12));
            CHECK(s.mean_pipeline_s_grd.has_value() == (grd_n > 0));
            if (grd_n) CHECK(*s.mean_pipeline_s_grd == doctest::Approx(grd / static_cast<double>(grd_n)).epsilon(1e-12));
        }
    }
}

TEST_CASE("run metrics reports") {
    std::mt19937_64 rng(3);
    std::vector<JsonlRecord> log = {{1, run_log_line("c", 1, json(synthetic_turn(rng)))}};
    const auto m = run_metrics(log);
    CHECK(run_metrics_table(m).find("retrieval_rate") != std::string::npos);
    CHECK(run_metrics_table(m).find("pipeline") != std::string::npos);
    const json j = run_metrics_json(m);
    CHECK(j["version"] == kReportVersion);
    CHECK(j["turns"] == 1);
}
