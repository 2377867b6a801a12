#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fixtures.hpp"
#include "smrag/core.hpp"
#include "smrag/retrieval.hpp"

using namespace smrag;
using fx::assistant;
using fx::user;

TEST_CASE("well-formed alternation validates") {
    Conversation c{"c", {user("q1"), assistant("a1"), user("q2")}};
    CHECK(validate_conversation(c).ok());
}

TEST_CASE("conversation must start with a user turn") {
    Conversation c{"c", {assistant("a1")}};
    const auto v = validate_conversation(c);
    CHECK_FALSE(v.ok());
    CHECK(v.mentions("must start with user"));
    REQUIRE(v.violations.front().turn_index.has_value());
    CHECK(*v.violations.front().turn_index == 0);
}

TEST_CASE("empty or whitespace turn text is a violation") {
    CHECK(validate_conversation(Conversation{"c", {user("")}}).mentions("empty turn text"));
    CHECK(validate_conversation(Conversation{"c", {user(" \t\n")}}).mentions("empty turn text"));
}

TEST_CASE("repeated roles break alternation and every violation is listed") {
    Conversation c{"c", {user("q1"), user("q2"), assistant(""), assistant("a")}};
    const auto v = validate_conversation(c);
    CHECK(v.mentions("alternate"));
    CHECK(v.mentions("empty turn text"));
    CHECK(v.violations.size() >= 3);
}

TEST_CASE("attached passage ids must resolve when a corpus is bound") {
    const Corpus corpus = fx::three_doc_corpus();
    Conversation ok{"c", {user("q"), assistant("a", {"d1"}), user("q2")}};
    Conversation bad{"c", {user("q"), assistant("a", {"nope"}), user("q2")}};
    CHECK(validate_conversation(ok, &corpus).ok());
    CHECK(validate_conversation(bad).ok());  // no corpus bound: not checked
    const auto v = validate_conversation(bad, &corpus);
    CHECK_FALSE(v.ok());
    CHECK(v.mentions("nope"));
}

TEST_CASE("config validation") {
    PipelineConfig cfg;
    cfg.top_k = 5;
    cfg.beam_size = 2;
    cfg.weights = {1, 1, 0.5};
    CHECK(validate_config(cfg).ok());

    auto zero_k = cfg;
    zero_k.top_k = 0;
    CHECK(validate_config(zero_k).mentions("top_k >= 1"));

    auto zero_b = cfg;
    zero_b.beam_size = 0;
    CHECK(validate_config(zero_b).mentions("beam_size >= 1"));

    auto zero_seg = cfg;
    zero_seg.max_segments = 0;
    CHECK(validate_config(zero_seg).mentions("max_segments >= 1"));

    auto nan_w = cfg;
    nan_w.weights = {std::nan(""), 1, 1};
    CHECK(validate_config(nan_w).mentions("weights finite"));

    auto inf_w = cfg;
    inf_w.weights.utility = std::numeric_limits<double>::infinity();
    CHECK(validate_config(inf_w).mentions("weights finite"));
}

TEST_CASE("default weights are (1, 1, 0.5)") {
    const ScoringWeights w;
    CHECK(w.relevance == 1.0);
    CHECK(w.groundedness == 1.0);
    CHECK(w.utility == 0.5);
}

TEST_CASE("config overrides") {
    PipelineConfig cfg;
    apply_config_overrides(json{{"top_k", 3}, {"weights", {{"w1", 2.0}}}}, cfg);
    CHECK(cfg.top_k == 3);
    CHECK(cfg.weights.relevance == 2.0);
    CHECK(cfg.weights.groundedness == 1.0);

    apply_config_overrides(json{{"weights", {0.0, 0.0, 0.0}}}, cfg);
    CHECK(cfg.weights == ScoringWeights{0, 0, 0});

    CHECK_THROWS_AS(apply_config_overrides(json{{"topk", 3}}, cfg), DataError);

    PipelineConfig neg;
    apply_config_overrides(json{{"top_k", -1}}, neg);
    CHECK_FALSE(validate_config(neg).ok());

    // A serialized config reads back unchanged.
    PipelineConfig round;
    apply_config_overrides(json(cfg), round);
    CHECK(round == cfg);
}

TEST_CASE("valid conversations round-trip through JSON field for field") {
    std::mt19937 rng(7);
    const char* words[] = {"alpha", "beta", "gamma", "δέλτα", "quote\"d", "new\nline"};
    for (int trial = 0; trial < 200; ++trial) {
        Conversation c;
        c.id = "conv-" + std::to_string(trial);
        const int n = 1 + static_cast<int>(rng() % 7);
        for (int i = 0; i < n; ++i) {
            Turn t = i % 2 == 0 ? user(words[rng() % 6]) : assistant(words[rng() % 6]);
            if (rng() % 3 == 0) t.attached_passage_ids = {"p" + std::to_string(rng() % 9)};
            if (t.role == Role::user && rng() % 2) t.gold_passage_ids = std::vector<std::string>{"g1", "g2"};
            if (t.role == Role::user && rng() % 4 == 0) t.gold_rewrite = "rewrite";
            c.turns.push_back(t);
        }
        REQUIRE(validate_conversation(c).ok());
        const Conversation back = json::parse(json(c).dump()).get<Conversation>();
        CHECK(back == c);
    }
}

TEST_CASE("role strings") {
    CHECK(std::string(to_string(Role::user)) == "user");
    CHECK(role_from_string("assistant") == Role::assistant);
    CHECK_THROWS(role_from_string("system"));
}

TEST_CASE("indexed text prepends a non-empty title") {
    CHECK(Passage{"p", "", "body"}.indexed_text() == "body");
    CHECK(Passage{"p", "Title", "body"}.indexed_text() == "Title body");
}
