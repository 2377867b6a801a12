#pragma once

// Shared fixtures: the 3-doc corpus, scripted pipeline scenarios, the planted
// retrieval benchmark and the summarization exemplar conversation.

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "smrag/backend.hpp"
#include "smrag/core.hpp"
#include "smrag/jsonl.hpp"
#include "smrag/orchestrator.hpp"
#include "smrag/retrieval.hpp"

namespace fx {

using namespace smrag;

inline Generation gen(std::vector<std::pair<std::string, double>> pieces) {
    Generation g;
    for (auto& [t, lp] : pieces) {
        g.text += t;
        g.tokens.push_back({t, lp});
    }
    return g;
}

inline Generation text_only(std::string text) {
    Generation g;
    g.text = std::move(text);
    return g;
}

inline Turn user(std::string text) { return Turn{Role::user, std::move(text), {}, std::nullopt, std::nullopt}; }

inline Turn assistant(std::string text, std::vector<std::string> attached = {}) {
    return Turn{Role::assistant, std::move(text), std::move(attached), std::nullopt, std::nullopt};
}

inline Turn gold_user(std::string text, std::vector<std::string> gold, std::optional<std::string> rewrite = {}) {
    Turn t = user(std::move(text));
    t.gold_passage_ids = std::move(gold);
    t.gold_rewrite = std::move(rewrite);
    return t;
}

// ------------------------------------------------------------- corpora

inline Corpus three_doc_corpus() {
    Corpus c;
    c.add({"d1", "", "boer war gold mining"});
    c.add({"d2", "", "boer commandos volunteer militia"});
    c.add({"d3", "", "olmec civilization origins"});
    return c;
}

inline std::string corpus_jsonl(const Corpus& c) {
    std::string out;
    for (const auto& p : c.passages()) out += dump_line(json(p)) + "\n";
    return out;
}

// ------------------------------------------------------ token score maps

inline ScoreMap decision_scores(double retrieve, double no_retrieve, double cont) {
    return {{"[Retrieve]", retrieve}, {"[No Retrieve]", no_retrieve}, {"[Continue to Use Evidence]", cont}};
}

inline ScoreMap uniform_utility() {
    return {{"[Utility:1]", -1.0}, {"[Utility:2]", -1.0}, {"[Utility:3]", -1.0}, {"[Utility:4]", -1.0},
            {"[Utility:5]", -1.0}};
}

inline std::string stage(std::string_view task, std::string_view passage_id) {
    return "re:" + std::string(task) + "[\\s\\S]*Passage id: " + std::string(passage_id) + "\n";
}

// -------------------------------------------------- Retrieve scenario
//
// Query "boer commandos"-like summary ranks d2 (both terms) above d1 (one
// term); d3 shares nothing. The d2 candidate carries the hand-derived
// composite 0.9277 + 0.731 + 1.0 + 0.5 * 0.2 = 2.7587.

inline constexpr const char* kRetrieveMessage = "Tell me about the boer commandos.";
inline constexpr const char* kRetrieveSummary =
    "Summary: The user is asking about Boer military history. Question: Who were the boer commandos?";
inline constexpr const char* kD2Answer = "Commandos were volunteer militia.";
inline constexpr const char* kD1Answer = "The war involved gold mining.";

inline MockScript retrieve_script() {
    MockScript s;
    s.on_score("### Task: retrieval-decision", decision_scores(-0.1, -3.0, -3.0));
    s.on_generate("summarise the conversation history in 40-50 words", text_only(kRetrieveSummary));
    s.on_generate(stage("### Task: respond", "d2"), gen({{"Commandos were volunteer militia", -0.1}, {".", -0.05}}));
    s.on_generate(stage("### Task: respond", "d1"), gen({{"The war involved gold mining", -1.0}, {".", -1.0}}));
    s.on_score(stage("### Task: relevance", "d2"), {{"[Relevant]", -0.5}, {"[Non Relevant]", -1.5}});
    s.on_score(stage("### Task: relevance", "d1"), {{"[Relevant]", -1.5}, {"[Non Relevant]", -0.5}});
    s.on_score(stage("### Task: groundedness", "d2"), {{"[Fully supported]", 0.0}});
    s.on_score(stage("### Task: groundedness", "d1"), {{"[Partially supported]", 0.0}});
    s.on_score("### Task: utility", uniform_utility());
    return s;
}

inline constexpr double kD2Composite = 0.92774348632855286 + 0.7310585786300049 + 1.0 + 0.5 * 0.2;

// ------------------------------------------------- Continue scenario
//
// The answer to the follow-up lives in the passage attached to turn 1, and
// the script favors [Continue to Use Evidence] whenever prior passages are
// shown.

inline Conversation continue_history() {
    return Conversation{"fig1",
                        {user("Where did the Olmec civilization originate?"),
                         assistant("The Olmec civilization originated in the tropical lowlands.", {"d3"})}};
}

inline constexpr const char* kContinueMessage = "How old are those origins?";
inline constexpr const char* kD3Answer = "Its origins go back over three thousand years.";

inline MockScript continue_script() {
    MockScript s;
    s.on_score("re:### Task: retrieval-decision[\\s\\S]*### Previously Retrieved Passages",
               decision_scores(-2.0, -3.0, -0.1));
    s.on_score("### Task: retrieval-decision", decision_scores(-1.0, -2.0, -0.1));
    s.on_generate(stage("### Task: respond", "d3"),
                  gen({{"Its origins go back", -0.2}, {" over three thousand years", -0.3}, {".", -0.01}}));
    s.on_score(stage("### Task: relevance", "d3"), {{"[Relevant]", -0.05}, {"[Non Relevant]", -3.0}});
    s.on_score(stage("### Task: groundedness", "d3"), {{"[Fully supported]", -0.1}, {"[Partially supported]", -2.5}});
    s.on_score("### Task: utility", uniform_utility());
    return s;
}

// ---------------------------------------------------- NoRetrieve path

inline constexpr const char* kNoRetrieveMessage = "Write a two-line poem about the sea.";

inline MockScript no_retrieve_script() {
    MockScript s;
    s.on_score("### Task: retrieval-decision", decision_scores(-3.0, -0.1, -3.0));
    s.on_generate("### Task: respond", gen({{"Waves fold silver light,", -0.3}, {" tides keep time all night.", -0.4}}));
    s.on_score("### Task: utility", {{"[Utility:5]", -0.2}, {"[Utility:4]", -1.8}});
    return s;
}

// ---------------------------------------------------- planted benchmark
//
// Gold passages share terms only with the first user turn; the final turns
// are phrased with words no passage contains.

inline Corpus planted_corpus() {
    Corpus c;
    c.add({"g1", "", "zanzibar clove plantations shaped the island economy"});
    c.add({"g2", "", "olmec jade carvings depict jaguar deities"});
    c.add({"x1", "", "weather forecast brings rain to the coast"});
    c.add({"x2", "", "football league results from the weekend"});
    c.add({"x3", "", "recipe for lemon cake with icing"});
    c.add({"x4", "", "stock markets rallied on strong earnings"});
    c.add({"x5", "", "new smartphone cameras improve low light photos"});
    c.add({"x6", "", "marathon runners train through winter"});
    c.add({"x7", "", "museum opens a modern sculpture wing"});
    return c;
}

inline std::vector<Conversation> planted_benchmark() {
    return {
        Conversation{"c1",
                     {user("Tell me about zanzibar clove plantations."),
                      assistant("Cloves were grown widely across Zanzibar."),
                      gold_user("What happened later?", {"g1"}, "What happened to zanzibar clove plantations later?")}},
        Conversation{"c2",
                     {user("What do olmec jade carvings show?"),
                      assistant("Many show jaguar figures."),
                      gold_user("Why was this so?", {"g2"}, "Why did olmec jade carvings show jaguars?")}},
    };
}

inline MockScript planted_script() {
    MockScript s;
    s.on_generate("re:summarise the conversation history[\\s\\S]*zanzibar clove",
                  text_only("Summary: The user asked about zanzibar clove plantations and their role. "
                            "Question: What happened to the zanzibar clove plantations later?"));
    s.on_generate("re:summarise the conversation history[\\s\\S]*olmec jade",
                  text_only("Summary: The user asked what olmec jade carvings show. "
                            "Question: Why do olmec jade carvings show jaguar deities?"));
    s.on_generate("re:### Task: rewrite[\\s\\S]*zanzibar", text_only("What happened next?"));
    s.on_generate("re:### Task: rewrite[\\s\\S]*olmec", text_only("Why was this so?"));
    return s;
}

// -------------------------------------------------- summarization exemplar

inline Conversation cooper_conversation() {
    return Conversation{
        "cooper",
        {user("What was the first job John Sherman Cooper held?"),
         assistant("He was admitted to the bar by examination in 1928 and opened a legal practice in Somerset."),
         user("What was the first office John Sherman Cooper ran for?"),
         assistant("After being urged into politics by his uncle, Judge Roscoe Tartar, Cooper ran unopposed for a seat "
                   "in the Kentucky House of Representatives as a Republican in 1927."),
         user("How long was John Sherman Cooper in office in the Kentucky House of Representatives?"),
         assistant("Member of the Kentucky House of Representatives from the 41st district. In office, 1928–1930"),
         user("Did he run for another political office after that?")}};
}

inline constexpr const char* kCooperSummary =
    "John Sherman Cooper started his career as a lawyer in Somerset after being admitted to the bar in 1928. He was "
    "later encouraged by his uncle, Judge Roscoe Tartar, to join politics and subsequently ran for a seat in the "
    "Kentucky House of Representatives as a Republican candidate in 1927. He went unopposed and served in office "
    "from 1928-1930.";
inline constexpr const char* kCooperQuestion =
    "Did John Sherman Cooper pursue any other political offices after his term in the Kentucky House of "
    "Representatives?";

// ------------------------------------------------------------- helpers

/// Retriever wrapper counting calls.
class CountingRetriever final : public Retriever {
public:
    explicit CountingRetriever(const Retriever& inner) : inner_(inner) {}
    RankedList retrieve(std::string_view q, std::size_t k) const override {
        ++calls;
        return inner_.retrieve(q, k);
    }
    std::string name() const override { return "counting:" + inner_.name(); }

    mutable std::atomic<std::size_t> calls{0};

private:
    const Retriever& inner_;
};

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "smrag") {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

    std::filesystem::path write(const std::string& name, const std::string& content) const {
        const auto p = path_ / name;
        std::ofstream(p, std::ios::binary) << content;
        return p;
    }

private:
    std::filesystem::path path_;
};

inline std::string conversations_jsonl(const std::vector<Conversation>& convs) {
    std::string out;
    for (const auto& c : convs) out += dump_line(json(c)) + "\n";
    return out;
}

}  // namespace fx
