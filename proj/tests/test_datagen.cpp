#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "smrag/datagen.hpp"

using namespace smrag;
using fx::assistant;
using fx::user;

namespace {

TaskInstance full_instance() {
    TaskInstance t;
    t.conversation = fx::cooper_conversation();
    t.evidence = Passage{"p1", "John Sherman Cooper", "Cooper served in the United States Senate."};
    t.response = "Yes, he later ran for the United States Senate.";
    return t;
}

std::vector<CriticTask> labeled_tasks() {
    return {CriticTask::retrieval2, CriticTask::retrieval3, CriticTask::relevance,
            CriticTask::groundedness, CriticTask::utility, CriticTask::judge_eval};
}

}  // namespace

TEST_CASE("rendered prompts contain the verbatim template anchors") {
    const TaskInstance inst = full_instance();
    const std::vector<std::pair<CriticTask, std::string>> anchors = {
        {CriticTask::retrieval2, "make a judgment on whether finding some external documents from the web"},
        {CriticTask::retrieval3, "respond with [Continue to Use Evidence]"},
        {CriticTask::relevance, "determine if the evidence is relevant and provides useful information"},
        {CriticTask::groundedness, "the following entailment scale"},
        {CriticTask::utility, "call this score perceived utility"},
        {CriticTask::summarization, "summarise the conversation history in 40-50 words and ask a question"},
        {CriticTask::judge_eval, "overall score on a scale of 0 to 5"},
    };
    for (const auto& [task, anchor] : anchors) {
        CAPTURE(to_string(task));
        const std::string p = render_prompt(task, inst);
        CHECK(p.find(anchor) != std::string::npos);
        CHECK(p.find("Did he run for another political office after that?") != std::string::npos);
    }
}

TEST_CASE("render_prompt is pure and the hash tracks the template") {
    const TaskInstance inst = full_instance();
    for (auto task : labeled_tasks()) CHECK(render_prompt(task, inst) == render_prompt(task, inst));
    CHECK(template_hash(CriticTask::relevance) == template_hash(CriticTask::relevance));
    CHECK(template_hash(CriticTask::relevance) != template_hash(CriticTask::utility));
    CHECK(template_hash(CriticTask::relevance).size() == 16);
}

TEST_CASE("missing fields name the field and the task") {
    TaskInstance t;
    t.conversation = fx::cooper_conversation();
    CHECK_THROWS_WITH_AS(render_prompt(CriticTask::groundedness, t),
                         doctest::Contains("evidence required for groundedness"), DataError);
    t.evidence = Passage{"p", "", "x"};
    CHECK_THROWS_WITH_AS(render_prompt(CriticTask::groundedness, t), doctest::Contains("response"), DataError);
    CHECK_THROWS_WITH_AS(render_prompt(CriticTask::utility, t), doctest::Contains("utility"), DataError);
    CHECK_NOTHROW(render_prompt(CriticTask::retrieval2, t));
    CHECK_THROWS_AS(render_prompt(CriticTask::retrieval2, TaskInstance{}), DataError);
}

TEST_CASE("judge replies in the exemplar formats parse") {
    CHECK(parse_judge_label(CriticTask::retrieval2, "GPT-4-Rating: [Retrieval]") == "[Retrieve]");
    CHECK(parse_judge_label(CriticTask::retrieval2, "Rating: [No Retrieval]") == "[No Retrieve]");
    CHECK(parse_judge_label(CriticTask::utility, "Perceived utility: 2\nExplanation: the response is vague.") ==
          "[Utility:2]");
    CHECK(parse_judge_label(CriticTask::relevance, "Explanation: off topic.\nRating: [Irrelevant]") ==
          "[Non Relevant]");
    CHECK(parse_judge_label(CriticTask::judge_eval, "Score: 4") == "4");
    try {
        parse_judge_label(CriticTask::retrieval2, "I cannot decide.");
        FAIL("expected a parse error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("I cannot decide.") != std::string::npos);
    }
}

TEST_CASE("answer lines win over labels mentioned elsewhere") {
    const std::string reply = "The passage is [Relevant] to an earlier question only.\nRating: [Irrelevant]";
    CHECK(parse_judge_label(CriticTask::relevance, reply) == "[Non Relevant]");
}

TEST_CASE("formatting then parsing is the identity on every alphabet member") {
    for (auto task : labeled_tasks()) {
        const auto alphabet = label_alphabet(task);
        CHECK_FALSE(alphabet.empty());
        for (const auto& label : alphabet) {
            CAPTURE(label);
            CHECK(parse_judge_label(task, format_label(task, label)) == label);
        }
    }
    CHECK(label_alphabet(CriticTask::summarization).empty());
    CHECK_THROWS_AS(format_label(CriticTask::relevance, "[Retrieve]"), DataError);
}

TEST_CASE("69/31 scripted judge reproduces the retrieval percentages") {
    MockScript s;
    s.on_generate("want-lookup", fx::text_only("Explanation: needs facts.\nGPT-4-Rating: [Retrieval]"));
    s.on_generate("no-lookup", fx::text_only("Explanation: chit-chat.\nGPT-4-Rating: [No Retrieval]"));
    const ScriptedBackend judge(s, "scripted-judge");
    std::vector<TaskInstance> instances;
    for (int i = 0; i < 100; ++i) {
        TaskInstance t;
        t.conversation = Conversation{"c" + std::to_string(i),
                                      {user((i < 69 ? "want-lookup " : "no-lookup ") + std::to_string(i))}};
        instances.push_back(t);
    }
    const auto ds = collect_labels(judge, CriticTask::retrieval2, instances, CollectOptions{8, 64, 0.0});
    REQUIRE(ds.records.size() == 100);
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(ds.records[i].instance.conversation.id == "c" + std::to_string(i));
        CHECK(ds.records[i].template_hash == template_hash(CriticTask::retrieval2));
        CHECK(ds.records[i].judge == "scripted-judge");
    }
    CHECK(ds.stats.labeled == 100);
    REQUIRE(ds.stats.labels.size() == 2);
    CHECK(ds.stats.labels[0].label == "[Retrieve]");
    CHECK(ds.stats.labels[0].percentage == 69.0);
    CHECK(ds.stats.labels[1].label == "[No Retrieve]");
    CHECK(ds.stats.labels[1].percentage == 31.0);
    CHECK(ds.stats.to_table().find("69%") != std::string::npos);
}

TEST_CASE("no instances yields an empty dataset") {
    const ScriptedBackend judge(MockScript{});
    const auto ds = collect_labels(judge, CriticTask::relevance, {});
    CHECK(ds.records.empty());
    CHECK(ds.stats.instances == 0);
    CHECK(ds.stats.labels.empty());
}

TEST_CASE("an unparseable reply is kept and marked failed") {
    MockScript s;
    s.on_generate("broken-7", fx::text_only("I cannot decide."));
    s.on_generate("instance", fx::text_only("Rating: [Relevant]"));
    const ScriptedBackend judge(s);
    std::vector<TaskInstance> instances;
    for (int i = 0; i < 10; ++i) {
        TaskInstance t = full_instance();
        t.conversation.turns.back().text = (i == 7 ? "broken-7 instance " : "instance ") + std::to_string(i);
        instances.push_back(t);
    }
    const auto ds = collect_labels(judge, CriticTask::relevance, instances);
    REQUIRE(ds.records.size() == 10);
    CHECK_FALSE(ds.records[7].label.has_value());
    CHECK(ds.records[7].failure.has_value());
    CHECK(ds.records[7].raw_judge_output == "I cannot decide.");
    CHECK(ds.stats.labeled == 9);
    CHECK(ds.stats.failed == 1);
    CHECK(ds.stats.labels[0].percentage == 100.0);
}

TEST_CASE("a backend failure aborts collection and keeps finished records") {
    MockScript s;
    s.on_generate("instance 0", fx::text_only("Rating: [Relevant]"));
    s.on_generate("instance 1", fx::text_only("Rating: [Irrelevant]"));
    const ScriptedBackend judge(s);
    std::vector<TaskInstance> instances;
    for (int i = 0; i < 4; ++i) {
        TaskInstance t = full_instance();
        t.conversation.turns.back().text = "instance " + std::to_string(i);
        instances.push_back(t);
    }
    try {
        collect_labels(judge, CriticTask::relevance, instances, CollectOptions{2, 64, 0.0});
        FAIL("expected abort");
    } catch (const CollectionAborted& e) {
        CHECK(e.kind() == ErrorKind::backend);
        CHECK(e.partial().records.size() == 2);
    }
}

TEST_CASE("summarization has no labels to collect") {
    const ScriptedBackend judge(MockScript{});
    CHECK_THROWS_AS(collect_labels(judge, CriticTask::summarization, {full_instance()}), UsageError);
}

TEST_CASE("dataset records carry provenance and read back") {
    MockScript s;
    s.on_generate("instance", fx::text_only("Rating: [Relevant]"));
    const ScriptedBackend judge(s, "j");
    TaskInstance t = full_instance();
    t.source = "Q";
    t.conversation.turns.back().text = "instance";
    const auto ds = collect_labels(judge, CriticTask::relevance, {t});
    const json rec = to_json_record(ds.records[0]);
    CHECK(rec["template_hash"] == template_hash(CriticTask::relevance));
    CHECK(rec["judge"] == "j");
    CHECK(rec["label"] == "[Relevant]");
    CHECK(task_instance_from_json(rec) == t);
}

TEST_CASE("task names") {
    for (auto task : labeled_tasks()) CHECK(critic_task_from_string(to_string(task)) == task);
    CHECK_THROWS_AS(critic_task_from_string("nope"), DataError);
}
