#include <atomic>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "forge/entry.hpp"
#include "forge/errors.hpp"
#include "forge/judge.hpp"
#include "forge/prompts.hpp"
#include "forge/provider.hpp"
#include "forge/synthgen.hpp"
#include "test_support.hpp"

using namespace forge;
using forge::testing::make_mcq;
using forge::testing::make_qa;
using forge::testing::make_summary;
using forge::testing::TempDir;

namespace {

FunctionProvider canned(std::string reply, std::atomic<int>* calls = nullptr) {
    return FunctionProvider("mock-gen", [reply = std::move(reply), calls](const ChatRequest&) {
        if (calls) ++*calls;
        return reply;
    });
}

std::string user_text(const ChatRequest& r) {
    return r.messages.back().content;
}

}  // namespace

// --- entries ---

TEST(Entry, ValidationInvariants) {
    EXPECT_NO_THROW(validate(make_qa("What is JCL?", "Job Control Language.")));
    auto mcq = make_mcq("Which verb moves data?", {"MOVE", "ADD", "STOP", "GOBACK"}, 'A');
    EXPECT_NO_THROW(validate(mcq));
    mcq.answer = "E";
    EXPECT_THROW(validate(mcq), ValidationError);
    auto qa = make_qa("q?", "");
    EXPECT_THROW(validate(qa), ValidationError);
    auto gen = make_qa("q?", "a");
    gen.provenance = Provenance::generated("");
    EXPECT_THROW(validate(gen), ValidationError);
}

TEST(Entry, DatasetRecordWithThreeOptionsRejected) {
    nlohmann::json rec{{"question", "q"}, {"options", {"a", "b", "c"}}, {"answer", "A"}};
    EXPECT_THROW(entry_from_dataset_json(Task::mcq, rec), ValidationError);
}

TEST(Entry, JsonRoundTrip) {
    auto e = make_mcq("Which?", {"w", "x", "y", "z"}, 'C');
    e.provenance = Provenance::generated("m1", std::string("VSAM"));
    e.judge_score = 8;
    e.judge_rationale = "fine";
    e.status = Status::fixed;
    e.status_reason = "typo";
    EXPECT_EQ(entry_from_json(to_json(e)), e);
    auto d = entry_from_dataset_json(Task::mcq, to_dataset_json(e));
    EXPECT_EQ(d.question, e.question);
    EXPECT_EQ(d.options, e.options);
    EXPECT_EQ(d.answer, e.answer);
}

TEST(Entry, IdDependsOnContentOnly) {
    auto a = make_qa("What is a copybook?", "A shared source fragment.");
    auto b = a;
    b.status = Status::accepted;
    b.judge_score = 3;
    EXPECT_EQ(compute_entry_id(a), compute_entry_id(b));
    b.answer += " Included with COPY.";
    EXPECT_NE(compute_entry_id(a), compute_entry_id(b));
    EXPECT_EQ(a.id.size(), 16u);
}

TEST(Seed, EmptyFileGivesNoEntries) {
    TempDir tmp;
    forge::testing::write_file(tmp / "seed.jsonl", "");
    EXPECT_TRUE(load_seed(tmp / "seed.jsonl").empty());
}

TEST(Seed, ThreeHundredRecordsAllAccepted) {
    TempDir tmp;
    std::ofstream out(tmp / "seed.jsonl");
    for (int i = 0; i < 300; ++i) {
        nlohmann::json j;
        switch (i % 3) {
            case 0: j = {{"task", "qa"}, {"question", "Question " + std::to_string(i)}, {"answer", "Answer"}}; break;
            case 1:
                j = {{"task", "mcq"}, {"question", "Pick " + std::to_string(i)},
                     {"options", {{"A", "a"}, {"B", "b"}, {"C", "c"}, {"D", "d"}}}, {"answer", "B"}};
                break;
            default:
                j = {{"task", "summarization"}, {"source", forge::testing::cobol_paragraph("P" + std::to_string(i), i)},
                     {"summary", "Moves a value and counts."}};
        }
        out << j.dump() << "\n";
    }
    out.close();
    auto seeds = load_seed(tmp / "seed.jsonl");
    ASSERT_EQ(seeds.size(), 300u);
    for (const auto& e : seeds) {
        EXPECT_EQ(e.status, Status::accepted);
        EXPECT_TRUE(e.provenance.seed);
        EXPECT_EQ(e.id, compute_entry_id(e));
    }
}

TEST(Seed, InvalidMcqRecordRejected) {
    TempDir tmp;
    forge::testing::write_file(tmp / "seed.jsonl",
                               R"({"task":"mcq","question":"q","options":["a","b","c"],"answer":"A"})" "\n");
    try {
        load_seed(tmp / "seed.jsonl");
        FAIL() << "expected a load error";
    } catch (const LoadError& e) {
        EXPECT_EQ(e.line(), 1u);
        EXPECT_NE(std::string(e.what()).find("exactly 4 options"), std::string::npos);
    }
}

// --- prompts ---

TEST(Prompts, BuiltinsPresentAndOverridable) {
    for (auto name : {prompts::kSubtopicQa, prompts::kSeedSummarization, prompts::kJudgeQuality, prompts::kEvalMcq}) {
        EXPECT_FALSE(prompts::builtin(name).empty()) << name;
    }
    EXPECT_NE(prompts::builtin(prompts::kSubtopicQa).find("[sub-topic]"), std::string_view::npos);
    EXPECT_THROW(prompts::builtin("nope"), NotFoundError);

    TempDir tmp;
    forge::testing::write_file(tmp / "eval_qa.txt", "Q: [question]");
    prompts::PromptSet set(tmp.path());
    EXPECT_EQ(set.get(prompts::kEvalQa), "Q: [question]");
    EXPECT_EQ(set.get(prompts::kEvalMcq), prompts::builtin(prompts::kEvalMcq));
    EXPECT_EQ(prompts::fill("[x] and [x] [y]", {{"[x]", "1"}, {"[y]", "[x]"}}), "1 and 1 [x]");
}

// --- JSON list recovery ---

TEST(ParseList, Examples) {
    EXPECT_EQ(synthgen::parse_llm_json_list(R"([{"a":1}])").size(), 1u);
    EXPECT_EQ(synthgen::parse_llm_json_list("Sure! Here you go:\n```json\n[{\"a\":1},{\"b\":2}]\n```").size(), 2u);
    std::string diag;
    EXPECT_TRUE(synthgen::parse_llm_json_list("no list here", &diag).empty());
    EXPECT_FALSE(diag.empty());
}

TEST(ParseList, NeverThrowsAndOnlyObjects) {
    std::mt19937_64 rng(4);
    const std::string alphabet = "[]{}\",:ab 1\n`";
    for (int i = 0; i < 2000; ++i) {
        std::string s;
        auto len = rng() % 40;
        for (std::size_t k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
        std::vector<nlohmann::json> out;
        EXPECT_NO_THROW(out = synthgen::parse_llm_json_list(s)) << s;
        for (const auto& r : out) EXPECT_TRUE(r.is_object());
    }
    EXPECT_EQ(synthgen::parse_llm_json_list(R"([1, {"a":1}, "x"])").size(), 1u);
}

// --- generation ---

TEST(Subtopics, FixedTopicsPersisted) {
    TempDir tmp;
    auto p = canned(R"(["JCL", "VSAM", "CICS", "DB2", "IMS"])");
    auto r = synthgen::generate_subtopics(p, 5, tmp / "topics.json");
    ASSERT_EQ(r.topics.size(), 5u);
    auto back = synthgen::load_subtopics(tmp / "topics.json");
    ASSERT_EQ(back.size(), 5u);
    EXPECT_EQ(back[3].name, "DB2");
    EXPECT_EQ(back[3].parent_domain, synthgen::kParentDomain);
}

TEST(Subtopics, CaseInsensitiveDuplicatesCollapse) {
    TempDir tmp;
    auto p = canned(R"(["JCL", "jcl"])");
    auto r = synthgen::generate_subtopics(p, 5, tmp / "topics.json");
    EXPECT_EQ(r.topics.size(), 1u);
    EXPECT_EQ(r.shortfall, 4u);
}

TEST(Subtopics, ZeroTargetMakesNoCall) {
    TempDir tmp;
    std::atomic<int> calls{0};
    auto p = canned("[]", &calls);
    EXPECT_TRUE(synthgen::generate_subtopics(p, 0, tmp / "t.json").topics.empty());
    EXPECT_EQ(calls.load(), 0);
}

TEST(FromSubtopic, Examples) {
    synthgen::SubTopic topic{"COBOL file handling"};
    auto one = canned(R"([{"question":"q","answer":"a"}])");
    auto r1 = synthgen::generate_from_subtopic(topic, one);
    ASSERT_EQ(r1.entries.size(), 1u);
    EXPECT_EQ(r1.entries[0].status, Status::pending);
    EXPECT_EQ(r1.entries[0].task, Task::qa);
    EXPECT_EQ(r1.entries[0].provenance.model, "mock-gen");
    EXPECT_EQ(r1.entries[0].provenance.sub_topic, "COBOL file handling");

    auto prose = canned("Here are the pairs you asked for:\n[{\"question\":\"q1\",\"answer\":\"a1\"}]\nEnjoy.");
    EXPECT_EQ(synthgen::generate_from_subtopic(topic, prose).entries.size(), 1u);

    auto partial = canned(R"([{"question":"q1","answer":"a1"},{"question":"q2"}])");
    auto r3 = synthgen::generate_from_subtopic(topic, partial);
    EXPECT_EQ(r3.entries.size(), 1u);
    EXPECT_EQ(r3.skipped.size(), 1u);
}

TEST(FromSubtopic, PromptCarriesTopicVerbatim) {
    std::string seen;
    FunctionProvider p("m", [&](const ChatRequest& r) {
        seen = user_text(r);
        return std::string("[]");
    });
    synthgen::generate_from_subtopic({"JCL job scheduling"}, p);
    EXPECT_EQ(seen, prompts::fill(prompts::builtin(prompts::kSubtopicQa), {{"[sub-topic]", "JCL job scheduling"}}));
}

TEST(McqFromSubtopic, InvalidRecordsSkipped) {
    auto p = canned(R"([{"question":"Which?","options":{"A":"a","B":"b","C":"c","D":"d"},"answer":"B"},
                        {"question":"Bad","options":{"A":"a","B":"b","C":"c"},"answer":"A"},
                        {"question":"Bad label","options":["a","b","c","d"],"answer":"E"}])");
    auto r = synthgen::generate_mcq_from_subtopic({"CICS"}, p);
    ASSERT_EQ(r.entries.size(), 1u);
    EXPECT_EQ(r.entries[0].answer, "B");
    EXPECT_EQ(r.skipped.size(), 2u);
}

TEST(FromSeed, Examples) {
    auto seed = make_summary(forge::testing::cobol_paragraph("CALC-TAX", 1), "Computes the tax.");
    nlohmann::json three = nlohmann::json::array();
    for (int i = 2; i < 5; ++i) {
        three.push_back({{"source", forge::testing::cobol_paragraph("P" + std::to_string(i), i)}, {"summary", "Moves."}});
    }
    auto three_pairs = canned(three.dump());
    auto r = synthgen::generate_from_seed(seed, three_pairs);
    EXPECT_EQ(r.entries.size(), 3u);
    for (const auto& e : r.entries) {
        EXPECT_EQ(e.task, Task::summarization);
        EXPECT_EQ(e.status, Status::pending);
        EXPECT_FALSE(e.provenance.seed);
    }

    auto empty_src = canned(R"([{"source":"","summary":"x"}])");
    EXPECT_EQ(synthgen::generate_from_seed(seed, empty_src).entries.size(), 0u);

    nlohmann::json copy = nlohmann::json::array({{{"source", seed.source}, {"summary", seed.summary}}});
    auto cp = canned(copy.dump());
    auto rc = synthgen::generate_from_seed(seed, cp);
    EXPECT_TRUE(rc.entries.empty());
    ASSERT_EQ(rc.skipped.size(), 1u);
    EXPECT_EQ(rc.skipped[0].reason, "trivial copy of the seed");
}

TEST(CachedProvider, RerunIssuesNoDuplicateCalls) {
    TempDir tmp;
    std::atomic<int> calls{0};
    auto inner = std::make_shared<FunctionProvider>("m", [&](const ChatRequest& r) {
        ++calls;
        return "[{\"question\":\"" + std::to_string(r.prompt_hash().size()) + "\",\"answer\":\"a\"}]";
    });
    std::vector<synthgen::SubTopic> topics{{"JCL"}, {"VSAM"}, {"CICS"}};
    std::vector<InstructionEntry> first, second;
    {
        CachedProvider cached(inner, tmp / "cache.jsonl");
        for (const auto& t : topics) {
            auto r = synthgen::generate_from_subtopic(t, cached);
            first.insert(first.end(), r.entries.begin(), r.entries.end());
        }
    }
    EXPECT_EQ(calls.load(), 3);
    CachedProvider again(inner, tmp / "cache.jsonl");
    for (const auto& t : topics) {
        auto r = synthgen::generate_from_subtopic(t, again);
        second.insert(second.end(), r.entries.begin(), r.entries.end());
    }
    EXPECT_EQ(calls.load(), 3);
    EXPECT_EQ(again.hits(), 3u);
    EXPECT_EQ(first, second);
}

// --- judge ---

TEST(TrailingList, Examples) {
    EXPECT_EQ(judge::parse_trailing_int_list("... [8, 9, 3]"), (std::vector<int>{8, 9, 3}));
    EXPECT_EQ(judge::parse_trailing_int_list("scores [4,5] then revised [6,7]"), (std::vector<int>{6, 7}));
    EXPECT_EQ(judge::parse_trailing_int_list("... [0, 11]"), std::nullopt);
    EXPECT_EQ(judge::parse_trailing_int_list("no list"), std::nullopt);
    EXPECT_EQ(judge::parse_trailing_int_list("[1, 2] and a note [see above]"), (std::vector<int>{1, 2}));
}

TEST(ScoreBatch, Examples) {
    std::vector<InstructionEntry> three{make_qa("q1?", "a1"), make_qa("q2?", "a2"), make_qa("q3?", "a3")};
    auto ok = canned("Reasoning...\n[8, 9, 3]");
    auto r = judge::score_batch(three, ok);
    ASSERT_FALSE(r.failed);
    ASSERT_EQ(r.scores.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.scores[i].entry_id, three[i].id);
    EXPECT_EQ(r.scores[0].score, 8);
    EXPECT_EQ(r.scores[1].score, 9);
    EXPECT_EQ(r.scores[2].score, 3);

    auto short_list = canned("[8, 9]");
    auto f = judge::score_batch(three, short_list);
    EXPECT_TRUE(f.failed);
    EXPECT_TRUE(f.scores.empty());

    std::vector<InstructionEntry> two{three[0], three[1]};
    auto prose = canned("The first pair is excellent. The second is weak.\nFinal scores: [10, 1]");
    auto p = judge::score_batch(two, prose);
    ASSERT_EQ(p.scores.size(), 2u);
    EXPECT_EQ(p.scores[0].score, 10);
    EXPECT_EQ(p.scores[1].score, 1);

    FunctionProvider boom("m", [](const ChatRequest&) -> std::string { throw ProviderError("down", 503); });
    EXPECT_TRUE(judge::score_batch(two, boom).failed);
    EXPECT_THROW(judge::score_batch(std::vector<InstructionEntry>{}, ok), ParameterError);
}

TEST(ScoreBatch, PromptIsQualityPromptThenEntries) {
    std::vector<InstructionEntry> one{make_qa("What is JCL?", "Job Control Language.")};
    std::string seen;
    FunctionProvider p("m", [&](const ChatRequest& r) {
        seen = user_text(r);
        return std::string("[7]");
    });
    judge::score_batch(one, p);
    auto quality = std::string(prompts::builtin(prompts::kJudgeQuality));
    EXPECT_EQ(seen.substr(0, quality.size()), quality);
    EXPECT_NE(seen.find("Question: What is JCL?\nAnswer: Job Control Language."), std::string::npos);
}

TEST(ScoreEntries, DeterministicAcrossRuns) {
    std::vector<InstructionEntry> entries;
    for (int i = 0; i < 35; ++i) entries.push_back(make_qa("q" + std::to_string(i) + "?", "a"));
    FunctionProvider p("judge", [](const ChatRequest& r) {
        auto text = user_text(r);
        std::string list = "[";
        std::size_t n = 0;
        for (std::size_t pos = 0; (pos = text.find("Question: q", pos)) != std::string::npos; ++pos) {
            auto num = std::stoi(text.substr(pos + 11));
            list += (n++ ? ", " : "") + std::to_string(1 + num % 10);
        }
        return list + "]";
    });
    judge::JudgeSettings s;
    s.batch_size = 10;
    auto a = judge::score_entries(entries, p, s, 4);
    auto b = judge::score_entries(entries, p, s, 2);
    ASSERT_EQ(a.size(), 4u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_FALSE(a[i].failed);
        ASSERT_EQ(a[i].scores.size(), b[i].scores.size());
        for (std::size_t k = 0; k < a[i].scores.size(); ++k) EXPECT_EQ(a[i].scores[k].score, b[i].scores[k].score);
    }
    EXPECT_EQ(a[3].scores.size(), 5u);
    EXPECT_EQ(a[1].scores[0].score, 1 + 10 % 10);
}

TEST(Pairwise, SwapDePermutation) {
    auto a = make_qa("qa?", "x"), b = make_qa("qb?", "y");
    auto always_a = canned("After comparing both, the better one is A");
    EXPECT_EQ(judge::pairwise_rank(a, b, always_a, false).winner, judge::Winner::a);
    auto swapped = judge::pairwise_rank(a, b, always_a, true);
    EXPECT_EQ(swapped.winner, judge::Winner::b);
    EXPECT_TRUE(swapped.swapped);

    auto prose = canned("Both are fine, honestly.");
    auto v = judge::pairwise_rank(a, b, prose, false);
    EXPECT_EQ(v.winner, judge::Winner::tie);
    EXPECT_TRUE(v.flagged);

    EXPECT_THROW(judge::pairwise_rank(a, a, always_a, false), ParameterError);
    auto s = make_summary(forge::testing::cobol_paragraph("P", 1), "x");
    EXPECT_THROW(judge::pairwise_rank(a, s, always_a, false), ParameterError);
}

TEST(Pairwise, PositionBiasCancelsUnderRandomSwap) {
    auto a = make_qa("qa?", "x"), b = make_qa("qb?", "y");
    auto always_a = canned("A");
    std::mt19937_64 rng(2024);
    int a_wins = 0;
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) a_wins += judge::pairwise_rank(a, b, always_a, rng).winner == judge::Winner::a;
    EXPECT_NEAR(a_wins / double(trials), 0.5, 0.05);
}

TEST(ScoreFilter, Examples) {
    std::vector<InstructionEntry> es{make_qa("q1?", "a"), make_qa("q2?", "a"), make_qa("q3?", "a")};
    std::vector<judge::JudgeScore> scores{{es[0].id, 8, "j", {}}, {es[1].id, 9, "j", {}}, {es[2].id, 3, "j", {}}};
    EXPECT_EQ(judge::apply_score_filter(es, scores, 1).kept.size(), 3u);
    EXPECT_EQ(judge::apply_score_filter(es, scores, 11).rejected.size(), 3u);
    auto r = judge::apply_score_filter(es, scores, 7);
    EXPECT_EQ(r.kept.size(), 2u);
    ASSERT_EQ(r.rejected.size(), 1u);
    EXPECT_EQ(r.rejected[0].id, es[2].id);
    EXPECT_EQ(r.rejected[0].status, Status::deleted);
    EXPECT_EQ(r.rejected[0].status_reason, "low_judge_score");
}

TEST(ScoreFilter, Conservation) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<InstructionEntry> es;
        std::vector<judge::JudgeScore> scores;
        auto n = 1 + rng() % 30;
        for (std::size_t i = 0; i < n; ++i) {
            es.push_back(make_qa("q" + std::to_string(trial) + "-" + std::to_string(i), "a"));
            scores.push_back({es.back().id, static_cast<int>(1 + rng() % 10), "j", {}});
        }
        int min_score = static_cast<int>(1 + rng() % 10);
        auto r = judge::apply_score_filter(es, scores, min_score);
        EXPECT_EQ(r.kept.size() + r.rejected.size(), es.size());
        std::set<std::string> kept_ids;
        for (const auto& e : r.kept) kept_ids.insert(e.id);
        for (const auto& e : r.rejected) EXPECT_FALSE(kept_ids.count(e.id));
    }
}
