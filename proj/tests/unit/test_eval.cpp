#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "forge/errors.hpp"
#include "forge/evalharness.hpp"
#include "forge/metrics.hpp"
#include "forge/prompts.hpp"
#include "forge/provider.hpp"
#include "forge/text.hpp"
#include "test_support.hpp"

using namespace forge;
using namespace forge::eval;
using forge::testing::make_mcq;
using forge::testing::make_qa;
using forge::testing::make_summary;
using forge::testing::TempDir;

namespace {

nlohmann::json fixture(const std::string& name) {
    std::ifstream in(std::string(FORGE_FIXTURE_DIR) + "/" + name);
    return nlohmann::json::parse(in);
}

Tokens tok(std::string_view s) { return text::metric_tokens(s); }

double score(const std::string& metric, std::string_view hyp, std::string_view ref) {
    const auto h = tok(hyp);
    const auto r = tok(ref);
    if (metric == "bleu4") return bleu4(h, r);
    if (metric == "rouge_l") return rouge_l(h, r);
    if (metric == "meteor") return meteor(h, r);
    if (metric == "token_f1") return token_f1(h, r);
    if (metric == "map") return average_precision(h, r);
    throw std::runtime_error("unknown metric " + metric);
}

// Replies with the reference for whichever prompt it is asked.
FunctionProvider lookup_endpoint(std::map<std::string, std::string> replies) {
    return FunctionProvider("echo", [replies = std::move(replies)](const ChatRequest& r) {
        auto it = replies.find(r.messages.back().content);
        return it == replies.end() ? std::string() : it->second;
    });
}

// One-hot vector per distinct whitespace token.
class OneHotEmbedder : public Embedder {
public:
    std::vector<std::vector<double>> embed(std::string_view s) override {
        std::vector<std::vector<double>> out;
        std::istringstream in{std::string(s)};
        std::string w;
        while (in >> w) {
            std::vector<double> v(16, 0.0);
            v[index(w)] = 1.0;
            out.push_back(v);
        }
        return out;
    }

private:
    std::size_t index(const std::string& w) {
        std::lock_guard lock(mu_);
        return vocab_.emplace(w, vocab_.size()).first->second;
    }
    std::mutex mu_;
    std::map<std::string, std::size_t> vocab_;
};

std::vector<InstructionEntry> mcq_set(std::size_t n) {
    std::vector<InstructionEntry> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(make_mcq("Which register holds item " + std::to_string(i) + "?", {"R1", "R2", "R3", "R4"},
                               static_cast<char>('A' + i % 4)));
    }
    return out;
}

}  // namespace

// --- metric goldens ---

TEST(Metrics, HandDerivedGoldens) {
    const auto g = fixture("metric_goldens.json");
    std::size_t checked = 0;
    for (const auto& [metric, cases] : g.items()) {
        for (const auto& c : cases) {
            const auto hyp = c.at("hyp").get<std::string>();
            const auto ref = c.at("ref").get<std::string>();
            EXPECT_NEAR(score(metric, hyp, ref), c.at("value").get<double>(), 1e-9)
                << metric << " hyp='" << hyp << "' ref='" << ref << "' (" << c.at("derivation").get<std::string>() << ")";
            ++checked;
        }
    }
    EXPECT_GE(checked, 20u);
}

TEST(Metrics, BleuWorkedExample) {
    // p = 5/6, 3/5, 1/4, 1/4 (smoothed zero); product 1/32.
    EXPECT_NEAR(bleu4(tok("the cat sat on the mat"), tok("the cat is on the mat")), 100.0 * std::pow(1.0 / 32, 0.25), 1e-9);
}

TEST(Metrics, IdenticalTextMaximizes) {
    const std::vector<std::string> texts{"the cat sat on the mat", "MOVE WS-A TO WS-B .", "one two three four five six"};
    for (const auto& t : texts) {
        const auto x = tok(t);
        EXPECT_DOUBLE_EQ(bleu4(x, x), 100.0);
        EXPECT_DOUBLE_EQ(rouge_l(x, x), 1.0);
        EXPECT_DOUBLE_EQ(token_f1(x, x), 1.0);
        EXPECT_DOUBLE_EQ(average_precision(x, x), 1.0);
        const double m = meteor(x, x);
        EXPECT_NEAR(m, 1.0 - 0.5 / std::pow(static_cast<double>(x.size()), 3), 1e-12);
        // No other hypothesis over the same vocabulary scores higher.
        std::mt19937_64 rng(7);
        for (int trial = 0; trial < 200; ++trial) {
            Tokens h;
            std::uniform_int_distribution<std::size_t> len(1, x.size() + 2);
            std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
            for (std::size_t i = len(rng); i > 0; --i) h.push_back(x[pick(rng)]);
            EXPECT_LE(bleu4(h, x), 100.0);
            EXPECT_LE(rouge_l(h, x), 1.0);
            EXPECT_LE(meteor(h, x), m + 1e-12);
            EXPECT_LE(token_f1(h, x), 1.0);
        }
    }
}

TEST(Metrics, BoundsOnRandomInputs) {
    std::mt19937_64 rng(11);
    const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "move", "moving", "moves", "x"};
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    std::uniform_int_distribution<std::size_t> len(0, 12);
    for (int trial = 0; trial < 2000; ++trial) {
        Tokens h, r;
        for (std::size_t i = len(rng); i > 0; --i) h.push_back(vocab[pick(rng)]);
        for (std::size_t i = len(rng); i > 0; --i) r.push_back(vocab[pick(rng)]);
        const double b = bleu4(h, r);
        EXPECT_GE(b, 0.0);
        EXPECT_LE(b, 100.0);
        for (double v : {rouge_l(h, r), meteor(h, r), token_f1(h, r), average_precision(h, r)}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Metrics, OrderSensitivity) {
    const auto ref = tok("a b c d e f");
    const auto shuffled = tok("f e d c b a");
    EXPECT_DOUBLE_EQ(token_f1(shuffled, ref), 1.0);
    EXPECT_LT(bleu4(shuffled, ref), 100.0);
    EXPECT_LT(rouge_l(shuffled, ref), 1.0);
    EXPECT_LT(meteor(shuffled, ref), meteor(ref, ref));
}

TEST(Metrics, TokenF1IsMultisetBased) {
    EXPECT_DOUBLE_EQ(token_f1(tok("a a a"), tok("a")), 0.5);
    EXPECT_DOUBLE_EQ(token_f1(tok("a b"), tok("b a")), 1.0);
    EXPECT_DOUBLE_EQ(token_f1(tok("a"), tok("b")), 0.0);
}

TEST(Metrics, MonotonicUnderProgressiveCorruption) {
    const auto ref = tok("open the input file and read each record into the working storage area");
    Tokens hyp = ref;
    double prev_bleu = bleu4(hyp, ref), prev_f1 = token_f1(hyp, ref), prev_rouge = rouge_l(hyp, ref);
    for (std::size_t i = 0; i < hyp.size(); ++i) {
        hyp[i] = "zz" + std::to_string(i);
        const double b = bleu4(hyp, ref), f = token_f1(hyp, ref), r = rouge_l(hyp, ref);
        EXPECT_LE(b, prev_bleu);
        EXPECT_LE(f, prev_f1);
        EXPECT_LE(r, prev_rouge);
        prev_bleu = b;
        prev_f1 = f;
        prev_rouge = r;
    }
    EXPECT_DOUBLE_EQ(prev_f1, 0.0);
}

TEST(Metrics, MeteorUsesStems) {
    EXPECT_DOUBLE_EQ(meteor(tok("cats run"), tok("cat runs")), 0.9375);
    const auto a = meteor_align(tok("cats run"), tok("cat runs"));
    ASSERT_EQ(a.pairs.size(), 2u);
    EXPECT_EQ(a.chunks, 1u);
    // Exact matches win over stem matches.
    const auto b = meteor_align(tok("run runs"), tok("runs"));
    ASSERT_EQ(b.pairs.size(), 1u);
    EXPECT_EQ(b.pairs[0].first, 1u);
}

TEST(Metrics, MeteorParameters) {
    MeteorParams p;
    p.gamma = 0;
    EXPECT_DOUBLE_EQ(meteor(tok("a b c d"), tok("c d a b"), p), 1.0);
}

TEST(Metrics, PorterVocabulary) {
    const auto v = fixture("porter_vocabulary.json");
    ASSERT_GE(v.size(), 80u);
    for (const auto& [word, stem] : v.items()) EXPECT_EQ(porter_stem(word), stem.get<std::string>()) << word;
    EXPECT_EQ(porter_stem("a"), "a");
    EXPECT_EQ(porter_stem(""), "");
}

TEST(Metrics, BertScoreWithOrthonormalVectors) {
    OneHotEmbedder emb;
    auto same = bert_score("a b c", "a b c", &emb);
    ASSERT_TRUE(same.value);
    EXPECT_NEAR(*same.value, 1.0, 1e-12);
    auto disjoint = bert_score("a b", "x y", &emb);
    ASSERT_TRUE(disjoint.value);
    EXPECT_NEAR(*disjoint.value, 0.0, 1e-12);
    // P = (1 + 0)/2, R = (1 + 0)/2.
    auto half = bert_score("a b", "a z", &emb);
    ASSERT_TRUE(half.value);
    EXPECT_NEAR(*half.value, 0.5, 1e-12);
    const auto pr = bert_score_vectors({{1, 0}, {0, 1}}, {{1, 0}});
    EXPECT_NEAR(pr.precision, 0.5, 1e-12);
    EXPECT_NEAR(pr.recall, 1.0, 1e-12);
    EXPECT_NEAR(pr.f1, 2.0 / 3.0, 1e-12);
}

TEST(Metrics, BertScoreUnavailableWithoutEmbedder) {
    auto s = bert_score("a", "a", nullptr);
    EXPECT_FALSE(s.value);
    EXPECT_FALSE(s.diagnostic.empty());
}

TEST(Metrics, BertScoreOverHttp) {
    forge::testing::MockChatServer server([](const nlohmann::json&) { return std::string(); });
    server.set_embedder([](const std::string& text) {
        std::vector<std::vector<double>> out;
        for (char c : text) {
            if (c == ' ') continue;
            std::vector<double> v(4, 0.0);
            v[(c - 'a') % 4] = 1.0;
            out.push_back(v);
        }
        return out;
    });
    HttpEmbedder emb(server.base_url());
    auto s = bert_score("a b", "a b", &emb);
    ASSERT_TRUE(s.value);
    EXPECT_NEAR(*s.value, 1.0, 1e-12);
}

// --- choice extraction ---

TEST(Extract, Examples) {
    EXPECT_EQ(extract_choice("B"), 'B');
    EXPECT_EQ(extract_choice("The answer is (C)."), 'C');
    EXPECT_EQ(extract_choice("the answer is d"), 'D');
    EXPECT_EQ(extract_choice("A. MOVE"), 'A');
    EXPECT_EQ(extract_choice("I think D, not A"), 'D');
    EXPECT_FALSE(extract_choice("E"));
    EXPECT_FALSE(extract_choice("none of them"));
    EXPECT_FALSE(extract_choice(""));
    EXPECT_FALSE(extract_choice("BAD"));
}

// --- MCQ ---

TEST(Mcq, EchoScoresFullAccuracy) {
    const auto ds = mcq_set(40);
    const auto tmpl = prompts::builtin(prompts::kEvalMcq);
    std::map<std::string, std::string> replies;
    for (const auto& e : ds) replies[render_eval_prompt(e, tmpl)] = e.answer;
    auto ep = lookup_endpoint(replies);
    const auto r = run_mcq(ep, ds, EvalSettings{});
    EXPECT_DOUBLE_EQ(*r.aggregates.at("accuracy"), 100.0);
    EXPECT_EQ(r.examples.size(), 40u);
    for (const auto& ex : r.examples) EXPECT_FALSE(ex.flagged);
}

TEST(Mcq, UnextractableIsIncorrectAndFlagged) {
    const auto ds = mcq_set(12);
    FunctionProvider ep("e", [](const ChatRequest&) { return std::string("E"); });
    const auto r = run_mcq(ep, ds, EvalSettings{});
    EXPECT_DOUBLE_EQ(*r.aggregates.at("accuracy"), 0.0);
    for (const auto& ex : r.examples) {
        EXPECT_TRUE(ex.flagged);
        EXPECT_EQ(ex.flag_reason, "unextractable");
        EXPECT_FALSE(ex.extracted);
    }
}

TEST(Mcq, AccuracyIsExactRatio) {
    const auto ds = mcq_set(10000);
    const auto tmpl = prompts::builtin(prompts::kEvalMcq);
    std::map<std::string, std::string> replies;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const char wrong = static_cast<char>('A' + (ds[i].answer[0] - 'A' + 1) % 4);
        replies[render_eval_prompt(ds[i], tmpl)] = i < 7789 ? ds[i].answer : std::string(1, wrong);
    }
    auto ep = lookup_endpoint(replies);
    const auto r = run_mcq(ep, ds, EvalSettings{});
    EXPECT_NEAR(*r.aggregates.at("accuracy"), 77.89, 1e-9);
}

TEST(Mcq, EndpointFailureIsRecorded) {
    const auto ds = mcq_set(3);
    FunctionProvider ep("down", [](const ChatRequest&) -> std::string { throw ProviderError("boom"); });
    const auto r = run_mcq(ep, ds, EvalSettings{});
    EXPECT_DOUBLE_EQ(*r.aggregates.at("accuracy"), 0.0);
    for (const auto& ex : r.examples) {
        EXPECT_TRUE(ex.flagged);
        EXPECT_NE(ex.flag_reason.find("endpoint_failure"), std::string::npos);
    }
}

TEST(Mcq, PromptIsZeroShotAndDeterministic) {
    const auto ds = mcq_set(2);
    std::vector<ChatRequest> seen;
    std::mutex mu;
    FunctionProvider ep("p", [&](const ChatRequest& r) {
        std::lock_guard lock(mu);
        seen.push_back(r);
        return std::string("A");
    });
    EvalSettings s;
    s.workers = 1;
    run_mcq(ep, ds, s);
    ASSERT_EQ(seen.size(), 2u);
    for (const auto& r : seen) {
        ASSERT_EQ(r.messages.size(), 1u);
        EXPECT_EQ(r.temperature, 0.0);
        EXPECT_NE(r.messages[0].content.find("R3"), std::string::npos);
    }
}

// --- generation tasks ---

TEST(Generation, EchoMaximizesEveryMetric) {
    std::vector<InstructionEntry> ds{make_qa("What does JCL stand for?", "Job Control Language"),
                                     make_qa("What is a copybook?", "A shared COBOL source fragment included with COPY.")};
    const auto tmpl = prompts::builtin(prompts::kEvalQa);
    std::map<std::string, std::string> replies;
    for (const auto& e : ds) replies[render_eval_prompt(e, tmpl)] = e.answer;
    auto ep = lookup_endpoint(replies);
    OneHotEmbedder emb;
    EvalSettings s;
    s.embedder = &emb;
    // OneHotEmbedder has 16 slots; both answers together stay under that.
    const auto r = run_generation_task(ep, Task::qa, ds, s, {"bleu4", "rougeL", "f1", "map"});
    EXPECT_DOUBLE_EQ(*r.aggregates.at("bleu4"), 100.0);
    EXPECT_DOUBLE_EQ(*r.aggregates.at("rougeL"), 1.0);
    EXPECT_DOUBLE_EQ(*r.aggregates.at("f1"), 1.0);
    EXPECT_DOUBLE_EQ(*r.aggregates.at("map"), 1.0);
}

TEST(Generation, EmptyOutputsScoreZero) {
    std::vector<InstructionEntry> ds{make_summary("IDENTIFICATION DIVISION. PROGRAM-ID. A.", "Declares program A.")};
    FunctionProvider ep("silent", [](const ChatRequest&) { return std::string(); });
    const auto r = run_generation_task(ep, Task::summarization, ds, EvalSettings{});
    for (const auto& name : {"bleu4", "rougeL", "meteor", "f1", "map"}) EXPECT_DOUBLE_EQ(*r.aggregates.at(name), 0.0) << name;
    EXPECT_FALSE(r.aggregates.at("bertscore"));
    EXPECT_EQ(r.unavailable.count("bertscore"), 1u);
}

TEST(Generation, HandComputedFixture) {
    const auto f = fixture("generation_fixture.json");
    std::vector<InstructionEntry> ds;
    std::map<std::string, std::string> replies;
    std::map<std::string, nlohmann::json> expected;
    const auto tmpl = prompts::builtin(prompts::kEvalQa);
    for (const auto& ex : f.at("examples")) {
        auto e = make_qa(ex.at("question"), ex.at("reference"));
        replies[render_eval_prompt(e, tmpl)] = ex.at("output").get<std::string>();
        expected[e.id] = ex.at("metrics");
        ds.push_back(e);
    }
    auto ep = lookup_endpoint(replies);
    const auto r = run_generation_task(ep, Task::qa, ds, EvalSettings{}, {"bleu4", "rougeL", "meteor", "f1", "map"});
    for (const auto& ex : r.examples) {
        for (const auto& [k, v] : expected.at(ex.id).items()) EXPECT_NEAR(*ex.metrics.at(k), v.get<double>(), 1e-9) << ex.id << " " << k;
    }
    for (const auto& [k, v] : f.at("aggregates").items()) EXPECT_NEAR(*r.aggregates.at(k), v.get<double>(), 1e-9) << k;
}

TEST(Generation, BertScoreAvailableWithEmbedder) {
    std::vector<InstructionEntry> ds{make_qa("Q?", "alpha beta")};
    FunctionProvider ep("p", [](const ChatRequest&) { return std::string("alpha gamma"); });
    OneHotEmbedder emb;
    EvalSettings s;
    s.embedder = &emb;
    const auto r = run_generation_task(ep, Task::qa, ds, s, {"bertscore"});
    ASSERT_TRUE(r.aggregates.at("bertscore"));
    EXPECT_NEAR(*r.aggregates.at("bertscore"), 0.5, 1e-12);
}

TEST(Generation, MetricRestrictions) {
    EvalTask t{Task::mcq, {}, {}, {"bleu4"}};
    EXPECT_THROW(t.validate(), ParameterError);
    EvalTask q{Task::qa, {}, {}, {"accuracy"}};
    EXPECT_THROW(q.validate(), ParameterError);
    EXPECT_EQ(default_metrics(Task::qa).size(), 6u);
    EXPECT_EQ(default_metrics(Task::mcq), std::vector<std::string>{"accuracy"});
}

// --- reports ---

TEST(Report, AggregatesMatchRecomputation) {
    std::vector<InstructionEntry> ds;
    for (int i = 0; i < 25; ++i) ds.push_back(make_qa("Question " + std::to_string(i) + "?", "answer number " + std::to_string(i)));
    FunctionProvider ep("p", [](const ChatRequest& r) { return r.messages.back().content.substr(0, 40); });
    const auto r = run_generation_task(ep, Task::qa, ds, EvalSettings{}, {"bleu4", "f1", "rougeL"});
    const auto again = r.recompute_aggregates();
    for (const auto& [k, v] : r.aggregates) EXPECT_DOUBLE_EQ(*v, *again.at(k));
    // Independent mean over the per-example values.
    double sum = 0;
    for (const auto& ex : r.examples) sum += *ex.metrics.at("f1");
    EXPECT_NEAR(*r.aggregates.at("f1"), sum / 25.0, 1e-12);
}

TEST(Report, JsonRoundTrip) {
    const auto ds = mcq_set(5);
    FunctionProvider ep("m", [](const ChatRequest&) { return std::string("C"); });
    auto r = run_mcq(ep, ds, EvalSettings{});
    r.dataset = "mcq_test.jsonl";
    const auto j = r.to_json();
    const auto back = EvalReport::from_json(j);
    EXPECT_EQ(back.to_json(), j);
    EXPECT_EQ(j.at("n_examples"), 5);
    EXPECT_TRUE(j.at("protocol").contains("template_sha256"));
    EXPECT_EQ(j.at("protocol").at("temperature"), 0.0);
}

TEST(Report, ExamplesOrderedById) {
    const auto ds = mcq_set(30);
    FunctionProvider ep("m", [](const ChatRequest&) { return std::string("A"); });
    const auto r = run_mcq(ep, ds, EvalSettings{});
    for (std::size_t i = 1; i < r.examples.size(); ++i) EXPECT_LT(r.examples[i - 1].id, r.examples[i].id);
}

TEST(Report, RenderTable) {
    EvalReport a;
    a.model_name = "base";
    a.task = Task::mcq;
    a.metric_names = {"accuracy"};
    a.aggregates["accuracy"] = 77.89;
    EvalReport b = a;
    b.model_name = "tuned-model";
    b.aggregates["accuracy"] = 100.0;
    EvalReport c;
    c.model_name = "base";
    c.task = Task::qa;
    c.metric_names = {"bleu4", "bertscore"};
    c.aggregates["bleu4"] = 12.3456;
    c.aggregates["bertscore"] = std::nullopt;
    const auto t = render_table({a, b, c});
    EXPECT_NE(t.find("Task: mcq"), std::string::npos);
    EXPECT_NE(t.find("Task: qa"), std::string::npos);
    EXPECT_NE(t.find("77.89"), std::string::npos);
    EXPECT_NE(t.find("100.00"), std::string::npos);
    EXPECT_NE(t.find("12.35"), std::string::npos);
    EXPECT_NE(t.find("n/a"), std::string::npos);
    EXPECT_NE(t.find("| tuned-model |"), std::string::npos);
}

TEST(Dataset, LoadsBenchmarkFiles) {
    TempDir dir;
    const auto p = dir / "mcq_test.jsonl";
    std::ofstream out(p);
    for (const auto& e : mcq_set(3)) out << to_dataset_json(e).dump() << "\n";
    out.close();
    const auto ds = load_eval_dataset(Task::mcq, p);
    EXPECT_EQ(ds.size(), 3u);
    forge::testing::write_file(dir / "bad.jsonl", "{\"question\": \"q\"}\n");
    EXPECT_THROW(load_eval_dataset(Task::mcq, dir / "bad.jsonl"), LoadError);
    EXPECT_THROW(load_eval_dataset(Task::mcq, dir / "missing.jsonl"), IoError);
}
