#include "forge/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>

#include "forge/errors.hpp"
#include "forge/hashing.hpp"
#include "forge/parallel.hpp"
#include "forge/text.hpp"
#include "forge/version.hpp"

namespace forge::eval {

namespace {

const std::vector<std::string> kGenerationMetrics{std::string(kMap),    std::string(kF1),     std::string(kBertScore),
                                                  std::string(kRougeL), std::string(kMeteor), std::string(kBleu4)};

std::string_view default_template(Task t) {
    switch (t) {
        case Task::mcq: return prompts::kEvalMcq;
        case Task::qa: return prompts::kEvalQa;
        case Task::summarization: return prompts::kEvalSummarization;
    }
    return prompts::kEvalQa;
}

std::string reference_of(const InstructionEntry& e) {
    switch (e.task) {
        case Task::mcq: return e.answer;
        case Task::qa: return e.answer;
        case Task::summarization: return e.summary;
    }
    return e.answer;
}

nlohmann::json optional_to_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> optional_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

nlohmann::json base_protocol(const EvalSettings& settings, std::string_view template_name, std::string_view tmpl) {
    return {{"temperature", settings.temperature},
            {"max_tokens", settings.max_tokens},
            {"zero_shot", true},
            {"template", template_name},
            {"template_sha256", sha256_hex(tmpl)},
            {"tokenizer", "lowercase; split on Unicode whitespace; each ASCII punctuation character is a token"},
            {"scales", {{"accuracy", "0-100"}, {"bleu4", "0-100"}, {"other", "0-1"}}},
            {"harness_defined", {"map", "f1"}},
            {"meteor", "exact + Porter stem matching, alpha=0.9 beta=3 gamma=0.5"},
            {"tool_version", kVersion}};
}

// One request per example; failures are recorded, not thrown.
struct Reply {
    std::string content;
    bool failed = false;
    std::string error;
};

std::vector<Reply> query_all(ChatProvider& endpoint, const std::vector<std::string>& prompts_text,
                             const EvalSettings& settings) {
    std::vector<Reply> replies(prompts_text.size());
    parallel_for(
        prompts_text.size(),
        [&](std::size_t i) {
            ChatRequest req;
            req.messages = {{"user", prompts_text[i]}};
            req.temperature = settings.temperature;
            req.max_tokens = settings.max_tokens;
            try {
                replies[i].content = endpoint.complete(req).content;
            } catch (const std::exception& e) {
                replies[i].failed = true;
                replies[i].error = e.what();
            }
        },
        settings.workers);
    return replies;
}

void finish(EvalReport& report) {
    std::sort(report.examples.begin(), report.examples.end(),
              [](const ExampleRecord& a, const ExampleRecord& b) { return a.id < b.id; });
    report.aggregates = report.recompute_aggregates();
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

}  // namespace

std::vector<std::string> default_metrics(Task task) {
    if (task == Task::mcq) return {std::string(kAccuracy)};
    return kGenerationMetrics;
}

bool metric_allowed(Task task, std::string_view metric) {
    if (task == Task::mcq) return metric == kAccuracy;
    return std::find(kGenerationMetrics.begin(), kGenerationMetrics.end(), metric) != kGenerationMetrics.end();
}

std::optional<char> extract_choice(std::string_view raw_output) {
    static const std::regex standalone(R"(\b([A-D])\b)");
    static const std::regex answer_is(R"(answer\s+is\s*:?\s*[\(\[]?\s*([a-d])\b)", std::regex::icase);
    const std::string s(raw_output);
    std::smatch m;
    if (std::regex_search(s, m, standalone)) return m[1].str()[0];
    if (std::regex_search(s, m, answer_is)) {
        return static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
    }
    return std::nullopt;
}

void EvalTask::validate() const {
    for (const auto& m : metrics) {
        if (!metric_allowed(task, m)) {
            throw ParameterError("metric '" + m + "' is not defined for task " + std::string(to_string(task)));
        }
    }
}

std::map<std::string, std::optional<double>> EvalReport::recompute_aggregates() const {
    std::map<std::string, std::optional<double>> out;
    for (const auto& name : metric_names) {
        double sum = 0;
        bool available = true;
        for (const auto& ex : examples) {
            auto it = ex.metrics.find(name);
            if (it == ex.metrics.end() || !it->second) {
                available = false;
                break;
            }
            sum += *it->second;
        }
        if (!available) {
            out[name] = std::nullopt;
        } else {
            out[name] = examples.empty() ? 0.0 : sum / static_cast<double>(examples.size());
        }
    }
    return out;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json agg = nlohmann::json::object();
    for (const auto& [k, v] : aggregates) agg[k] = optional_to_json(v);
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& e : examples) {
        nlohmann::json m = nlohmann::json::object();
        for (const auto& [k, v] : e.metrics) m[k] = optional_to_json(v);
        nlohmann::json r{{"id", e.id},
                         {"prompt", e.prompt},
                         {"raw_output", e.raw_output},
                         {"extracted", e.extracted ? nlohmann::json(*e.extracted) : nlohmann::json(nullptr)},
                         {"reference", e.reference},
                         {"flagged", e.flagged},
                         {"metrics", m}};
        if (e.flagged) r["flag_reason"] = e.flag_reason;
        ex.push_back(std::move(r));
    }
    return {{"model_name", model_name},
            {"task", to_string(task)},
            {"dataset", dataset},
            {"metric_names", metric_names},
            {"aggregates", agg},
            {"unavailable", unavailable},
            {"n_examples", examples.size()},
            {"protocol", protocol},
            {"examples", ex}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    r.model_name = j.at("model_name").get<std::string>();
    r.task = parse_task(j.at("task").get<std::string>());
    r.dataset = j.value("dataset", "");
    r.metric_names = j.at("metric_names").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("aggregates").items()) r.aggregates[k] = optional_from_json(v);
    if (j.contains("unavailable")) r.unavailable = j.at("unavailable").get<std::map<std::string, std::string>>();
    r.protocol = j.value("protocol", nlohmann::json::object());
    for (const auto& e : j.value("examples", nlohmann::json::array())) {
        ExampleRecord x;
        x.id = e.at("id").get<std::string>();
        x.prompt = e.value("prompt", "");
        x.raw_output = e.value("raw_output", "");
        if (e.contains("extracted") && !e.at("extracted").is_null()) x.extracted = e.at("extracted").get<std::string>();
        x.reference = e.value("reference", "");
        x.flagged = e.value("flagged", false);
        x.flag_reason = e.value("flag_reason", "");
        for (const auto& [k, v] : e.at("metrics").items()) x.metrics[k] = optional_from_json(v);
        r.examples.push_back(std::move(x));
    }
    return r;
}

std::vector<InstructionEntry> load_eval_dataset(Task task, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path.string());
    std::vector<InstructionEntry> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            auto e = entry_from_dataset_json(task, nlohmann::json::parse(line));
            validate(e);
            if (e.id.empty()) e.id = compute_entry_id(e);
            if (!ids.insert(e.id).second) throw ValidationError("duplicate id " + e.id);
            out.push_back(std::move(e));
        } catch (const std::exception& ex) {
            throw LoadError(path.string() + ": " + ex.what(), lineno);
        }
    }
    return out;
}

std::string render_eval_prompt(const InstructionEntry& e, std::string_view tmpl) {
    switch (e.task) {
        case Task::mcq:
            return prompts::fill(tmpl, {{"[question]", e.question},
                                        {"[option-A]", e.options[0]},
                                        {"[option-B]", e.options[1]},
                                        {"[option-C]", e.options[2]},
                                        {"[option-D]", e.options[3]}});
        case Task::qa:
            return prompts::fill(tmpl, {{"[question]", e.question}});
        case Task::summarization:
            return prompts::fill(tmpl, {{"[source]", e.source}});
    }
    return std::string(tmpl);
}

EvalReport run_mcq(ChatProvider& endpoint, const std::vector<InstructionEntry>& dataset, const EvalSettings& settings,
                   const std::string& template_name) {
    const std::string name = template_name.empty() ? std::string(prompts::kEvalMcq) : template_name;
    const auto tmpl = settings.prompts.get(name);
    std::vector<std::string> rendered;
    rendered.reserve(dataset.size());
    for (const auto& e : dataset) {
        if (e.task != Task::mcq) throw ParameterError("run_mcq given a non-mcq entry " + e.id);
        rendered.push_back(render_eval_prompt(e, tmpl));
    }
    const auto replies = query_all(endpoint, rendered, settings);

    EvalReport report;
    report.model_name = settings.model_name.empty() ? endpoint.name() : settings.model_name;
    report.task = Task::mcq;
    report.metric_names = {std::string(kAccuracy)};
    report.protocol = base_protocol(settings, name, tmpl);
    report.protocol["extraction"] =
        "first standalone uppercase A-D, else 'answer is X' (case-insensitive); unextractable counts as incorrect";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        ExampleRecord r;
        r.id = dataset[i].id;
        r.prompt = rendered[i];
        r.reference = dataset[i].answer;
        r.raw_output = replies[i].content;
        if (replies[i].failed) {
            r.flagged = true;
            r.flag_reason = "endpoint_failure: " + replies[i].error;
        } else if (auto c = extract_choice(r.raw_output)) {
            r.extracted = std::string(1, *c);
        } else {
            r.flagged = true;
            r.flag_reason = "unextractable";
        }
        const bool correct = r.extracted && *r.extracted == r.reference;
        r.metrics[std::string(kAccuracy)] = correct ? 100.0 : 0.0;
        report.examples.push_back(std::move(r));
    }
    finish(report);
    return report;
}

EvalReport run_generation_task(ChatProvider& endpoint, Task task, const std::vector<InstructionEntry>& dataset,
                               const EvalSettings& settings, std::vector<std::string> metrics,
                               const std::string& template_name) {
    if (task == Task::mcq) throw ParameterError("mcq is evaluated with run_mcq");
    if (metrics.empty()) metrics = default_metrics(task);
    EvalTask spec{task, {}, template_name, metrics};
    spec.validate();
    const std::string name = template_name.empty() ? std::string(default_template(task)) : template_name;
    const auto tmpl = settings.prompts.get(name);
    std::vector<std::string> rendered;
    rendered.reserve(dataset.size());
    for (const auto& e : dataset) {
        if (e.task != task) throw ParameterError("dataset entry " + e.id + " does not belong to task " + std::string(to_string(task)));
        rendered.push_back(render_eval_prompt(e, tmpl));
    }
    const auto replies = query_all(endpoint, rendered, settings);

    EvalReport report;
    report.model_name = settings.model_name.empty() ? endpoint.name() : settings.model_name;
    report.task = task;
    report.metric_names = metrics;
    report.protocol = base_protocol(settings, name, tmpl);
    const bool want_bert = std::find(metrics.begin(), metrics.end(), kBertScore) != metrics.end();
    if (want_bert && !settings.embedder) report.unavailable[std::string(kBertScore)] = "no embedding endpoint configured";

    report.examples.resize(dataset.size());
    std::mutex diag_mu;
    parallel_for(
        dataset.size(),
        [&](std::size_t i) {
            auto& r = report.examples[i];
            r.id = dataset[i].id;
            r.prompt = rendered[i];
            r.reference = reference_of(dataset[i]);
            r.raw_output = replies[i].content;
            if (replies[i].failed) {
                r.flagged = true;
                r.flag_reason = "endpoint_failure: " + replies[i].error;
                for (const auto& m : metrics) {
                    r.metrics[m] = (m == kBertScore && !settings.embedder) ? std::nullopt : std::optional<double>(0.0);
                }
                return;
            }
            const auto hyp = text::metric_tokens(r.raw_output);
            const auto ref = text::metric_tokens(r.reference);
            for (const auto& m : metrics) {
                if (m == kMap) r.metrics[m] = average_precision(hyp, ref);
                else if (m == kF1) r.metrics[m] = token_f1(hyp, ref);
                else if (m == kRougeL) r.metrics[m] = rouge_l(hyp, ref);
                else if (m == kMeteor) r.metrics[m] = meteor(hyp, ref);
                else if (m == kBleu4) r.metrics[m] = bleu4(hyp, ref);
                else if (m == kBertScore) {
                    auto s = bert_score(r.raw_output, r.reference, settings.embedder);
                    r.metrics[m] = s.value;
                    if (!s.value && settings.embedder) {
                        std::lock_guard lock(diag_mu);
                        report.unavailable.emplace(std::string(kBertScore), s.diagnostic);
                    }
                }
            }
        },
        settings.workers);
    finish(report);
    return report;
}

EvalReport run_generation_task(ChatProvider& endpoint, const EvalTask& task, const EvalSettings& settings) {
    task.validate();
    auto report = run_generation_task(endpoint, task.task, load_eval_dataset(task.task, task.dataset_path), settings,
                                      task.metrics, task.prompt_template);
    report.dataset = task.dataset_path.string();
    return report;
}

EvalReport run_eval(ChatProvider& endpoint, const EvalTask& task, const EvalSettings& settings) {
    task.validate();
    if (task.task != Task::mcq) return run_generation_task(endpoint, task, settings);
    auto report = run_mcq(endpoint, load_eval_dataset(Task::mcq, task.dataset_path), settings, task.prompt_template);
    report.dataset = task.dataset_path.string();
    return report;
}

std::string render_table(const std::vector<EvalReport>& reports) {
    std::ostringstream os;
    bool first = true;
    for (auto task : kAllTasks) {
        std::vector<const EvalReport*> rows;
        for (const auto& r : reports) {
            if (r.task == task) rows.push_back(&r);
        }
        if (rows.empty()) continue;
        std::vector<std::string> columns;
        for (const auto& m : task == Task::mcq ? default_metrics(Task::mcq) : kGenerationMetrics) {
            for (const auto* r : rows) {
                if (r->aggregates.count(m)) {
                    columns.push_back(m);
                    break;
                }
            }
        }
        std::vector<std::vector<std::string>> cells;
        cells.push_back({"Model"});
        for (const auto& c : columns) cells[0].push_back(c == kAccuracy ? "Accuracy (%)" : c);
        for (const auto* r : rows) {
            std::vector<std::string> row{r->model_name};
            for (const auto& c : columns) {
                auto it = r->aggregates.find(c);
                if (it == r->aggregates.end()) row.push_back("-");
                else if (!it->second) row.push_back("n/a");
                else row.push_back(fixed(*it->second, c == kAccuracy || c == kBleu4 ? 2 : 4));
            }
            cells.push_back(std::move(row));
        }
        std::vector<std::size_t> width(cells[0].size(), 0);
        for (const auto& row : cells) {
            for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
        }
        if (!first) os << '\n';
        first = false;
        os << "Task: " << to_string(task) << '\n';
        for (std::size_t r = 0; r < cells.size(); ++r) {
            os << '|';
            for (std::size_t i = 0; i < cells[r].size(); ++i) {
                const auto& v = cells[r][i];
                os << ' ' << (i == 0 ? v + std::string(width[i] - v.size(), ' ') : std::string(width[i] - v.size(), ' ') + v)
                   << " |";
            }
            os << '\n';
            if (r == 0) {
                os << '|';
                for (std::size_t i = 0; i < width.size(); ++i) os << std::string(width[i] + 2, '-') << '|';
                os << '\n';
            }
        }
    }
    return os.str();
}

}  // namespace forge::eval
