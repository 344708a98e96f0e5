#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/entry.hpp"
#include "forge/metrics.hpp"
#include "forge/prompts.hpp"
#include "forge/provider.hpp"

namespace forge::eval {

// Metric names as they appear in reports.
inline constexpr std::string_view kAccuracy = "accuracy";
inline constexpr std::string_view kMap = "map";
inline constexpr std::string_view kF1 = "f1";
inline constexpr std::string_view kBertScore = "bertscore";
inline constexpr std::string_view kRougeL = "rougeL";
inline constexpr std::string_view kMeteor = "meteor";
inline constexpr std::string_view kBleu4 = "bleu4";

std::vector<std::string> default_metrics(Task task);
bool metric_allowed(Task task, std::string_view metric);

// First standalone uppercase A-D, else "answer is X" (any case), else none.
std::optional<char> extract_choice(std::string_view raw_output);

struct EvalTask {
    Task task = Task::mcq;
    std::filesystem::path dataset_path;
    std::string prompt_template;   // template name; empty = built-in for the task
    std::vector<std::string> metrics;  // empty = default_metrics(task)

    void validate() const;
};

struct EvalSettings {
    std::string model_name;
    double temperature = 0.0;
    int max_tokens = 512;
    std::size_t workers = 4;
    prompts::PromptSet prompts;
    Embedder* embedder = nullptr;  // BERTScore; unavailable when null
};

struct ExampleRecord {
    std::string id;
    std::string prompt;
    std::string raw_output;
    std::optional<std::string> extracted;  // mcq: chosen label
    std::string reference;
    bool flagged = false;
    std::string flag_reason;
    std::map<std::string, std::optional<double>> metrics;
};

struct EvalReport {
    std::string model_name;
    Task task = Task::mcq;
    std::string dataset;
    std::vector<std::string> metric_names;
    std::map<std::string, std::optional<double>> aggregates;  // nullopt = unavailable
    std::map<std::string, std::string> unavailable;            // metric -> diagnostic
    std::vector<ExampleRecord> examples;                       // ordered by id
    nlohmann::json protocol;

    // Means of the per-example values, in example order.
    std::map<std::string, std::optional<double>> recompute_aggregates() const;
    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

// Dataset JSON Lines in the benchmark schema of `task`.
std::vector<InstructionEntry> load_eval_dataset(Task task, const std::filesystem::path& path);

std::string render_eval_prompt(const InstructionEntry& e, std::string_view tmpl);

EvalReport run_mcq(ChatProvider& endpoint, const std::vector<InstructionEntry>& dataset, const EvalSettings& settings,
                   const std::string& template_name = {});
EvalReport run_generation_task(ChatProvider& endpoint, const EvalTask& task, const EvalSettings& settings);
EvalReport run_generation_task(ChatProvider& endpoint, Task task, const std::vector<InstructionEntry>& dataset,
                               const EvalSettings& settings, std::vector<std::string> metrics = {},
                               const std::string& template_name = {});
// Loads the dataset and dispatches on the task type.
EvalReport run_eval(ChatProvider& endpoint, const EvalTask& task, const EvalSettings& settings);

// Comparison grid, one table per task, one row per report.
std::string render_table(const std::vector<EvalReport>& reports);

}  // namespace forge::eval
