#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace forge::prompts {

// Template names (files under prompts/ in the source tree).
inline constexpr std::string_view kSubtopicQa = "subtopic_qa";
inline constexpr std::string_view kSeedSummarization = "seed_summarization";
inline constexpr std::string_view kJudgeQuality = "judge_quality";
inline constexpr std::string_view kMcqGen = "mcq_gen";
inline constexpr std::string_view kGenSubtopics = "gen_subtopics";
inline constexpr std::string_view kJudgePairwise = "judge_pairwise";
inline constexpr std::string_view kEvalMcq = "eval_mcq";
inline constexpr std::string_view kEvalQa = "eval_qa";
inline constexpr std::string_view kEvalSummarization = "eval_summarization";

// Compiled-in template text; throws NotFoundError for unknown names.
std::string_view builtin(std::string_view name);
std::vector<std::string> builtin_names();

// Builtins, optionally overridden by <dir>/<name>.txt.
class PromptSet {
public:
    PromptSet() = default;
    explicit PromptSet(std::optional<std::filesystem::path> override_dir);
    std::string get(std::string_view name) const;

private:
    std::optional<std::filesystem::path> dir_;
};

// Replaces every occurrence of each placeholder (e.g. "[sub-topic]").
std::string fill(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace forge::prompts
