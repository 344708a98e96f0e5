#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/entry.hpp"
#include "forge/prompts.hpp"
#include "forge/provider.hpp"

namespace forge::synthgen {

inline constexpr std::string_view kParentDomain = "Mainframe and COBOL";

struct SubTopic {
    std::string name;
    std::string parent_domain{kParentDomain};
};

// Objects of the first well-formed JSON array found in `raw` (code fences and
// surrounding prose are tolerated). Never throws; on failure returns an empty
// list and, when `diagnostic` is given, a reason.
std::vector<nlohmann::json> parse_llm_json_list(std::string_view raw, std::string* diagnostic = nullptr);

// Same scan, but returns the whole first array (any element types).
std::optional<nlohmann::json> find_json_array(std::string_view raw);

struct GenerationSettings {
    double temperature = 0.7;
    int max_tokens = 2048;
    std::size_t entries_per_call = 10;
    prompts::PromptSet prompts;
};

struct SkippedRecord {
    std::string reason;
    std::string raw;
};

struct GenerationResult {
    std::vector<InstructionEntry> entries;
    std::vector<SkippedRecord> skipped;
};

struct SubtopicResult {
    std::vector<SubTopic> topics;
    std::size_t shortfall = 0;  // count_target - topics.size() when the provider ran dry
};

// Asks the provider for sub-topics until count_target unique names (case-
// insensitive) are collected or a round adds nothing new. The list is written
// to `out_file` after every round, so partial results survive an abort.
SubtopicResult generate_subtopics(ChatProvider& provider, std::size_t count_target,
                                  const std::filesystem::path& out_file, const GenerationSettings& settings = {});

std::vector<SubTopic> load_subtopics(const std::filesystem::path& file);

// Question-answer pairs for one sub-topic (verbatim sub-topic prompt).
GenerationResult generate_from_subtopic(const SubTopic& topic, ChatProvider& provider,
                                        const GenerationSettings& settings = {});

// Multiple-choice questions for one sub-topic (harness-defined prompt).
GenerationResult generate_mcq_from_subtopic(const SubTopic& topic, ChatProvider& provider,
                                            const GenerationSettings& settings = {});

// COBOL paragraph-summary pairs expanded from one summarization seed.
GenerationResult generate_from_seed(const InstructionEntry& seed, ChatProvider& provider,
                                    const GenerationSettings& settings = {});

// Rendered user prompts, exposed for audit and tests.
std::string render_subtopic_prompt(const SubTopic& topic, const prompts::PromptSet& prompts = prompts::PromptSet{});
std::string render_seed_prompt(const InstructionEntry& seed, const prompts::PromptSet& prompts = prompts::PromptSet{});

}  // namespace forge::synthgen
