#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/entry.hpp"
#include "forge/prompts.hpp"
#include "forge/provider.hpp"

namespace forge::judge {

struct JudgeScore {
    std::string entry_id;
    int score = 0;  // 1..10
    std::string judge_model;
    std::optional<std::string> rationale_text;

    nlohmann::json to_json() const;
};

enum class Winner { a, b, tie };
std::string_view to_string(Winner w) noexcept;

struct PairwiseVerdict {
    std::string entry_a;
    std::string entry_b;
    Winner winner = Winner::tie;
    std::string judge_model;
    bool swapped = false;  // entry_b was presented first
    bool flagged = false;  // reply had no parsable final token

    nlohmann::json to_json() const;
};

// Last bracketed, comma-separated integer list in the text; nullopt when there
// is none or any element lies outside 1..10.
std::optional<std::vector<int>> parse_trailing_int_list(std::string_view text);

struct JudgeSettings {
    double temperature = 0.0;
    int max_tokens = 2048;
    std::size_t batch_size = 10;
    prompts::PromptSet prompts;
};

struct BatchOutcome {
    std::vector<std::string> entry_ids;
    std::vector<JudgeScore> scores;  // empty when failed
    bool failed = false;
    std::string failure_reason;
    std::string raw_reply;
};

// Entries as the judge sees them: numbered question-answer pairs.
std::string serialize_for_judge(std::span<const InstructionEntry> entries);
std::string render_score_prompt(std::span<const InstructionEntry> entries,
                                const prompts::PromptSet& prompts = prompts::PromptSet{});

// One judge call; scores align positionally with the trailing list.
BatchOutcome score_batch(std::span<const InstructionEntry> entries, ChatProvider& provider,
                         const JudgeSettings& settings = {});

// Splits into batches of settings.batch_size and scores them concurrently.
std::vector<BatchOutcome> score_entries(std::span<const InstructionEntry> entries, ChatProvider& provider,
                                        const JudgeSettings& settings = {}, std::size_t workers = 4);

// Final "A", "B" or "TIE" token of a reply.
std::optional<Winner> parse_verdict_token(std::string_view reply);

// `swap` presents b first; the verdict is mapped back to (a, b).
PairwiseVerdict pairwise_rank(const InstructionEntry& a, const InstructionEntry& b, ChatProvider& provider,
                              bool swap, const JudgeSettings& settings = {});
PairwiseVerdict pairwise_rank(const InstructionEntry& a, const InstructionEntry& b, ChatProvider& provider,
                              std::mt19937_64& rng, const JudgeSettings& settings = {});

struct FilterOutcome {
    std::vector<InstructionEntry> kept;
    std::vector<InstructionEntry> rejected;  // status=deleted, reason low_judge_score
};

// Attaches each score to its entry; kept iff score >= min_score.
FilterOutcome apply_score_filter(std::vector<InstructionEntry> entries, std::span<const JudgeScore> scores,
                                 int min_score);

}  // namespace forge::judge
