#include "forge/judge.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>

#include "forge/errors.hpp"
#include "forge/parallel.hpp"
#include "forge/text.hpp"

namespace forge::judge {

std::string_view to_string(Winner w) noexcept {
    switch (w) {
        case Winner::a: return "a";
        case Winner::b: return "b";
        case Winner::tie: return "tie";
    }
    return "tie";
}

nlohmann::json JudgeScore::to_json() const {
    nlohmann::json j{{"entry_id", entry_id}, {"score", score}, {"judge_model", judge_model}};
    if (rationale_text) j["rationale_text"] = *rationale_text;
    return j;
}

nlohmann::json PairwiseVerdict::to_json() const {
    return {{"entry_a", entry_a},     {"entry_b", entry_b}, {"winner", to_string(winner)},
            {"judge_model", judge_model}, {"swapped", swapped}, {"flagged", flagged}};
}

std::optional<std::vector<int>> parse_trailing_int_list(std::string_view text) {
    static const std::regex int_list(R"(^\s*(\d+)(\s*,\s*\d+)*\s*,?\s*$)");
    for (std::size_t close = text.rfind(']'); close != std::string_view::npos;
         close = close == 0 ? std::string_view::npos : text.rfind(']', close - 1)) {
        auto open = text.rfind('[', close);
        if (open == std::string_view::npos) return std::nullopt;
        std::string inner(text.substr(open + 1, close - open - 1));
        if (!std::regex_match(inner, int_list)) continue;
        std::vector<int> values;
        for (auto& part : text::split_whitespace(std::regex_replace(inner, std::regex(","), " "))) {
            if (part.size() > 3) return std::nullopt;
            values.push_back(std::stoi(part));
        }
        if (std::any_of(values.begin(), values.end(), [](int v) { return v < 1 || v > 10; })) return std::nullopt;
        return values;
    }
    return std::nullopt;
}

std::string serialize_for_judge(std::span<const InstructionEntry> entries) {
    std::string out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        out += std::to_string(i + 1) + ".\n";
        switch (e.task) {
            case Task::mcq:
                out += "Question: " + e.question + "\n";
                for (std::size_t k = 0; k < 4; ++k) out += std::string(1, kChoiceLabels[k]) + ". " + e.options[k] + "\n";
                out += "Answer: " + e.answer + "\n";
                break;
            case Task::qa:
                out += "Question: " + e.question + "\nAnswer: " + e.answer + "\n";
                break;
            case Task::summarization:
                out += "Question: Summarize the following COBOL paragraph.\n" + e.source + "\nAnswer: " + e.summary + "\n";
                break;
        }
        out += "\n";
    }
    return out;
}

std::string render_score_prompt(std::span<const InstructionEntry> entries, const prompts::PromptSet& prompts) {
    return prompts.get(prompts::kJudgeQuality) + "\n\n" + serialize_for_judge(entries);
}

BatchOutcome score_batch(std::span<const InstructionEntry> entries, ChatProvider& provider,
                         const JudgeSettings& settings) {
    if (entries.empty()) throw ParameterError("score_batch needs at least one entry");
    BatchOutcome out;
    for (const auto& e : entries) out.entry_ids.push_back(e.id);
    ChatRequest req;
    req.messages.push_back({"user", render_score_prompt(entries, settings.prompts)});
    req.temperature = settings.temperature;
    req.max_tokens = settings.max_tokens;
    ChatReply reply;
    try {
        reply = provider.complete(req);
    } catch (const std::exception& e) {
        out.failed = true;
        out.failure_reason = std::string("provider failure: ") + e.what();
        return out;
    }
    out.raw_reply = reply.content;
    auto list = parse_trailing_int_list(reply.content);
    if (!list) {
        out.failed = true;
        out.failure_reason = "no trailing 1-10 integer list in judge reply";
        return out;
    }
    if (list->size() != entries.size()) {
        out.failed = true;
        out.failure_reason = "judge returned " + std::to_string(list->size()) + " scores for " +
                             std::to_string(entries.size()) + " entries";
        return out;
    }
    auto rationale = text::trim(reply.content.substr(0, reply.content.rfind('[')));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        out.scores.push_back({entries[i].id, (*list)[i], reply.model,
                              rationale.empty() ? std::nullopt : std::optional<std::string>(rationale)});
    }
    return out;
}

std::vector<BatchOutcome> score_entries(std::span<const InstructionEntry> entries, ChatProvider& provider,
                                        const JudgeSettings& settings, std::size_t workers) {
    const std::size_t bs = std::max<std::size_t>(1, settings.batch_size);
    const std::size_t batches = (entries.size() + bs - 1) / bs;
    std::vector<BatchOutcome> out(batches);
    parallel_for(
        batches,
        [&](std::size_t b) {
            auto chunk = entries.subspan(b * bs, std::min(bs, entries.size() - b * bs));
            out[b] = score_batch(chunk, provider, settings);
        },
        workers);
    return out;
}

std::optional<Winner> parse_verdict_token(std::string_view reply) {
    auto tokens = text::split_whitespace(reply);
    if (tokens.empty()) return std::nullopt;
    std::string last;
    for (char c : tokens.back()) {
        if (std::isalpha(static_cast<unsigned char>(c))) last.push_back(static_cast<char>(std::toupper(c)));
    }
    if (last == "A") return Winner::a;
    if (last == "B") return Winner::b;
    if (last == "TIE") return Winner::tie;
    return std::nullopt;
}

PairwiseVerdict pairwise_rank(const InstructionEntry& a, const InstructionEntry& b, ChatProvider& provider,
                              bool swap, const JudgeSettings& settings) {
    if (a.id == b.id) throw ParameterError("pairwise_rank needs two distinct entries");
    if (a.task != b.task) throw ParameterError("pairwise_rank needs entries of the same task");
    const auto& first = swap ? b : a;
    const auto& second = swap ? a : b;
    auto prompt = prompts::fill(settings.prompts.get(prompts::kJudgePairwise),
                                {{"[entry-a]", serialize_for_judge(std::span(&first, 1))},
                                 {"[entry-b]", serialize_for_judge(std::span(&second, 1))}});
    ChatRequest req;
    req.messages.push_back({"user", prompt});
    req.temperature = settings.temperature;
    req.max_tokens = settings.max_tokens;
    auto reply = provider.complete(req);

    PairwiseVerdict v{a.id, b.id, Winner::tie, reply.model, swap, false};
    auto token = parse_verdict_token(reply.content);
    if (!token) {
        v.flagged = true;
        return v;
    }
    v.winner = *token;
    if (swap && v.winner != Winner::tie) v.winner = v.winner == Winner::a ? Winner::b : Winner::a;
    return v;
}

PairwiseVerdict pairwise_rank(const InstructionEntry& a, const InstructionEntry& b, ChatProvider& provider,
                              std::mt19937_64& rng, const JudgeSettings& settings) {
    bool swap = (rng() >> 63) != 0;
    return pairwise_rank(a, b, provider, swap, settings);
}

FilterOutcome apply_score_filter(std::vector<InstructionEntry> entries, std::span<const JudgeScore> scores,
                                 int min_score) {
    std::map<std::string, const JudgeScore*> by_id;
    for (const auto& s : scores) by_id[s.entry_id] = &s;
    std::vector<std::string> missing;
    for (const auto& e : entries) {
        if (!by_id.count(e.id)) missing.push_back(e.id);
    }
    if (!missing.empty()) throw ValidationError("entries without a judge score: " + text::join(missing, ", "));
    FilterOutcome out;
    for (auto& e : entries) {
        const auto* s = by_id.at(e.id);
        e.judge_score = s->score;
        if (s->rationale_text) e.judge_rationale = s->rationale_text;
        if (s->score >= min_score) {
            out.kept.push_back(std::move(e));
        } else {
            e.status = Status::deleted;
            e.status_reason = "low_judge_score";
            out.rejected.push_back(std::move(e));
        }
    }
    return out;
}

}  // namespace forge::judge
