#include "forge/synthgen.hpp"

#include <fstream>
#include <set>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge::synthgen {

namespace {

// Index one past the ']' matching the '[' at `open`, or npos.
std::size_t matching_bracket(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '[' || c == '{') ++depth;
        else if (c == ']' || c == '}') {
            if (--depth == 0) return c == ']' ? i + 1 : std::string_view::npos;
            if (depth < 0) return std::string_view::npos;
        }
    }
    return std::string_view::npos;
}

std::string field_string(const nlohmann::json& rec, const char* key) {
    if (!rec.contains(key) || !rec.at(key).is_string()) return {};
    return text::trim(rec.at(key).get<std::string>());
}

ChatRequest user_request(std::string system, std::string user, const GenerationSettings& s) {
    ChatRequest req;
    if (!system.empty()) req.messages.push_back({"system", std::move(system)});
    req.messages.push_back({"user", std::move(user)});
    req.temperature = s.temperature;
    req.max_tokens = s.max_tokens;
    return req;
}

std::string count_instruction(const GenerationSettings& s) {
    return "Produce " + std::to_string(s.entries_per_call) + " entries.";
}

void persist_topics(const std::vector<SubTopic>& topics, const std::filesystem::path& file) {
    if (file.empty()) return;
    if (!file.parent_path().empty()) std::filesystem::create_directories(file.parent_path());
    nlohmann::json j = nlohmann::json::array();
    for (const auto& t : topics) j.push_back({{"name", t.name}, {"parent_domain", t.parent_domain}});
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << j.dump(2) << '\n';
        if (!out) throw IoError("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, file);
}

GenerationResult finish(GenerationResult r) {
    for (auto& e : r.entries) e.id = compute_entry_id(e);
    return r;
}

}  // namespace

std::optional<nlohmann::json> find_json_array(std::string_view raw) {
    for (std::size_t open = raw.find('['); open != std::string_view::npos; open = raw.find('[', open + 1)) {
        auto end = matching_bracket(raw, open);
        if (end == std::string_view::npos) continue;
        auto parsed = nlohmann::json::parse(raw.substr(open, end - open), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_array()) return parsed;
    }
    return std::nullopt;
}

std::vector<nlohmann::json> parse_llm_json_list(std::string_view raw, std::string* diagnostic) {
    std::vector<nlohmann::json> out;
    auto arr = find_json_array(raw);
    if (!arr) {
        if (diagnostic) *diagnostic = "no well-formed JSON array in model output";
        return out;
    }
    std::size_t dropped = 0;
    for (auto& el : *arr) {
        if (el.is_object()) out.push_back(std::move(el));
        else ++dropped;
    }
    if (diagnostic) {
        *diagnostic = dropped ? std::to_string(dropped) + " non-object array element(s) ignored" : std::string();
    }
    return out;
}

SubtopicResult generate_subtopics(ChatProvider& provider, std::size_t count_target,
                                  const std::filesystem::path& out_file, const GenerationSettings& settings) {
    SubtopicResult result;
    if (count_target == 0) {
        persist_topics(result.topics, out_file);
        return result;
    }
    std::set<std::string> seen;
    for (;;) {
        std::vector<std::string> known;
        for (const auto& t : result.topics) known.push_back("\"" + t.name + "\"");
        auto prompt = prompts::fill(settings.prompts.get(prompts::kGenSubtopics),
                                    {{"[count]", std::to_string(count_target - result.topics.size())},
                                     {"[known]", known.empty() ? "(none)" : text::join(known, ", ")}});
        std::size_t before = result.topics.size();
        ChatReply reply;
        try {
            reply = provider.complete(user_request({}, prompt, settings));
        } catch (...) {
            persist_topics(result.topics, out_file);
            throw;
        }
        if (auto arr = find_json_array(reply.content)) {
            for (const auto& el : *arr) {
                std::string name;
                if (el.is_string()) name = el.get<std::string>();
                else if (el.is_object()) name = field_string(el, "name");
                name = text::collapse_whitespace(name);
                if (name.empty() || !seen.insert(text::to_lower_ascii(name)).second) continue;
                result.topics.push_back({name, std::string(kParentDomain)});
                if (result.topics.size() >= count_target) break;
            }
        }
        persist_topics(result.topics, out_file);
        if (result.topics.size() >= count_target || result.topics.size() == before) break;
    }
    result.shortfall = count_target > result.topics.size() ? count_target - result.topics.size() : 0;
    return result;
}

std::vector<SubTopic> load_subtopics(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open sub-topic file " + file.string());
    std::vector<SubTopic> out;
    for (const auto& t : nlohmann::json::parse(in)) {
        out.push_back({t.at("name").get<std::string>(), t.value("parent_domain", std::string(kParentDomain))});
    }
    return out;
}

std::string render_subtopic_prompt(const SubTopic& topic, const prompts::PromptSet& prompts) {
    return prompts::fill(prompts.get(prompts::kSubtopicQa), {{"[sub-topic]", topic.name}});
}

std::string render_seed_prompt(const InstructionEntry& seed, const prompts::PromptSet& prompts) {
    return prompts::fill(prompts.get(prompts::kSeedSummarization),
                         {{"[source]", nlohmann::json(seed.source).dump()},
                          {"[summary]", nlohmann::json(seed.summary).dump()}});
}

GenerationResult generate_from_subtopic(const SubTopic& topic, ChatProvider& provider,
                                        const GenerationSettings& settings) {
    GenerationResult r;
    auto reply = provider.complete(
        user_request(count_instruction(settings), render_subtopic_prompt(topic, settings.prompts), settings));
    std::string diag;
    auto records = parse_llm_json_list(reply.content, &diag);
    if (records.empty()) r.skipped.push_back({diag.empty() ? "empty list" : diag, reply.content});
    for (const auto& rec : records) {
        InstructionEntry e;
        e.task = Task::qa;
        e.question = field_string(rec, "question");
        e.answer = field_string(rec, "answer");
        if (e.question.empty() || e.answer.empty()) {
            r.skipped.push_back({"record lacks non-empty \"question\" and \"answer\"", rec.dump()});
            continue;
        }
        e.provenance = Provenance::generated(reply.model, topic.name);
        e.status = Status::pending;
        r.entries.push_back(std::move(e));
    }
    return finish(std::move(r));
}

GenerationResult generate_mcq_from_subtopic(const SubTopic& topic, ChatProvider& provider,
                                            const GenerationSettings& settings) {
    GenerationResult r;
    auto prompt = prompts::fill(settings.prompts.get(prompts::kMcqGen), {{"[sub-topic]", topic.name}});
    auto reply = provider.complete(user_request(count_instruction(settings), prompt, settings));
    std::string diag;
    auto records = parse_llm_json_list(reply.content, &diag);
    if (records.empty()) r.skipped.push_back({diag.empty() ? "empty list" : diag, reply.content});
    for (const auto& rec : records) {
        try {
            InstructionEntry e = entry_from_dataset_json(Task::mcq, rec);
            e.question = text::trim(e.question);
            e.answer = text::trim(e.answer);
            e.provenance = Provenance::generated(reply.model, topic.name);
            e.status = Status::pending;
            validate(e);
            r.entries.push_back(std::move(e));
        } catch (const std::exception& ex) {
            r.skipped.push_back({ex.what(), rec.dump()});
        }
    }
    return finish(std::move(r));
}

GenerationResult generate_from_seed(const InstructionEntry& seed, ChatProvider& provider,
                                    const GenerationSettings& settings) {
    if (seed.task != Task::summarization) throw ParameterError("seed expansion requires a summarization seed");
    GenerationResult r;
    auto reply =
        provider.complete(user_request(count_instruction(settings), render_seed_prompt(seed, settings.prompts), settings));
    std::string diag;
    auto records = parse_llm_json_list(reply.content, &diag);
    if (records.empty()) r.skipped.push_back({diag.empty() ? "empty list" : diag, reply.content});
    const auto seed_source = text::collapse_whitespace(seed.source);
    const auto seed_summary = text::collapse_whitespace(seed.summary);
    for (const auto& rec : records) {
        InstructionEntry e;
        e.task = Task::summarization;
        if (rec.contains("source") && rec.at("source").is_string()) e.source = rec.at("source").get<std::string>();
        e.summary = field_string(rec, "summary");
        if (text::trim(e.source).empty() || e.summary.empty()) {
            r.skipped.push_back({"record lacks non-empty \"source\" and \"summary\"", rec.dump()});
            continue;
        }
        if (text::collapse_whitespace(e.source) == seed_source && text::collapse_whitespace(e.summary) == seed_summary) {
            r.skipped.push_back({"trivial copy of the seed", rec.dump()});
            continue;
        }
        e.provenance = Provenance::generated(reply.model);
        e.status = Status::pending;
        r.entries.push_back(std::move(e));
    }
    return finish(std::move(r));
}

}  // namespace forge::synthgen
