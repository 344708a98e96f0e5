#include "forge/entry.hpp"

#include <fstream>
#include <set>

#include "forge/errors.hpp"
#include "forge/hashing.hpp"
#include "forge/text.hpp"

namespace forge {

std::string_view to_string(Task t) noexcept {
    switch (t) {
        case Task::mcq: return "mcq";
        case Task::qa: return "qa";
        case Task::summarization: return "summarization";
    }
    return "qa";
}

std::string_view to_string(Status s) noexcept {
    switch (s) {
        case Status::pending: return "pending";
        case Status::accepted: return "accepted";
        case Status::fixed: return "fixed";
        case Status::deleted: return "deleted";
    }
    return "pending";
}

Task parse_task(std::string_view s) {
    for (auto t : kAllTasks) {
        if (to_string(t) == s) return t;
    }
    throw ValidationError("unknown task '" + std::string(s) + "'");
}

Status parse_status(std::string_view s) {
    for (auto st : {Status::pending, Status::accepted, Status::fixed, Status::deleted}) {
        if (to_string(st) == s) return st;
    }
    throw ValidationError("unknown status '" + std::string(s) + "'");
}

namespace {

bool blank(const std::string& s) { return text::trim(s).empty(); }

bool any_option(const InstructionEntry& e) {
    for (const auto& o : e.options) {
        if (!o.empty()) return true;
    }
    return false;
}

std::string require_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) return {};
    if (!j.at(key).is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

std::array<std::string, 4> parse_options(const nlohmann::json& o) {
    std::array<std::string, 4> out;
    if (o.is_object()) {
        if (o.size() != 4) throw ValidationError("mcq options must have exactly 4 labels A-D");
        for (std::size_t i = 0; i < 4; ++i) {
            std::string label(1, kChoiceLabels[i]);
            if (!o.contains(label) || !o.at(label).is_string()) {
                throw ValidationError("mcq options missing label " + label);
            }
            out[i] = o.at(label).get<std::string>();
        }
    } else if (o.is_array()) {
        if (o.size() != 4) throw ValidationError("mcq requires exactly 4 options, got " + std::to_string(o.size()));
        for (std::size_t i = 0; i < 4; ++i) {
            if (!o[i].is_string()) throw ValidationError("mcq options must be strings");
            out[i] = o[i].get<std::string>();
        }
    } else {
        throw ValidationError("mcq options must be an object or array");
    }
    return out;
}

}  // namespace

void validate(const InstructionEntry& e) {
    if (!e.provenance.seed && blank(e.provenance.model)) throw ValidationError("generated entry must name its model");
    switch (e.task) {
        case Task::mcq:
            if (blank(e.question)) throw ValidationError("mcq entry requires a question");
            for (std::size_t i = 0; i < 4; ++i) {
                if (blank(e.options[i])) {
                    throw ValidationError(std::string("mcq option ") + kChoiceLabels[i] + " is empty");
                }
            }
            if (e.answer.size() != 1 || e.answer[0] < 'A' || e.answer[0] > 'D') {
                throw ValidationError("mcq answer must be one of A, B, C, D (got '" + e.answer + "')");
            }
            if (!e.source.empty() || !e.summary.empty()) throw ValidationError("mcq entry must not carry source/summary");
            break;
        case Task::qa:
            if (blank(e.question)) throw ValidationError("qa entry requires a question");
            if (blank(e.answer)) throw ValidationError("qa entry requires an answer");
            if (any_option(e)) throw ValidationError("qa entry must not carry options");
            if (!e.source.empty() || !e.summary.empty()) throw ValidationError("qa entry must not carry source/summary");
            break;
        case Task::summarization:
            if (blank(e.source)) throw ValidationError("summarization entry requires a source");
            if (blank(e.summary)) throw ValidationError("summarization entry requires a summary");
            if (!e.question.empty() || !e.answer.empty() || any_option(e)) {
                throw ValidationError("summarization entry must not carry question/answer/options");
            }
            break;
    }
    if (e.judge_score && (*e.judge_score < 1 || *e.judge_score > 10)) {
        throw ValidationError("judge_score must lie in 1..10");
    }
}

std::string compute_entry_id(const InstructionEntry& e) {
    auto content = to_dataset_json(e);
    content.erase("id");
    content["task"] = to_string(e.task);
    return sha256_hex(content.dump()).substr(0, 16);
}

namespace {

template <typename Json>
Json dataset_fields(const InstructionEntry& e) {
    Json j;
    j["id"] = e.id;
    switch (e.task) {
        case Task::mcq: {
            j["question"] = e.question;
            Json opts;
            for (std::size_t i = 0; i < 4; ++i) opts[std::string(1, kChoiceLabels[i])] = e.options[i];
            j["options"] = opts;
            j["answer"] = e.answer;
            break;
        }
        case Task::qa:
            j["question"] = e.question;
            j["answer"] = e.answer;
            break;
        case Task::summarization:
            j["source"] = e.source;
            j["summary"] = e.summary;
            break;
    }
    return j;
}

}  // namespace

nlohmann::ordered_json to_dataset_json(const InstructionEntry& e) { return dataset_fields<nlohmann::ordered_json>(e); }

InstructionEntry entry_from_dataset_json(Task task, const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("dataset record must be a JSON object");
    InstructionEntry e;
    e.task = task;
    e.id = require_string(j, "id");
    switch (task) {
        case Task::mcq:
            e.question = require_string(j, "question");
            if (!j.contains("options")) throw ValidationError("mcq record requires options");
            e.options = parse_options(j.at("options"));
            e.answer = require_string(j, "answer");
            break;
        case Task::qa:
            e.question = require_string(j, "question");
            e.answer = require_string(j, "answer");
            break;
        case Task::summarization:
            e.source = require_string(j, "source");
            e.summary = require_string(j, "summary");
            break;
    }
    return e;
}

nlohmann::json to_json(const InstructionEntry& e) {
    auto j = dataset_fields<nlohmann::json>(e);
    j["task"] = to_string(e.task);
    nlohmann::json prov{{"kind", e.provenance.seed ? "seed" : "generated"}};
    if (!e.provenance.seed) prov["model"] = e.provenance.model;
    if (e.provenance.sub_topic) prov["sub_topic"] = *e.provenance.sub_topic;
    j["provenance"] = prov;
    if (e.judge_score) j["judge_score"] = *e.judge_score;
    if (e.judge_rationale) j["judge_rationale"] = *e.judge_rationale;
    j["status"] = to_string(e.status);
    if (e.status_reason) j["status_reason"] = *e.status_reason;
    return j;
}

InstructionEntry entry_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("entry record must be a JSON object");
    if (!j.contains("task") || !j.at("task").is_string()) throw ValidationError("entry record requires a task");
    InstructionEntry e = entry_from_dataset_json(parse_task(j.at("task").get<std::string>()), j);
    if (j.contains("provenance")) {
        const auto& p = j.at("provenance");
        if (p.value("kind", "seed") == "generated") {
            e.provenance = Provenance::generated(p.value("model", ""),
                                                 p.contains("sub_topic")
                                                     ? std::optional<std::string>(p.at("sub_topic").get<std::string>())
                                                     : std::nullopt);
        }
    }
    if (j.contains("judge_score") && !j.at("judge_score").is_null()) e.judge_score = j.at("judge_score").get<int>();
    if (j.contains("judge_rationale")) e.judge_rationale = j.at("judge_rationale").get<std::string>();
    if (j.contains("status")) e.status = parse_status(j.at("status").get<std::string>());
    if (j.contains("status_reason")) e.status_reason = j.at("status_reason").get<std::string>();
    return e;
}

void apply_field_changes(InstructionEntry& e, const nlohmann::json& fields) {
    if (!fields.is_object()) throw ValidationError("fix fields must be a JSON object");
    for (const auto& [key, value] : fields.items()) {
        if (key == "question" && e.task != Task::summarization) e.question = value.get<std::string>();
        else if (key == "answer" && e.task != Task::summarization) e.answer = value.get<std::string>();
        else if (key == "options" && e.task == Task::mcq) e.options = parse_options(value);
        else if (key == "source" && e.task == Task::summarization) e.source = value.get<std::string>();
        else if (key == "summary" && e.task == Task::summarization) e.summary = value.get<std::string>();
        else throw ValidationError("field '" + key + "' is not editable for task " + std::string(to_string(e.task)));
    }
}

std::vector<InstructionEntry> load_seed(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open seed file " + path.string());
    std::vector<InstructionEntry> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        InstructionEntry e;
        try {
            auto j = nlohmann::json::parse(line);
            if (!j.is_object() || !j.contains("task")) throw ValidationError("record requires a task");
            e = entry_from_dataset_json(parse_task(j.at("task").get<std::string>()), j);
            validate(e);
        } catch (const std::exception& ex) {
            throw LoadError("seed " + path.string() + ": " + ex.what(), lineno);
        }
        if (e.id.empty()) e.id = compute_entry_id(e);
        e.provenance = Provenance::from_seed();
        e.status = Status::accepted;
        if (!ids.insert(e.id).second) throw LoadError("seed " + path.string() + ": duplicate id " + e.id, lineno);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace forge
