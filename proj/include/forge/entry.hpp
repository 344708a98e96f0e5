#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace forge {

enum class Task { mcq, qa, summarization };
enum class Status { pending, accepted, fixed, deleted };

std::string_view to_string(Task t) noexcept;
std::string_view to_string(Status s) noexcept;
Task parse_task(std::string_view s);
Status parse_status(std::string_view s);
inline constexpr std::array<Task, 3> kAllTasks{Task::mcq, Task::qa, Task::summarization};
inline constexpr std::array<char, 4> kChoiceLabels{'A', 'B', 'C', 'D'};

struct Provenance {
    bool seed = true;
    std::string model;                     // generated only
    std::optional<std::string> sub_topic;  // generated from a sub-topic only

    static Provenance from_seed() { return {}; }
    static Provenance generated(std::string model, std::optional<std::string> topic = std::nullopt) {
        return {false, std::move(model), std::move(topic)};
    }
    bool operator==(const Provenance&) const = default;
};

struct InstructionEntry {
    std::string id;
    Task task = Task::qa;
    std::string question;               // mcq, qa
    std::array<std::string, 4> options;  // mcq, labeled A-D
    std::string answer;                 // mcq: "A".."D"; qa: text
    std::string source;                 // summarization: COBOL paragraph
    std::string summary;                // summarization
    Provenance provenance;
    std::optional<int> judge_score;
    std::optional<std::string> judge_rationale;
    Status status = Status::pending;
    std::optional<std::string> status_reason;

    bool finalized() const noexcept { return status != Status::pending; }
    bool operator==(const InstructionEntry&) const = default;
};

// Throws ValidationError naming the first violated invariant.
void validate(const InstructionEntry& e);

// Stable id: first 16 hex digits of sha256 over the task-specific content.
std::string compute_entry_id(const InstructionEntry& e);

// Full record (store format).
nlohmann::json to_json(const InstructionEntry& e);
InstructionEntry entry_from_json(const nlohmann::json& j);

// Task-specific content fields only, in schema order (dataset format).
nlohmann::ordered_json to_dataset_json(const InstructionEntry& e);
InstructionEntry entry_from_dataset_json(Task task, const nlohmann::json& j);

// Replaces the task-specific fields present in `fields` (keys as in the dataset schema).
void apply_field_changes(InstructionEntry& e, const nlohmann::json& fields);

// One JSON record per line; ids computed when absent; provenance=seed, status=accepted.
std::vector<InstructionEntry> load_seed(const std::filesystem::path& path);

}  // namespace forge
