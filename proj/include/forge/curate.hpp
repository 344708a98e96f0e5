#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/entry.hpp"

namespace forge::curate {

// --- rule-based filters ---

struct LengthBounds {
    std::size_t min_chars;
    std::size_t max_chars;
};

struct RuleConfig {
    std::map<std::string, LengthBounds> field_bounds{{"question", {8, 4000}},
                                                     {"answer", {1, 8000}},
                                                     {"option", {1, 1000}},
                                                     {"source", {16, 40000}},
                                                     {"summary", {8, 4000}}};
    // A summarization source must match one of these on some line. A leading
    // "(?i)" makes a pattern case-insensitive.
    std::vector<std::string> cobol_marker_patterns{
        R"((?i)\b(identification|id|environment|data|procedure)\s+division\b)",
        R"((?i)^\s*[a-z0-9][a-z0-9-]*\s+section\s*\.)",
        R"((?i)^\s*[a-z0-9]+(-[a-z0-9]+)+\s*\.\s*$)",
        R"(^\s*[A-Z][A-Z0-9]+\s*\.\s*$)"};

    static RuleConfig from_json(const nlohmann::json& j);
};

struct Rejection {
    InstructionEntry entry;
    std::string rule;  // duplicate | length_bounds:<field> | invalid_label | not_cobol
};

struct RuleFilterOutcome {
    std::vector<InstructionEntry> kept;
    std::vector<Rejection> rejected;
};

bool has_cobol_marker(std::string_view source, const RuleConfig& rules = {});

// Built-in rules applied in order: invalid_label, length_bounds, not_cobol,
// duplicate (normalized content hash; first occurrence wins). Rejected pending
// entries come back as deleted with the rule as status_reason.
RuleFilterOutcome apply_rule_filters(std::vector<InstructionEntry> entries, const RuleConfig& rules = {});

// --- persistent entry store ---

struct AuditRecord {
    std::int64_t timestamp_ms = 0;
    std::string entry_id;
    std::string transition;  // e.g. "pending->accepted"
    std::string actor;
    std::optional<std::string> reason;

    nlohmann::json to_json() const;
    static AuditRecord from_json(const nlohmann::json& j);
};

enum class VerdictKind { accept, fix, discard };
VerdictKind parse_verdict_kind(std::string_view s);  // "accept" | "fix" | "delete"

struct Verdict {
    VerdictKind kind = VerdictKind::accept;
    nlohmann::json fields;  // fix only
};

struct StoreStats {
    std::map<std::string, std::map<std::string, std::size_t>> by_task_status;  // task -> status -> count
    std::map<std::string, std::size_t> by_status;
    std::size_t leased = 0;
    std::size_t total = 0;

    nlohmann::json to_json() const;
};

using Clock = std::function<std::chrono::system_clock::time_point()>;

// Entries plus an append-only audit log, persisted as a JSON Lines write-ahead
// log (store.jsonl) that is fsync'ed per mutation and replayed on open. All
// methods are thread-safe; mutations serialize on one lock.
class EntryStore {
public:
    explicit EntryStore(std::filesystem::path dir, Clock clock = {},
                        std::chrono::seconds lease = std::chrono::minutes(10));

    // Adds entries whose id is not yet present; returns how many were added.
    std::size_t insert(const std::vector<InstructionEntry>& entries);
    // Replaces judge score/rationale; not a status transition.
    void set_judge_score(const std::string& id, int score, const std::optional<std::string>& rationale);
    // Filter path: pending -> deleted with a reason.
    InstructionEntry reject(const std::string& id, const std::string& reason, const std::string& actor);

    // Up to batch_size unleased pending entries, lowest judge score first
    // (unscored first), each leased to `actor`.
    std::vector<InstructionEntry> review_next(std::size_t batch_size, std::optional<Task> task = std::nullopt,
                                              const std::string& actor = "reviewer");
    InstructionEntry review_verdict(const std::string& id, const Verdict& verdict, const std::string& actor);
    // Finalized -> pending, audited.
    InstructionEntry reopen(const std::string& id, const std::string& actor, const std::string& reason);

    std::optional<InstructionEntry> get(const std::string& id) const;
    std::vector<InstructionEntry> entries() const;  // sorted by id
    std::vector<AuditRecord> audit_log() const;
    StoreStats stats() const;
    std::size_t pending_count() const;

    // Rewrites the log as one record per entry and audit event.
    void compact();

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    struct Lease {
        std::chrono::system_clock::time_point expires;
        std::string actor;
    };

    std::chrono::system_clock::time_point now() const;
    void append(const std::vector<nlohmann::json>& records);
    AuditRecord transition(const InstructionEntry& before, Status after, const std::string& actor,
                           std::optional<std::string> reason);

    std::filesystem::path dir_;
    std::filesystem::path log_;
    Clock clock_;
    std::chrono::seconds lease_;
    mutable std::mutex mu_;
    std::map<std::string, InstructionEntry> entries_;
    std::vector<AuditRecord> audit_;
    std::map<std::string, Lease> leases_;
};

// --- splitting and export ---

enum class Split { train, validation, test };
inline constexpr std::array<Split, 3> kAllSplits{Split::train, Split::validation, Split::test};
std::string_view to_string(Split s) noexcept;

struct TaskSplit {
    std::optional<std::array<double, 3>> fractions;
    std::optional<std::array<std::size_t, 3>> counts;
};

struct SplitSpec {
    std::uint64_t shuffle_seed = 0;
    TaskSplit default_split{std::array<double, 3>{0.8, 0.1, 0.1}, std::nullopt};
    std::map<Task, TaskSplit> per_task;

    void validate() const;
    static SplitSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

using SplitSet = std::map<Task, std::array<std::vector<InstructionEntry>, 3>>;

// Deterministic per-task shuffle (entries first ordered by id, then a seeded
// Fisher-Yates) and partition. Fractions round half up for train, then
// validation; test takes the remainder.
SplitSet split_dataset(std::vector<InstructionEntry> entries, const SplitSpec& spec);

std::string bundle_file_name(Task task, Split split);

struct BenchmarkBundle {
    std::filesystem::path dir;
    nlohmann::json manifest;

    std::string bundle_hash() const { return manifest.at("bundle_sha256").get<std::string>(); }
};

// Nine JSON Lines files plus manifest.json (written last).
BenchmarkBundle export_benchmark(const SplitSet& splits, const std::filesystem::path& out_dir);

// Reads a bundle back; counts are checked against the manifest.
SplitSet load_bundle(const std::filesystem::path& dir);

}  // namespace forge::curate
