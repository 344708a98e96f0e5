#include "forge/curate.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_set>

#include "forge/errors.hpp"
#include "forge/hashing.hpp"
#include "forge/text.hpp"

namespace forge::curate {

namespace fs = std::filesystem;

// --- rule filters ---

RuleConfig RuleConfig::from_json(const nlohmann::json& j) {
    RuleConfig r;
    if (j.contains("field_bounds")) {
        for (const auto& [field, b] : j.at("field_bounds").items()) {
            LengthBounds lb{b.at("min").get<std::size_t>(), b.at("max").get<std::size_t>()};
            if (lb.min_chars > lb.max_chars) throw ParameterError("length bounds for '" + field + "' are inverted");
            r.field_bounds[field] = lb;
        }
    }
    if (j.contains("cobol_marker_patterns")) {
        r.cobol_marker_patterns = j.at("cobol_marker_patterns").get<std::vector<std::string>>();
    }
    return r;
}

namespace {

std::vector<std::regex> compile_markers(const std::vector<std::string>& patterns) {
    std::vector<std::regex> out;
    for (const auto& p : patterns) {
        auto flags = std::regex::ECMAScript | std::regex::optimize;
        std::string body = p;
        if (body.rfind("(?i)", 0) == 0) {
            body.erase(0, 4);
            flags |= std::regex::icase;
        }
        try {
            out.emplace_back(body, flags);
        } catch (const std::regex_error& e) {
            throw ParameterError("bad COBOL marker pattern '" + p + "': " + e.what());
        }
    }
    return out;
}

bool matches_marker(std::string_view source, const std::vector<std::regex>& markers) {
    std::size_t start = 0;
    while (start <= source.size()) {
        auto end = source.find('\n', start);
        if (end == std::string_view::npos) end = source.size();
        std::string line(source.substr(start, end - start));
        if (!line.empty() && line.back() == '\r') line.pop_back();
        for (const auto& re : markers) {
            if (std::regex_search(line, re)) return true;
        }
        start = end + 1;
    }
    return false;
}

std::optional<std::string> length_violation(const InstructionEntry& e, const RuleConfig& rules) {
    auto check = [&](const char* field, const std::string& value) -> bool {
        auto it = rules.field_bounds.find(field);
        if (it == rules.field_bounds.end()) return false;
        auto n = text::trim(value).size();
        return n < it->second.min_chars || n > it->second.max_chars;
    };
    switch (e.task) {
        case Task::mcq:
            if (check("question", e.question)) return "length_bounds:question";
            for (const auto& o : e.options) {
                if (check("option", o)) return "length_bounds:option";
            }
            break;
        case Task::qa:
            if (check("question", e.question)) return "length_bounds:question";
            if (check("answer", e.answer)) return "length_bounds:answer";
            break;
        case Task::summarization:
            if (check("source", e.source)) return "length_bounds:source";
            if (check("summary", e.summary)) return "length_bounds:summary";
            break;
    }
    return std::nullopt;
}

bool invalid_label(const InstructionEntry& e) {
    if (e.task != Task::mcq) return false;
    if (e.answer.size() != 1 || e.answer[0] < 'A' || e.answer[0] > 'D') return true;
    return std::any_of(e.options.begin(), e.options.end(), [](const auto& o) { return text::trim(o).empty(); });
}

std::string content_key(const InstructionEntry& e) {
    auto j = to_dataset_json(e);
    j.erase("id");
    std::string key(to_string(e.task));
    for (const auto& [k, v] : j.items()) {
        key += '\x1f';
        key += k;
        key += '\x1f';
        key += text::collapse_whitespace(text::to_lower_ascii(v.dump()));
    }
    return sha256_hex(key);
}

}  // namespace

bool has_cobol_marker(std::string_view source, const RuleConfig& rules) {
    return matches_marker(source, compile_markers(rules.cobol_marker_patterns));
}

RuleFilterOutcome apply_rule_filters(std::vector<InstructionEntry> entries, const RuleConfig& rules) {
    auto markers = compile_markers(rules.cobol_marker_patterns);
    RuleFilterOutcome out;
    std::unordered_set<std::string> seen;
    for (auto& e : entries) {
        std::optional<std::string> rule;
        if (invalid_label(e)) rule = "invalid_label";
        if (!rule) rule = length_violation(e, rules);
        if (!rule && e.task == Task::summarization && !matches_marker(e.source, markers)) rule = "not_cobol";
        if (!rule && !seen.insert(content_key(e)).second) rule = "duplicate";
        if (rule) {
            // Finalized entries are immutable; only pending ones transition.
            if (e.status == Status::pending) {
                e.status = Status::deleted;
                e.status_reason = *rule;
            }
            out.rejected.push_back({std::move(e), *rule});
        } else {
            out.kept.push_back(std::move(e));
        }
    }
    return out;
}

// --- audit ---

nlohmann::json AuditRecord::to_json() const {
    nlohmann::json j{{"timestamp_ms", timestamp_ms}, {"entry_id", entry_id}, {"transition", transition}, {"actor", actor}};
    if (reason) j["reason"] = *reason;
    return j;
}

AuditRecord AuditRecord::from_json(const nlohmann::json& j) {
    AuditRecord r;
    r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
    r.entry_id = j.at("entry_id").get<std::string>();
    r.transition = j.at("transition").get<std::string>();
    r.actor = j.at("actor").get<std::string>();
    if (j.contains("reason")) r.reason = j.at("reason").get<std::string>();
    return r;
}

VerdictKind parse_verdict_kind(std::string_view s) {
    if (s == "accept") return VerdictKind::accept;
    if (s == "fix") return VerdictKind::fix;
    if (s == "delete") return VerdictKind::discard;
    throw ValidationError("unknown verdict '" + std::string(s) + "' (expected accept, fix or delete)");
}

nlohmann::json StoreStats::to_json() const {
    return {{"by_task_status", by_task_status}, {"by_status", by_status}, {"leased", leased}, {"total", total}};
}

// --- store ---

namespace {

constexpr const char* kLogName = "store.jsonl";

void write_all(int fd, std::string_view data, const fs::path& path) {
    while (!data.empty()) {
        auto n = ::write(fd, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            throw IoError("write failed on " + path.string());
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

void durable_write(const fs::path& path, std::string_view data, bool append) {
    int flags = O_WRONLY | O_CREAT | O_CLOEXEC | (append ? O_APPEND : O_TRUNC);
    int fd = ::open(path.c_str(), flags, 0644);
    if (fd < 0) throw IoError("cannot open " + path.string());
    try {
        write_all(fd, data, path);
        if (::fsync(fd) != 0) throw IoError("fsync failed on " + path.string());
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
}

std::int64_t to_ms(std::chrono::system_clock::time_point t) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

}  // namespace

EntryStore::EntryStore(fs::path dir, Clock clock, std::chrono::seconds lease)
    : dir_(std::move(dir)), log_(dir_ / kLogName), clock_(std::move(clock)), lease_(lease) {
    if (lease_.count() <= 0) throw ParameterError("lease duration must be positive");
    fs::create_directories(dir_);
    std::ifstream in(log_);
    if (!in) return;
    std::string line;
    std::size_t lineno = 0;
    bool truncated_tail = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (truncated_tail) throw CorruptionError("store log " + log_.string() + " is corrupt at line " + std::to_string(lineno - 1));
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            // A torn final append (crash mid-write) is dropped; anything else is corruption.
            truncated_tail = true;
            continue;
        }
        try {
            const auto op = rec.at("op").get<std::string>();
            if (op == "put") {
                auto e = entry_from_json(rec.at("entry"));
                entries_[e.id] = std::move(e);
                if (rec.contains("audit")) audit_.push_back(AuditRecord::from_json(rec.at("audit")));
            } else if (op == "audit") {
                audit_.push_back(AuditRecord::from_json(rec.at("audit")));
            } else {
                throw CorruptionError("unknown op '" + op + "'");
            }
        } catch (const std::exception& e) {
            throw CorruptionError("store log " + log_.string() + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

std::chrono::system_clock::time_point EntryStore::now() const {
    return clock_ ? clock_() : std::chrono::system_clock::now();
}

void EntryStore::append(const std::vector<nlohmann::json>& records) {
    if (records.empty()) return;
    std::string buf;
    for (const auto& r : records) {
        buf += r.dump();
        buf += '\n';
    }
    durable_write(log_, buf, true);
}

AuditRecord EntryStore::transition(const InstructionEntry& before, Status after, const std::string& actor,
                                   std::optional<std::string> reason) {
    AuditRecord r;
    r.timestamp_ms = to_ms(now());
    r.entry_id = before.id;
    r.transition = std::string(to_string(before.status)) + "->" + std::string(to_string(after));
    r.actor = actor;
    r.reason = std::move(reason);
    return r;
}

std::size_t EntryStore::insert(const std::vector<InstructionEntry>& entries) {
    std::lock_guard lock(mu_);
    std::vector<nlohmann::json> records;
    std::vector<const InstructionEntry*> fresh;
    std::set<std::string> batch_ids;
    for (const auto& e : entries) {
        if (e.id.empty()) throw ValidationError("entry without id cannot be stored");
        if (entries_.count(e.id) || !batch_ids.insert(e.id).second) continue;
        records.push_back({{"op", "put"}, {"entry", to_json(e)}});
        fresh.push_back(&e);
    }
    append(records);
    for (const auto* e : fresh) entries_[e->id] = *e;
    return fresh.size();
}

void EntryStore::set_judge_score(const std::string& id, int score, const std::optional<std::string>& rationale) {
    if (score < 1 || score > 10) throw ValidationError("judge_score must lie in 1..10");
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) throw NotFoundError("no entry " + id);
    auto updated = it->second;
    updated.judge_score = score;
    updated.judge_rationale = rationale;
    append({{{"op", "put"}, {"entry", to_json(updated)}}});
    it->second = std::move(updated);
}

InstructionEntry EntryStore::reject(const std::string& id, const std::string& reason, const std::string& actor) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) throw NotFoundError("no entry " + id);
    if (it->second.finalized()) {
        throw ConflictError("entry " + id + " is already " + std::string(to_string(it->second.status)));
    }
    auto updated = it->second;
    auto audit = transition(updated, Status::deleted, actor, reason);
    updated.status = Status::deleted;
    updated.status_reason = reason;
    append({{{"op", "put"}, {"entry", to_json(updated)}, {"audit", audit.to_json()}}});
    it->second = updated;
    audit_.push_back(std::move(audit));
    leases_.erase(id);
    return updated;
}

std::vector<InstructionEntry> EntryStore::review_next(std::size_t batch_size, std::optional<Task> task,
                                                      const std::string& actor) {
    if (batch_size == 0) throw ParameterError("batch_size must be at least 1");
    std::lock_guard lock(mu_);
    const auto t = now();
    std::vector<const InstructionEntry*> queue;
    for (const auto& [id, e] : entries_) {
        if (e.status != Status::pending) continue;
        if (task && e.task != *task) continue;
        auto lease = leases_.find(id);
        if (lease != leases_.end() && lease->second.expires > t) continue;
        queue.push_back(&e);
    }
    std::stable_sort(queue.begin(), queue.end(), [](const InstructionEntry* a, const InstructionEntry* b) {
        return a->judge_score.value_or(0) < b->judge_score.value_or(0);
    });
    if (queue.size() > batch_size) queue.resize(batch_size);
    std::vector<InstructionEntry> out;
    for (const auto* e : queue) {
        leases_[e->id] = Lease{t + lease_, actor};
        out.push_back(*e);
    }
    return out;
}

InstructionEntry EntryStore::review_verdict(const std::string& id, const Verdict& verdict, const std::string& actor) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) throw NotFoundError("no entry " + id);
    if (it->second.finalized()) {
        throw ConflictError("entry " + id + " is already " + std::string(to_string(it->second.status)));
    }
    auto updated = it->second;
    Status next = Status::accepted;
    switch (verdict.kind) {
        case VerdictKind::accept:
            break;
        case VerdictKind::fix:
            try {
                apply_field_changes(updated, verdict.fields);
            } catch (const nlohmann::json::exception& e) {
                throw ValidationError(std::string("invalid fix fields: ") + e.what());
            }
            validate(updated);
            next = Status::fixed;
            break;
        case VerdictKind::discard:
            next = Status::deleted;
            break;
    }
    auto audit = transition(updated, next, actor, std::nullopt);
    updated.status = next;
    updated.status_reason = next == Status::deleted ? std::optional<std::string>("reviewer") : std::nullopt;
    append({{{"op", "put"}, {"entry", to_json(updated)}, {"audit", audit.to_json()}}});
    it->second = updated;
    audit_.push_back(std::move(audit));
    leases_.erase(id);
    return updated;
}

InstructionEntry EntryStore::reopen(const std::string& id, const std::string& actor, const std::string& reason) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) throw NotFoundError("no entry " + id);
    if (!it->second.finalized()) throw ConflictError("entry " + id + " is not finalized");
    auto updated = it->second;
    auto audit = transition(updated, Status::pending, actor, reason);
    updated.status = Status::pending;
    updated.status_reason.reset();
    append({{{"op", "put"}, {"entry", to_json(updated)}, {"audit", audit.to_json()}}});
    it->second = updated;
    audit_.push_back(std::move(audit));
    return updated;
}

std::optional<InstructionEntry> EntryStore::get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::vector<InstructionEntry> EntryStore::entries() const {
    std::lock_guard lock(mu_);
    std::vector<InstructionEntry> out;
    out.reserve(entries_.size());
    for (const auto& [_, e] : entries_) out.push_back(e);
    return out;
}

std::vector<AuditRecord> EntryStore::audit_log() const {
    std::lock_guard lock(mu_);
    return audit_;
}

StoreStats EntryStore::stats() const {
    std::lock_guard lock(mu_);
    StoreStats s;
    const auto t = now();
    for (auto task : kAllTasks) {
        for (auto st : {Status::pending, Status::accepted, Status::fixed, Status::deleted}) {
            s.by_task_status[std::string(to_string(task))][std::string(to_string(st))] = 0;
            s.by_status[std::string(to_string(st))] = 0;
        }
    }
    for (const auto& [id, e] : entries_) {
        ++s.by_task_status[std::string(to_string(e.task))][std::string(to_string(e.status))];
        ++s.by_status[std::string(to_string(e.status))];
        auto lease = leases_.find(id);
        if (e.status == Status::pending && lease != leases_.end() && lease->second.expires > t) ++s.leased;
    }
    s.total = entries_.size();
    return s;
}

std::size_t EntryStore::pending_count() const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(),
                                                  [](const auto& kv) { return kv.second.status == Status::pending; }));
}

void EntryStore::compact() {
    std::lock_guard lock(mu_);
    std::string buf;
    for (const auto& [_, e] : entries_) {
        buf += nlohmann::json{{"op", "put"}, {"entry", to_json(e)}}.dump();
        buf += '\n';
    }
    for (const auto& a : audit_) {
        buf += nlohmann::json{{"op", "audit"}, {"audit", a.to_json()}}.dump();
        buf += '\n';
    }
    auto tmp = log_;
    tmp += ".tmp";
    durable_write(tmp, buf, false);
    fs::rename(tmp, log_);
}

// --- split ---

std::string_view to_string(Split s) noexcept {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "train";
}

namespace {

void validate_task_split(const TaskSplit& ts, std::string_view label) {
    if (ts.fractions.has_value() == ts.counts.has_value()) {
        throw ParameterError("split for " + std::string(label) + " needs exactly one of fractions or counts");
    }
    if (ts.fractions) {
        double sum = 0;
        for (double f : *ts.fractions) {
            if (!(f >= 0.0)) throw ParameterError("split fractions must be non-negative");
            sum += f;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("split fractions must sum to 1");
    }
}

TaskSplit task_split_from_json(const nlohmann::json& j) {
    TaskSplit ts;
    if (j.contains("fractions")) ts.fractions = j.at("fractions").get<std::array<double, 3>>();
    if (j.contains("counts")) ts.counts = j.at("counts").get<std::array<std::size_t, 3>>();
    return ts;
}

nlohmann::json task_split_to_json(const TaskSplit& ts) {
    nlohmann::json j = nlohmann::json::object();
    if (ts.fractions) j["fractions"] = *ts.fractions;
    if (ts.counts) j["counts"] = *ts.counts;
    return j;
}

// Uniform integer in [0, bound) by rejection; independent of any library
// distribution so shuffles are identical across standard libraries.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

std::array<std::size_t, 3> split_sizes(const TaskSplit& ts, std::size_t n, Task task) {
    if (ts.counts) {
        const auto& c = *ts.counts;
        if (c[0] + c[1] + c[2] != n) {
            throw ValidationError("explicit split counts for " + std::string(to_string(task)) + " sum to " +
                                  std::to_string(c[0] + c[1] + c[2]) + " but " + std::to_string(n) +
                                  " finalized entries exist");
        }
        return c;
    }
    const auto& f = *ts.fractions;
    auto round_half_up = [](double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); };
    std::size_t train = std::min(n, round_half_up(f[0] * static_cast<double>(n)));
    std::size_t val = std::min(n - train, round_half_up(f[1] * static_cast<double>(n)));
    return {train, val, n - train - val};
}

}  // namespace

void SplitSpec::validate() const {
    validate_task_split(default_split, "default");
    for (const auto& [task, ts] : per_task) validate_task_split(ts, to_string(task));
}

SplitSpec SplitSpec::from_json(const nlohmann::json& j) {
    SplitSpec s;
    if (j.contains("shuffle_seed")) s.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
    if (j.contains("default")) s.default_split = task_split_from_json(j.at("default"));
    if (j.contains("tasks")) {
        for (const auto& [name, ts] : j.at("tasks").items()) s.per_task[parse_task(name)] = task_split_from_json(ts);
    }
    s.validate();
    return s;
}

nlohmann::json SplitSpec::to_json() const {
    nlohmann::json tasks = nlohmann::json::object();
    for (const auto& [task, ts] : per_task) tasks[std::string(to_string(task))] = task_split_to_json(ts);
    return {{"shuffle_seed", shuffle_seed}, {"default", task_split_to_json(default_split)}, {"tasks", tasks}};
}

SplitSet split_dataset(std::vector<InstructionEntry> entries, const SplitSpec& spec) {
    spec.validate();
    std::map<Task, std::vector<InstructionEntry>> by_task;
    std::set<std::string> ids;
    for (auto& e : entries) {
        if (e.status != Status::accepted && e.status != Status::fixed) {
            throw ValidationError("entry " + e.id + " is " + std::string(to_string(e.status)) +
                                  "; only accepted or fixed entries can be split");
        }
        if (!ids.insert(e.id).second) throw ValidationError("duplicate entry id " + e.id);
        by_task[e.task].push_back(std::move(e));
    }
    SplitSet out;
    for (auto task : kAllTasks) {
        auto& list = by_task[task];
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        std::mt19937_64 rng(mix64(spec.shuffle_seed ^ mix64(static_cast<std::uint64_t>(task) + 1)));
        for (std::size_t i = list.size(); i > 1; --i) {
            std::swap(list[i - 1], list[uniform_below(rng, i)]);
        }
        auto it = spec.per_task.find(task);
        const auto& ts = it != spec.per_task.end() ? it->second : spec.default_split;
        auto sizes = split_sizes(ts, list.size(), task);
        auto& parts = out[task];
        std::size_t pos = 0;
        for (std::size_t s = 0; s < 3; ++s) {
            parts[s].assign(std::make_move_iterator(list.begin() + static_cast<std::ptrdiff_t>(pos)),
                            std::make_move_iterator(list.begin() + static_cast<std::ptrdiff_t>(pos + sizes[s])));
            pos += sizes[s];
        }
    }
    return out;
}

// --- export ---

std::string bundle_file_name(Task task, Split split) {
    return std::string(to_string(task)) + "_" + std::string(to_string(split)) + ".jsonl";
}

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kBundleFormat = "forge-benchmark/1";

}  // namespace

BenchmarkBundle export_benchmark(const SplitSet& splits, const fs::path& out_dir) {
    std::set<std::string> ids;
    for (const auto& [task, parts] : splits) {
        for (const auto& part : parts) {
            for (const auto& e : part) {
                if (e.task != task) throw ValidationError("entry " + e.id + " filed under the wrong task");
                if (!ids.insert(std::string(to_string(task)) + "/" + e.id).second) {
                    throw ValidationError("entry " + e.id + " appears in more than one split");
                }
            }
        }
    }
    fs::create_directories(out_dir);
    const auto manifest_path = out_dir / kManifestName;
    fs::remove(manifest_path);

    nlohmann::ordered_json files = nlohmann::ordered_json::object();
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    Sha256 bundle;
    std::size_t total = 0;
    static const std::vector<InstructionEntry> kEmpty;
    for (auto task : kAllTasks) {
        auto found = splits.find(task);
        for (auto split : kAllSplits) {
            const auto& part = found == splits.end() ? kEmpty : found->second[static_cast<std::size_t>(split)];
            std::string body;
            for (const auto& e : part) {
                body += to_dataset_json(e).dump();
                body += '\n';
            }
            const auto name = bundle_file_name(task, split);
            std::ofstream out(out_dir / name, std::ios::binary | std::ios::trunc);
            out << body;
            out.close();
            if (!out) throw IoError("failed to write " + (out_dir / name).string());
            const auto digest = sha256_hex(body);
            files[name] = {{"task", to_string(task)}, {"split", to_string(split)}, {"count", part.size()}, {"sha256", digest}};
            counts[std::string(to_string(task))][std::string(to_string(split))] = part.size();
            bundle.update(name + " " + digest + "\n");
            total += part.size();
        }
    }
    nlohmann::ordered_json manifest{{"format", kBundleFormat},
                                    {"files", files},
                                    {"counts", counts},
                                    {"total", total},
                                    {"bundle_sha256", bundle.hex_digest()}};
    auto tmp = manifest_path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << manifest.dump(2) << '\n';
        out.close();
        if (!out) {
            fs::remove(tmp);
            throw IoError("failed to write " + manifest_path.string());
        }
    }
    fs::rename(tmp, manifest_path);
    return {out_dir, nlohmann::json::parse(manifest.dump())};
}

SplitSet load_bundle(const fs::path& dir) {
    std::ifstream min(dir / kManifestName);
    if (!min) throw IoError("no manifest in " + dir.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(min);
    } catch (const nlohmann::json::parse_error& e) {
        throw CorruptionError("unreadable manifest in " + dir.string() + ": " + e.what());
    }
    if (manifest.value("format", "") != kBundleFormat) throw CorruptionError("unsupported bundle format in " + dir.string());
    SplitSet out;
    for (auto task : kAllTasks) {
        for (auto split : kAllSplits) {
            const auto name = bundle_file_name(task, split);
            std::ifstream in(dir / name, std::ios::binary);
            if (!in) throw IoError("missing bundle file " + (dir / name).string());
            std::stringstream ss;
            ss << in.rdbuf();
            const auto body = ss.str();
            const auto& meta = manifest.at("files").at(name);
            if (sha256_hex(body) != meta.at("sha256").get<std::string>()) {
                throw CorruptionError("content hash mismatch for " + name);
            }
            auto& part = out[task][static_cast<std::size_t>(split)];
            std::istringstream lines(body);
            std::string line;
            std::size_t lineno = 0;
            while (std::getline(lines, line)) {
                ++lineno;
                try {
                    auto e = entry_from_dataset_json(task, nlohmann::json::parse(line));
                    e.status = Status::accepted;
                    part.push_back(std::move(e));
                } catch (const std::exception& ex) {
                    throw LoadError(name + ": " + ex.what(), lineno);
                }
            }
            if (part.size() != meta.at("count").get<std::size_t>()) {
                throw CorruptionError("line count of " + name + " disagrees with the manifest");
            }
        }
    }
    return out;
}

}  // namespace forge::curate
