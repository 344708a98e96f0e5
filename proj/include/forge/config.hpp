#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/curate.hpp"
#include "forge/dedup.hpp"
#include "forge/docextract.hpp"
#include "forge/ingest.hpp"
#include "forge/provider.hpp"

namespace forge {

struct IngestSettings {
    std::string host_url = "https://api.github.com";
    std::vector<std::string> queries{"language:COBOL"};
    std::size_t repo_limit = 100;
    std::optional<std::filesystem::path> from_dir;  // offline: ingest a local tree instead
    std::vector<std::filesystem::path> doc_dirs;     // web pages / book text for extract-docs
};

struct GenerationConfig {
    std::vector<std::string> generators;  // provider names, used round-robin
    std::size_t subtopic_count = 100;
    std::size_t entries_per_call = 10;
    double temperature = 0.7;
    bool mcq_from_subtopics = true;
    bool qa_from_subtopics = true;
    bool summarization_from_seeds = true;
};

struct JudgeConfig {
    std::string model;  // provider name
    int min_score = 7;
    std::size_t batch_size = 10;
};

struct EvalConfig {
    std::vector<std::string> endpoints;  // provider names
    std::optional<std::string> embedding_url;
    std::vector<Task> tasks{Task::mcq, Task::qa, Task::summarization};
    std::size_t workers = 4;
};

struct SurgeryConfig {
    std::optional<std::filesystem::path> source;
    std::size_t m = 6;
    std::string name_template = "model.layers.{i}.";
};

// One JSON document. Relative paths resolve against the config file's directory.
struct ForgeConfig {
    std::filesystem::path workspace_dir = "workspace";
    std::vector<ProviderConfig> providers;
    std::optional<std::filesystem::path> seed_file;
    std::optional<std::filesystem::path> prompts_dir;
    IngestSettings ingest;
    ingest::FilterPolicy filter_policy;
    docextract::ExtractionRules extraction_rules;
    dedup::DedupParams dedup;
    GenerationConfig generation;
    JudgeConfig judge;
    curate::RuleConfig rules;
    curate::SplitSpec split;
    EvalConfig eval;
    SurgeryConfig surgery;
    std::chrono::seconds review_lease{600};

    nlohmann::json raw;  // the document as loaded

    // Provider names unique, references resolvable, every stage's parameters valid.
    void validate() const;
    const ProviderConfig& provider(const std::string& name) const;
    // sha256 of the canonical (sorted-key) serialization of the loaded document.
    std::string hash() const;

    static ForgeConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

ForgeConfig load_config(const std::filesystem::path& path);

}  // namespace forge
