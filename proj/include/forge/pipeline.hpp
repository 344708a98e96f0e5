#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/config.hpp"
#include "forge/provider.hpp"

namespace forge::pipeline {

// Stage names double as CLI subcommand names.
inline const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> order{"ingest",     "extract-docs", "dedup",  "gen-topics",
                                                "gen-data",   "judge",        "filter-rules", "assemble",
                                                "export",     "eval",         "upscale"};
    return order;
}

struct Workspace {
    std::filesystem::path root;

    std::filesystem::path corpus() const { return root / "corpus"; }
    std::filesystem::path docs() const { return root / "docs"; }
    std::filesystem::path gen() const { return root / "gen"; }
    std::filesystem::path judge() const { return root / "judge"; }
    std::filesystem::path store() const { return root / "store"; }
    std::filesystem::path assembled() const { return root / "assembled"; }
    std::filesystem::path bundle() const { return root / "bundle"; }
    std::filesystem::path eval() const { return root / "eval"; }
    std::filesystem::path upscaled() const { return root / "upscaled"; }
    std::filesystem::path markers() const { return root / ".markers"; }
};

using ProviderFactory = std::function<std::shared_ptr<ChatProvider>(const ProviderConfig&)>;

struct StageContext {
    const ForgeConfig& config;
    Workspace ws;
    ProviderFactory factory;  // empty = HttpChatProvider
    bool allow_pending = false;

    explicit StageContext(const ForgeConfig& c, ProviderFactory f = {}, bool allow = false)
        : config(c), ws{c.workspace_dir}, factory(std::move(f)), allow_pending(allow) {}
    std::shared_ptr<ChatProvider> provider(const std::string& name) const;
};

// Raised by assemble while entries still await review.
class ReviewGateError : public std::runtime_error {
public:
    explicit ReviewGateError(std::size_t pending)
        : std::runtime_error(std::to_string(pending) +
                             " entries await review; finish review or pass --allow-pending"),
          pending_(pending) {}
    std::size_t pending() const noexcept { return pending_; }

private:
    std::size_t pending_;
};

// Each stage returns a JSON summary.
nlohmann::json stage_ingest(const StageContext& ctx);
nlohmann::json stage_extract_docs(const StageContext& ctx);
nlohmann::json stage_dedup(const StageContext& ctx, const std::optional<std::filesystem::path>& corpus_dir = std::nullopt);
nlohmann::json stage_gen_topics(const StageContext& ctx);
nlohmann::json stage_gen_data(const StageContext& ctx);
nlohmann::json stage_judge(const StageContext& ctx);
nlohmann::json stage_filter_rules(const StageContext& ctx);
nlohmann::json stage_assemble(const StageContext& ctx);
nlohmann::json stage_export(const StageContext& ctx, const std::optional<std::filesystem::path>& out_dir = std::nullopt);
nlohmann::json stage_eval(const StageContext& ctx);
nlohmann::json stage_upscale(const StageContext& ctx);

struct RunOptions {
    bool force = false;
    bool allow_pending = false;
    ProviderFactory factory;
};

struct StageReport {
    std::string name;
    std::string status;  // ran | skipped (complete) | skipped (not configured) | failed | not run
    std::string message;
    nlohmann::json summary;
};

struct RunResult {
    int exit_code = 0;
    std::vector<StageReport> stages;
    nlohmann::json to_json() const;
};

// Runs the requested stages in dependency order, writing a completion marker
// per stage; completed stages (same config hash) are skipped unless forced.
// The first failure stops the run; later stages are reported "not run".
RunResult run_pipeline(const ForgeConfig& config, const std::vector<std::string>& stages, const RunOptions& options = {});

}  // namespace forge::pipeline
