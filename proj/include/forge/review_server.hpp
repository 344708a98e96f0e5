#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "forge/curate.hpp"

namespace forge::curate {

struct ReviewServerOptions {
    std::optional<std::filesystem::path> static_dir;  // review UI bundle, mounted at /
    RuleConfig rules;                                 // published as the shared rule manifest
};

// Field rules the server enforces, for clients to mirror.
nlohmann::json rule_manifest(const RuleConfig& rules);

// HTTP front end over an EntryStore:
//   GET  /api/review/next?batch=N[&task=...][&actor=...]
//   POST /api/review/verdict  {entry_id, verdict, fields?, actor}
//   GET  /api/review/stats
// Errors carry {"error": reason, "message": text} with 400/404/409.
class ReviewServer {
public:
    explicit ReviewServer(EntryStore& store, ReviewServerOptions options = {});
    ~ReviewServer();
    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    // Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    // Serves until stop(); call after bind().
    void serve();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace forge::curate
