#include <chrono>
#include <cstdlib>

#include <httplib.h>

#include "forge/errors.hpp"
#include "forge/ingest.hpp"
#include "http_util.hpp"

namespace forge::ingest {

CodeHostClient::CodeHostClient(std::string base_url, std::string token)
    : base_url_(std::move(base_url)), token_(std::move(token)) {}

CodeHostClient CodeHostClient::from_env(std::string base_url) {
    const char* tok = std::getenv("FORGE_GH_TOKEN");
    return CodeHostClient(std::move(base_url), tok ? tok : "");
}

std::string CodeHostClient::get(const std::string& path, const char* accept) {
    auto url = detail::split_url(base_url_);
    httplib::Client cli(url.origin);
    cli.set_follow_location(true);
    cli.set_connection_timeout(30);
    cli.set_read_timeout(300);
    httplib::Headers headers{{"Accept", accept}, {"User-Agent", "forge-ingest"}};
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    auto res = cli.Get(url.prefix + path, headers);
    if (!res) throw Error("code host request failed: " + httplib::to_string(res.error()) + " for " + path);
    if (res->status == 401) throw CredentialError("code host rejected credentials (set FORGE_GH_TOKEN)");
    bool limited = res->status == 429 ||
                   (res->status == 403 && res->get_header_value("X-RateLimit-Remaining") == "0");
    if (limited) {
        double delay = 60.0;
        if (res->has_header("Retry-After")) {
            delay = std::atof(res->get_header_value("Retry-After").c_str());
        } else if (res->has_header("X-RateLimit-Reset")) {
            auto reset = std::atof(res->get_header_value("X-RateLimit-Reset").c_str());
            auto now = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
            delay = std::max(0.0, reset - now);
        }
        throw RetryAfterError("code host rate limit reached", delay);
    }
    if (res->status < 200 || res->status >= 300) {
        throw Error("code host returned HTTP " + std::to_string(res->status) + " for " + path);
    }
    return res->body;
}

std::vector<RepoRef> CodeHostClient::search_repositories(const std::string& query, int page, int per_page) {
    auto body = get("/search/repositories?q=" + detail::url_encode(query) + "&per_page=" + std::to_string(per_page) +
                        "&page=" + std::to_string(page),
                    "application/vnd.github+json");
    std::vector<RepoRef> out;
    auto j = nlohmann::json::parse(body);
    for (const auto& item : j.value("items", nlohmann::json::array())) {
        RepoRef r;
        r.host_url = base_url_;
        r.owner = item.at("owner").at("login").get<std::string>();
        r.name = item.at("name").get<std::string>();
        r.revision = item.value("default_branch", "");
        if (item.contains("license") && item["license"].is_object() && item["license"].contains("spdx_id")) {
            r.license_tag = item["license"]["spdx_id"].get<std::string>();
        }
        if (r.owner.empty() || r.name.empty()) continue;
        out.push_back(std::move(r));
    }
    return out;
}

std::string CodeHostClient::resolve_revision(const RepoRef& repo) {
    auto body = get("/repos/" + repo.owner + "/" + repo.name + "/commits/" + detail::url_encode(repo.revision),
                    "application/vnd.github+json");
    return nlohmann::json::parse(body).at("sha").get<std::string>();
}

std::string CodeHostClient::download_archive(const RepoRef& repo) {
    if (repo.revision.empty()) throw ParameterError("repository " + repo.full_name() + " has no pinned revision");
    return get("/repos/" + repo.owner + "/" + repo.name + "/tarball/" + repo.revision, "application/octet-stream");
}

}  // namespace forge::ingest
