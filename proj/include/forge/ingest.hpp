#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/docextract.hpp"
#include "forge/document.hpp"

namespace forge::ingest {

struct RepoRef {
    std::string host_url;
    std::string owner;
    std::string name;
    std::string revision;
    std::optional<std::string> license_tag;

    std::string full_name() const { return owner + "/" + name; }
};

struct FilterPolicy {
    std::size_t min_file_bytes = 64;
    std::size_t min_file_lines = 10;
    std::size_t max_file_bytes = 1 << 20;
    double min_alnum_fraction = 0.25;
    std::set<std::string> cobol_extensions{".cbl", ".cob", ".cpy", ".cobol"};
    std::set<std::string> doc_extensions{".html", ".htm", ".md", ".txt", ".rst"};
    std::set<std::string> excluded_extensions{".json", ".xml", ".xsd", ".yaml", ".yml", ".lock", ".png", ".jpg",
                                              ".jpeg", ".gif", ".pdf", ".zip", ".gz", ".jar", ".class", ".exe",
                                              ".dll", ".so", ".o", ".a", ".bin", ".dat"};
    std::set<std::string> excluded_path_fragments{"node_modules/", ".git/"};
    // A repository with fewer kept files than this has all of them dropped.
    std::size_t min_repo_files = 1;

    void validate() const;
    static FilterPolicy from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

FilterPolicy load_policy(const std::filesystem::path& path);

DocKind classify_file(std::string_view path, std::string_view content, const FilterPolicy& policy = {});

FilterVerdict filter_file(const Document& doc, const FilterPolicy& policy = {});

struct CorpusStats {
    std::size_t files_total = 0;
    std::size_t files_kept = 0;
    std::size_t loc_total = 0;     // over kept documents
    std::size_t tokens_total = 0;  // over kept documents, approximate
    std::map<std::string, std::size_t> drop_reasons;

    void add(const Document& doc);
    // Commutative and associative; partial stats merge in any order.
    CorpusStats& merge(const CorpusStats& other);
    nlohmann::json to_json() const;
    bool operator==(const CorpusStats&) const = default;
};

template <typename Range>
CorpusStats corpus_stats(const Range& docs) {
    CorpusStats s;
    for (const auto& d : docs) s.add(d);
    return s;
}

// Builds a Document from raw bytes: classification, docextract routing for
// markup/doc files, then the policy filter.
Document ingest_file(std::string path, std::string content, Origin origin, const FilterPolicy& policy,
                     const docextract::ExtractionRules& rules = {});

struct SourceFile {
    std::string path;
    std::string content;
};

// Ingests one repository's files (parallel per file), then applies min_repo_files.
std::vector<Document> ingest_files(std::vector<SourceFile> files, Origin origin, const FilterPolicy& policy,
                                   const docextract::ExtractionRules& rules = {});

std::vector<SourceFile> read_tree(const std::filesystem::path& root);

// --- Corpus directory: manifest.jsonl + files/<path> for kept documents ---

nlohmann::json document_record(const Document& doc);
Document document_from_record(const nlohmann::json& j);

class CorpusWriter {
public:
    explicit CorpusWriter(std::filesystem::path dir, std::string manifest_name = "manifest.jsonl");
    void write(const Document& doc);
    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    std::filesystem::path manifest_;
};

// Reads every manifest record; content is loaded for kept documents when requested.
std::vector<Document> read_corpus(const std::filesystem::path& dir, bool load_content = true,
                                  std::string_view manifest_name = "manifest.jsonl");

// --- Code host (GitHub-compatible REST) ---

class CodeHostClient {
public:
    // token empty means unauthenticated; see from_env for FORGE_GH_TOKEN.
    CodeHostClient(std::string base_url, std::string token);
    static CodeHostClient from_env(std::string base_url = "https://api.github.com");

    // One page of repository search results.
    std::vector<RepoRef> search_repositories(const std::string& query, int page, int per_page);
    // Resolves a branch or tag to a commit id.
    std::string resolve_revision(const RepoRef& repo);
    // Tarball bytes for the pinned revision.
    std::string download_archive(const RepoRef& repo);

    const std::string& base_url() const noexcept { return base_url_; }

private:
    std::string get(const std::string& path, const char* accept);
    std::string base_url_;
    std::string token_;
};

std::vector<RepoRef> discover_repos(std::span<const std::string> queries, CodeHostClient& api, std::size_t limit);
std::vector<RepoRef> discover_repos(const std::string& query, CodeHostClient& api, std::size_t limit);

// Members of a .tar.gz (or plain .tar); the leading path component is stripped
// when every member shares it, as in code-host tarballs.
std::vector<SourceFile> extract_tarball(std::string_view bytes);

}  // namespace forge::ingest
