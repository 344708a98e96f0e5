#include "forge/ingest.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <zlib.h>

#include "forge/errors.hpp"
#include "forge/parallel.hpp"
#include "forge/text.hpp"

namespace forge::ingest {

namespace {

std::string extension_of(std::string_view path) {
    auto slash = path.find_last_of('/');
    auto base = slash == std::string_view::npos ? path : path.substr(slash + 1);
    auto dot = base.find_last_of('.');
    if (dot == std::string_view::npos || dot == 0) return {};
    return text::to_lower_ascii(base.substr(dot));
}

bool is_html(std::string_view path) {
    auto ext = extension_of(path);
    return ext == ".html" || ext == ".htm";
}

}  // namespace

void FilterPolicy::validate() const {
    if (!(min_alnum_fraction >= 0.0 && min_alnum_fraction <= 1.0)) {
        throw ValidationError("min_alnum_fraction must lie in [0, 1]");
    }
    if (min_file_bytes >= max_file_bytes) throw ValidationError("min_file_bytes must be < max_file_bytes");
}

FilterPolicy FilterPolicy::from_json(const nlohmann::json& j) {
    FilterPolicy p;
    p.min_file_bytes = j.value("min_file_bytes", p.min_file_bytes);
    p.min_file_lines = j.value("min_file_lines", p.min_file_lines);
    p.max_file_bytes = j.value("max_file_bytes", p.max_file_bytes);
    p.min_alnum_fraction = j.value("min_alnum_fraction", p.min_alnum_fraction);
    p.cobol_extensions = j.value("cobol_extensions", p.cobol_extensions);
    p.doc_extensions = j.value("doc_extensions", p.doc_extensions);
    p.excluded_extensions = j.value("excluded_extensions", p.excluded_extensions);
    p.excluded_path_fragments = j.value("excluded_path_fragments", p.excluded_path_fragments);
    p.min_repo_files = j.value("min_repo_files", p.min_repo_files);
    p.validate();
    return p;
}

nlohmann::json FilterPolicy::to_json() const {
    return {{"min_file_bytes", min_file_bytes},
            {"min_file_lines", min_file_lines},
            {"max_file_bytes", max_file_bytes},
            {"min_alnum_fraction", min_alnum_fraction},
            {"cobol_extensions", cobol_extensions},
            {"doc_extensions", doc_extensions},
            {"excluded_extensions", excluded_extensions},
            {"excluded_path_fragments", excluded_path_fragments},
            {"min_repo_files", min_repo_files}};
}

FilterPolicy load_policy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open policy file " + path.string());
    try {
        return FilterPolicy::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("policy file " + path.string() + ": " + e.what());
    }
}

DocKind classify_file(std::string_view path, std::string_view content, const FilterPolicy& policy) {
    if (text::contains_nul(content)) return DocKind::excluded;
    std::string anchored = "/" + std::string(path);
    for (const auto& frag : policy.excluded_path_fragments) {
        if (anchored.find(frag) != std::string::npos) return DocKind::excluded;
    }
    auto ext = extension_of(path);
    if (policy.excluded_extensions.count(ext)) return DocKind::excluded;
    if (policy.cobol_extensions.count(ext)) return DocKind::cobol;
    if (policy.doc_extensions.count(ext)) return DocKind::mainframe_doc;
    return DocKind::excluded;
}

FilterVerdict filter_file(const Document& doc, const FilterPolicy& policy) {
    const std::string_view c = doc.content;
    if (text::contains_nul(c)) return DropReason::binary;
    if (doc.kind == DocKind::excluded) return DropReason::excluded_kind;
    if (c.size() < policy.min_file_bytes || text::count_lines(c) < policy.min_file_lines) return DropReason::too_short;
    if (c.size() > policy.max_file_bytes) return DropReason::too_long;
    if (text::alnum_fraction(c) < policy.min_alnum_fraction) return DropReason::low_alnum_fraction;
    return std::nullopt;
}

void CorpusStats::add(const Document& doc) {
    ++files_total;
    if (doc.kept()) {
        ++files_kept;
        loc_total += doc.loc;
        tokens_total += doc.approx_tokens;
    } else {
        ++drop_reasons[std::string(to_string(*doc.filter_status))];
    }
}

CorpusStats& CorpusStats::merge(const CorpusStats& other) {
    files_total += other.files_total;
    files_kept += other.files_kept;
    loc_total += other.loc_total;
    tokens_total += other.tokens_total;
    for (const auto& [k, v] : other.drop_reasons) drop_reasons[k] += v;
    return *this;
}

nlohmann::json CorpusStats::to_json() const {
    return {{"files_total", files_total},
            {"files_kept", files_kept},
            {"loc_total", loc_total},
            {"tokens_total", tokens_total},
            {"tokens_are_approximate", true},
            {"drop_reasons", drop_reasons}};
}

Document ingest_file(std::string path, std::string content, Origin origin, const FilterPolicy& policy,
                     const docextract::ExtractionRules& rules) {
    DocKind kind = classify_file(path, content, policy);
    if (kind == DocKind::mainframe_doc) {
        std::string body = is_html(path) ? docextract::extract_main_content(content, rules) : std::move(content);
        Document doc = docextract::clean_document(body, rules, origin, std::move(path));
        if (doc.kept()) doc.filter_status = filter_file(doc, policy);
        return doc;
    }
    Document doc = make_document(origin, std::move(path), std::move(content), kind);
    doc.filter_status = filter_file(doc, policy);
    return doc;
}

std::vector<Document> ingest_files(std::vector<SourceFile> files, Origin origin, const FilterPolicy& policy,
                                   const docextract::ExtractionRules& rules) {
    std::vector<Document> docs(files.size());
    parallel_for(files.size(), [&](std::size_t i) {
        docs[i] = ingest_file(std::move(files[i].path), std::move(files[i].content), origin, policy, rules);
    });
    auto kept = std::count_if(docs.begin(), docs.end(), [](const Document& d) { return d.kept(); });
    if (static_cast<std::size_t>(kept) < policy.min_repo_files) {
        for (auto& d : docs) {
            if (d.kept()) d.filter_status = DropReason::too_short;
        }
    }
    return docs;
}

std::vector<SourceFile> read_tree(const std::filesystem::path& root) {
    std::vector<SourceFile> out;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out.push_back({std::filesystem::relative(entry.path(), root).generic_string(), ss.str()});
    }
    std::sort(out.begin(), out.end(), [](const SourceFile& a, const SourceFile& b) { return a.path < b.path; });
    return out;
}

nlohmann::json document_record(const Document& doc) {
    nlohmann::json j{{"id", doc.id},
                     {"origin", to_string(doc.origin)},
                     {"path", doc.path_or_url},
                     {"kind", to_string(doc.kind)},
                     {"loc", doc.loc},
                     {"approx_tokens", doc.approx_tokens},
                     {"status", doc.kept() ? "kept" : "dropped"}};
    if (!doc.kept()) j["reason"] = to_string(*doc.filter_status);
    if (doc.kept()) j["file"] = "files/" + doc.id.substr(0, 2) + "/" + doc.id;
    return j;
}

Document document_from_record(const nlohmann::json& j) {
    Document d;
    d.id = j.at("id").get<std::string>();
    d.origin = parse_origin(j.at("origin").get<std::string>());
    d.path_or_url = j.at("path").get<std::string>();
    d.kind = parse_doc_kind(j.at("kind").get<std::string>());
    d.loc = j.at("loc").get<std::size_t>();
    d.approx_tokens = j.at("approx_tokens").get<std::size_t>();
    if (j.at("status").get<std::string>() != "kept") d.filter_status = parse_drop_reason(j.at("reason").get<std::string>());
    return d;
}

CorpusWriter::CorpusWriter(std::filesystem::path dir, std::string manifest_name)
    : dir_(std::move(dir)), manifest_(dir_ / manifest_name) {
    std::filesystem::create_directories(dir_ / "files");
    std::ofstream(manifest_, std::ios::trunc);
}

void CorpusWriter::write(const Document& doc) {
    auto rec = document_record(doc);
    if (doc.kept()) {
        auto file = dir_ / rec.at("file").get<std::string>();
        std::filesystem::create_directories(file.parent_path());
        if (!std::filesystem::exists(file)) {
            std::ofstream out(file, std::ios::binary);
            out.write(doc.content.data(), static_cast<std::streamsize>(doc.content.size()));
            if (!out) throw IoError("cannot write " + file.string());
        }
    }
    std::ofstream out(manifest_, std::ios::app);
    out << rec.dump() << '\n';
    if (!out) throw IoError("cannot append to " + manifest_.string());
}

std::vector<Document> read_corpus(const std::filesystem::path& dir, bool load_content,
                                  std::string_view manifest_name) {
    auto manifest = dir / std::string(manifest_name);
    std::ifstream in(manifest);
    if (!in) throw IoError("cannot open corpus manifest " + manifest.string());
    std::vector<Document> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            docs.push_back(document_from_record(j));
        } catch (const std::exception& e) {
            throw LoadError(manifest.string() + ": " + e.what(), lineno);
        }
        auto& d = docs.back();
        if (load_content && d.kept()) {
            std::ifstream f(dir / j.at("file").get<std::string>(), std::ios::binary);
            if (!f) throw IoError("missing content file for document " + d.id);
            std::ostringstream ss;
            ss << f.rdbuf();
            d.content = ss.str();
        }
    }
    return docs;
}

std::vector<RepoRef> discover_repos(std::span<const std::string> queries, CodeHostClient& api, std::size_t limit) {
    std::vector<RepoRef> out;
    std::set<std::pair<std::string, std::string>> seen;
    constexpr int kPerPage = 100;
    for (const auto& q : queries) {
        for (int page = 1; out.size() < limit; ++page) {
            auto refs = api.search_repositories(q, page, kPerPage);
            for (auto& r : refs) {
                if (out.size() >= limit) break;
                if (seen.insert({r.owner, r.name}).second) out.push_back(std::move(r));
            }
            if (refs.size() < static_cast<std::size_t>(kPerPage)) break;
        }
        if (out.size() >= limit) break;
    }
    return out;
}

std::vector<RepoRef> discover_repos(const std::string& query, CodeHostClient& api, std::size_t limit) {
    return discover_repos(std::span<const std::string>(&query, 1), api, limit);
}

namespace {

std::string gunzip(std::string_view bytes) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw CorruptionError("inflateInit failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
    zs.avail_in = static_cast<uInt>(bytes.size());
    std::string out;
    char buf[1 << 16];
    int rc;
    do {
        zs.next_out = reinterpret_cast<Bytef*>(buf);
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw CorruptionError("gzip stream is corrupt");
        }
        out.append(buf, sizeof(buf) - zs.avail_out);
    } while (rc != Z_STREAM_END && zs.avail_in > 0);
    inflateEnd(&zs);
    return out;
}

std::uint64_t parse_octal(std::string_view field) {
    std::uint64_t v = 0;
    for (char c : field) {
        if (c == '\0' || c == ' ') {
            if (v) break;
            continue;
        }
        if (c < '0' || c > '7') break;
        v = v * 8 + static_cast<std::uint64_t>(c - '0');
    }
    return v;
}

std::string cstr_field(std::string_view field) {
    auto nul = field.find('\0');
    return std::string(nul == std::string_view::npos ? field : field.substr(0, nul));
}

// Extracts "path" from a pax extended header block, if present.
std::optional<std::string> pax_path(std::string_view data) {
    std::size_t i = 0;
    while (i < data.size()) {
        auto sp = data.find(' ', i);
        if (sp == std::string_view::npos) break;
        std::size_t len = std::strtoull(std::string(data.substr(i, sp - i)).c_str(), nullptr, 10);
        if (len == 0 || i + len > data.size()) break;
        auto rec = data.substr(sp + 1, len - (sp + 1 - i) - 1);
        if (rec.substr(0, 5) == "path=") return std::string(rec.substr(5));
        i += len;
    }
    return std::nullopt;
}

}  // namespace

std::vector<SourceFile> extract_tarball(std::string_view bytes) {
    std::string tar;
    if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f && static_cast<unsigned char>(bytes[1]) == 0x8b) {
        tar = gunzip(bytes);
    } else {
        tar = std::string(bytes);
    }
    std::vector<SourceFile> files;
    std::optional<std::string> next_name;
    std::size_t pos = 0;
    while (pos + 512 <= tar.size()) {
        std::string_view hdr(tar.data() + pos, 512);
        if (hdr.find_first_not_of('\0') == std::string_view::npos) break;
        std::uint64_t size = parse_octal(hdr.substr(124, 12));
        char type = hdr[156];
        std::string name = cstr_field(hdr.substr(0, 100));
        if (hdr.substr(257, 5) == "ustar") {
            auto prefix = cstr_field(hdr.substr(345, 155));
            if (!prefix.empty()) name = prefix + "/" + name;
        }
        std::size_t data_at = pos + 512;
        if (data_at + size > tar.size()) throw CorruptionError("tar member '" + name + "' is truncated");
        std::string_view data(tar.data() + data_at, size);
        pos = data_at + ((size + 511) / 512) * 512;
        if (type == 'L') {
            next_name = cstr_field(data);
        } else if (type == 'x') {
            next_name = pax_path(data);
        } else if (type == '0' || type == '\0' || type == '7') {
            files.push_back({next_name.value_or(name), std::string(data)});
            next_name.reset();
        } else {
            next_name.reset();  // directories, links, global headers
        }
    }
    if (!files.empty()) {
        auto first_slash = files.front().path.find('/');
        if (first_slash != std::string::npos) {
            auto root = files.front().path.substr(0, first_slash + 1);
            bool shared = std::all_of(files.begin(), files.end(),
                                      [&](const SourceFile& f) { return f.path.rfind(root, 0) == 0; });
            if (shared) {
                for (auto& f : files) f.path.erase(0, root.size());
            }
        }
    }
    return files;
}

}  // namespace forge::ingest
