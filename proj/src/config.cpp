#include "forge/config.hpp"

#include <fstream>
#include <set>

#include "forge/errors.hpp"
#include "forge/hashing.hpp"

namespace forge {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

std::optional<fs::path> optional_path(const nlohmann::json& j, const char* key, const fs::path& base) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return resolve(base, j.at(key).get<std::string>());
}

}  // namespace

void ForgeConfig::validate() const {
    std::set<std::string> names;
    for (const auto& p : providers) {
        p.validate();
        if (!names.insert(p.name).second) throw ValidationError("duplicate provider name '" + p.name + "'");
    }
    for (const auto& g : generation.generators) provider(g);
    if (!judge.model.empty()) provider(judge.model);
    for (const auto& e : eval.endpoints) provider(e);
    if (judge.min_score < 1 || judge.min_score > 10) throw ValidationError("judge.min_score must lie in 1..10");
    if (judge.batch_size == 0) throw ValidationError("judge.batch_size must be at least 1");
    if (generation.entries_per_call == 0) throw ValidationError("generation.entries_per_call must be at least 1");
    filter_policy.validate();
    if (dedup.k == 0) throw ValidationError("dedup.k must be at least 1");
    dedup.lsh.validate(dedup.num_hashes);
    split.validate();
    if (seed_file && !fs::exists(*seed_file)) throw ValidationError("seed file " + seed_file->string() + " does not exist");
    if (ingest.from_dir && !fs::is_directory(*ingest.from_dir)) {
        throw ValidationError("ingest.from_dir " + ingest.from_dir->string() + " is not a directory");
    }
    if (fs::exists(workspace_dir) && !fs::is_directory(workspace_dir)) {
        throw ValidationError("workspace " + workspace_dir.string() + " is not a directory");
    }
    if (review_lease.count() <= 0) throw ValidationError("review_lease_seconds must be positive");
}

const ProviderConfig& ForgeConfig::provider(const std::string& name) const {
    for (const auto& p : providers) {
        if (p.name == name) return p;
    }
    throw ValidationError("unknown provider '" + name + "'");
}

std::string ForgeConfig::hash() const { return sha256_hex(raw.dump()); }

ForgeConfig ForgeConfig::from_json(const nlohmann::json& j, const fs::path& base) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    ForgeConfig c;
    c.raw = j;
    try {
        c.workspace_dir = resolve(base, j.value("workspace_dir", std::string("workspace")));
        for (const auto& p : j.value("providers", nlohmann::json::array())) c.providers.push_back(ProviderConfig::from_json(p));
        c.seed_file = optional_path(j, "seed_file", base);
        c.prompts_dir = optional_path(j, "prompts_dir", base);
        if (j.contains("ingest")) {
            const auto& i = j.at("ingest");
            c.ingest.host_url = i.value("host_url", c.ingest.host_url);
            c.ingest.queries = i.value("queries", c.ingest.queries);
            c.ingest.repo_limit = i.value("repo_limit", c.ingest.repo_limit);
            c.ingest.from_dir = optional_path(i, "from_dir", base);
            for (const auto& d : i.value("doc_dirs", std::vector<std::string>{})) c.ingest.doc_dirs.push_back(resolve(base, d));
        }
        if (j.contains("filter_policy")) c.filter_policy = ingest::FilterPolicy::from_json(j.at("filter_policy"));
        if (j.contains("extraction_rules")) c.extraction_rules = docextract::ExtractionRules::from_json(j.at("extraction_rules"));
        if (j.contains("dedup")) {
            const auto& d = j.at("dedup");
            c.dedup.k = d.value("k", c.dedup.k);
            c.dedup.num_hashes = d.value("num_hashes", c.dedup.num_hashes);
            c.dedup.seed = d.value("seed", c.dedup.seed);
            c.dedup.lsh.bands = d.value("bands", c.dedup.lsh.bands);
            c.dedup.lsh.rows = d.value("rows", c.dedup.lsh.rows);
            c.dedup.lsh.threshold = d.value("threshold", c.dedup.lsh.threshold);
            c.dedup.exact_verify = d.value("exact_verify", c.dedup.exact_verify);
        }
        if (j.contains("generation")) {
            const auto& g = j.at("generation");
            c.generation.generators = g.value("generators", c.generation.generators);
            c.generation.subtopic_count = g.value("subtopic_count", c.generation.subtopic_count);
            c.generation.entries_per_call = g.value("entries_per_call", c.generation.entries_per_call);
            c.generation.temperature = g.value("temperature", c.generation.temperature);
            c.generation.mcq_from_subtopics = g.value("mcq_from_subtopics", c.generation.mcq_from_subtopics);
            c.generation.qa_from_subtopics = g.value("qa_from_subtopics", c.generation.qa_from_subtopics);
            c.generation.summarization_from_seeds = g.value("summarization_from_seeds", c.generation.summarization_from_seeds);
        }
        if (j.contains("judge")) {
            const auto& jj = j.at("judge");
            c.judge.model = jj.value("model", c.judge.model);
            c.judge.min_score = jj.value("min_score", c.judge.min_score);
            c.judge.batch_size = jj.value("batch_size", c.judge.batch_size);
        }
        if (j.contains("rules")) c.rules = curate::RuleConfig::from_json(j.at("rules"));
        if (j.contains("split")) c.split = curate::SplitSpec::from_json(j.at("split"));
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            c.eval.endpoints = e.value("endpoints", c.eval.endpoints);
            if (e.contains("embedding_url") && !e.at("embedding_url").is_null()) {
                c.eval.embedding_url = e.at("embedding_url").get<std::string>();
            }
            if (e.contains("tasks")) {
                c.eval.tasks.clear();
                for (const auto& t : e.at("tasks")) c.eval.tasks.push_back(parse_task(t.get<std::string>()));
            }
            c.eval.workers = e.value("workers", c.eval.workers);
        }
        if (j.contains("surgery")) {
            const auto& s = j.at("surgery");
            c.surgery.source = optional_path(s, "source", base);
            c.surgery.m = s.value("m", c.surgery.m);
            c.surgery.name_template = s.value("name_template", c.surgery.name_template);
        }
        c.review_lease = std::chrono::seconds(j.value("review_lease_seconds", static_cast<long long>(c.review_lease.count())));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    } catch (const ParameterError& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

ForgeConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError("config " + path.string() + ": " + e.what());
    }
    return ForgeConfig::from_json(j, fs::absolute(path).parent_path());
}

}  // namespace forge
