#include "forge/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "forge/curate.hpp"
#include "forge/dedup.hpp"
#include "forge/errors.hpp"
#include "forge/evalharness.hpp"
#include "forge/judge.hpp"
#include "forge/parallel.hpp"
#include "forge/surgery.hpp"
#include "forge/synthgen.hpp"

namespace forge::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr const char* kSeedActor = "seed";

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw LoadError(path.string() + ": " + e.what(), lineno);
        }
    }
    return out;
}

template <typename Range, typename Fn>
void write_jsonl(const fs::path& path, const Range& items, Fn&& to_record) {
    fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        for (const auto& item : items) out << to_record(item).dump() << '\n';
        out.close();
        if (!out) throw IoError("cannot write " + path.string());
    }
    fs::rename(tmp, path);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << j.dump(2) << '\n';
        out.close();
        if (!out) throw IoError("cannot write " + path.string());
    }
    fs::rename(tmp, path);
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return nlohmann::json::parse(in);
}

prompts::PromptSet prompt_set(const ForgeConfig& c) { return prompts::PromptSet(c.prompts_dir); }

std::vector<InstructionEntry> seeds_of(const ForgeConfig& c) {
    if (!c.seed_file) return {};
    return load_seed(*c.seed_file);
}

std::shared_ptr<ChatProvider> cached(std::shared_ptr<ChatProvider> inner, const fs::path& file) {
    fs::create_directories(file.parent_path());
    return std::make_shared<CachedProvider>(std::move(inner), file);
}

std::shared_ptr<ChatProvider> generator_pool(const StageContext& ctx) {
    const auto& names = ctx.config.generation.generators;
    if (names.empty()) throw ValidationError("generation.generators lists no provider");
    std::vector<std::shared_ptr<ChatProvider>> pool;
    for (const auto& n : names) pool.push_back(ctx.provider(n));
    std::shared_ptr<ChatProvider> p =
        pool.size() == 1 ? pool.front() : std::make_shared<RoundRobinProvider>(std::move(pool));
    return cached(std::move(p), ctx.ws.gen() / "cache.jsonl");
}

synthgen::GenerationSettings gen_settings(const ForgeConfig& c) {
    synthgen::GenerationSettings s;
    s.temperature = c.generation.temperature;
    s.entries_per_call = c.generation.entries_per_call;
    s.prompts = prompt_set(c);
    return s;
}

nlohmann::json write_corpus(const fs::path& dir, const std::vector<Document>& docs) {
    ingest::CorpusWriter writer(dir);
    for (const auto& d : docs) writer.write(d);
    return ingest::corpus_stats(docs).to_json();
}

}  // namespace

std::shared_ptr<ChatProvider> StageContext::provider(const std::string& name) const {
    const auto& pc = config.provider(name);
    if (factory) return factory(pc);
    return std::make_shared<HttpChatProvider>(pc);
}

nlohmann::json stage_ingest(const StageContext& ctx) {
    const auto& c = ctx.config;
    std::vector<Document> docs;
    nlohmann::json repos = nlohmann::json::array();
    if (c.ingest.from_dir) {
        docs = ingest::ingest_files(ingest::read_tree(*c.ingest.from_dir), Origin::repo_file, c.filter_policy,
                                    c.extraction_rules);
        repos.push_back({{"local", c.ingest.from_dir->string()}, {"files", docs.size()}});
    } else {
        auto api = ingest::CodeHostClient::from_env(c.ingest.host_url);
        for (auto& repo : ingest::discover_repos(std::span<const std::string>(c.ingest.queries), api, c.ingest.repo_limit)) {
            repo.revision = api.resolve_revision(repo);
            auto files = ingest::extract_tarball(api.download_archive(repo));
            for (auto& f : files) f.path = repo.full_name() + "/" + f.path;
            auto repo_docs = ingest::ingest_files(std::move(files), Origin::repo_file, c.filter_policy, c.extraction_rules);
            auto stats = ingest::corpus_stats(repo_docs);
            repos.push_back({{"repo", repo.full_name()},
                             {"revision", repo.revision},
                             {"license", repo.license_tag ? nlohmann::json(*repo.license_tag) : nlohmann::json(nullptr)},
                             {"files", stats.files_total},
                             {"kept", stats.files_kept}});
            std::move(repo_docs.begin(), repo_docs.end(), std::back_inserter(docs));
        }
    }
    fs::remove_all(ctx.ws.corpus());
    auto stats = write_corpus(ctx.ws.corpus(), docs);
    write_jsonl(ctx.ws.corpus() / "repos.jsonl", repos, [](const auto& r) { return r; });
    return {{"corpus", ctx.ws.corpus().string()}, {"stats", stats}, {"sources", repos.size()}};
}

nlohmann::json stage_extract_docs(const StageContext& ctx) {
    const auto& c = ctx.config;
    if (c.ingest.doc_dirs.empty()) return {{"skipped", "not configured"}};
    std::vector<Document> docs;
    for (const auto& dir : c.ingest.doc_dirs) {
        for (auto& f : ingest::read_tree(dir)) {
            const auto ext = fs::path(f.path).extension().string();
            const bool html = ext == ".html" || ext == ".htm";
            const auto body = html ? docextract::extract_main_content(f.content, c.extraction_rules) : f.content;
            auto doc = docextract::clean_document(body, c.extraction_rules, html ? Origin::web_page : Origin::book,
                                                  (dir / f.path).string());
            if (doc.kept()) doc.filter_status = ingest::filter_file(doc, c.filter_policy);
            docs.push_back(std::move(doc));
        }
    }
    fs::remove_all(ctx.ws.docs());
    return {{"corpus", ctx.ws.docs().string()}, {"stats", write_corpus(ctx.ws.docs(), docs)}};
}

nlohmann::json stage_dedup(const StageContext& ctx, const std::optional<fs::path>& corpus_dir) {
    const auto dir = corpus_dir.value_or(ctx.ws.corpus());
    auto docs = ingest::read_corpus(dir, true);
    // Byte-identical files share a content-hash id; collapse those first.
    std::map<std::string, std::vector<std::string>> by_id;
    std::vector<dedup::DedupDoc> unique;
    std::map<std::string, const Document*> first;
    for (const auto& d : docs) {
        if (!d.kept()) continue;
        auto& paths = by_id[d.id];
        paths.push_back(d.path_or_url);
        if (paths.size() == 1) {
            first[d.id] = &d;
            unique.push_back({d.id, d.content, d.kind == DocKind::cobol ? dedup::Normalizer::code : dedup::Normalizer::words});
        }
    }
    auto result = dedup::dedup_corpus(unique, ctx.config.dedup);
    std::vector<nlohmann::json> exact;
    for (const auto& [id, paths] : by_id) {
        if (paths.size() > 1) exact.push_back({{"id", id}, {"paths", paths}});
    }
    write_jsonl(dir / "exact_duplicates.jsonl", exact, [](const auto& j) { return j; });
    write_jsonl(dir / "clusters.jsonl", result.clusters, [](const auto& cl) { return cl.to_json(); });
    write_jsonl(dir / "manifest.dedup.jsonl", result.kept,
                [&](const std::string& id) { return ingest::document_record(*first.at(id)); });
    return {{"documents", unique.size()},
            {"exact_duplicate_groups", exact.size()},
            {"clusters", result.clusters.size()},
            {"kept", result.kept.size()},
            {"candidate_pairs", result.candidate_pairs},
            {"verified_pairs", result.verified_pairs}};
}

nlohmann::json stage_gen_topics(const StageContext& ctx) {
    const auto& c = ctx.config;
    auto provider = generator_pool(ctx);
    auto result = synthgen::generate_subtopics(*provider, c.generation.subtopic_count, ctx.ws.gen() / "subtopics.jsonl",
                                               gen_settings(c));
    return {{"subtopics", result.topics.size()}, {"shortfall", result.shortfall}};
}

nlohmann::json stage_gen_data(const StageContext& ctx) {
    const auto& c = ctx.config;
    auto provider = generator_pool(ctx);
    const auto settings = gen_settings(c);
    std::vector<synthgen::SubTopic> topics;
    if (fs::exists(ctx.ws.gen() / "subtopics.jsonl")) topics = synthgen::load_subtopics(ctx.ws.gen() / "subtopics.jsonl");
    const auto seeds = seeds_of(c);

    std::vector<std::function<synthgen::GenerationResult()>> jobs;
    for (const auto& t : topics) {
        if (c.generation.qa_from_subtopics) {
            jobs.push_back([&, t] { return synthgen::generate_from_subtopic(t, *provider, settings); });
        }
        if (c.generation.mcq_from_subtopics) {
            jobs.push_back([&, t] { return synthgen::generate_mcq_from_subtopic(t, *provider, settings); });
        }
    }
    if (c.generation.summarization_from_seeds) {
        for (const auto& s : seeds) {
            if (s.task == Task::summarization) {
                jobs.push_back([&, s] { return synthgen::generate_from_seed(s, *provider, settings); });
            }
        }
    }
    std::vector<synthgen::GenerationResult> results(jobs.size());
    std::vector<std::string> errors(jobs.size());
    parallel_for(
        jobs.size(),
        [&](std::size_t i) {
            try {
                results[i] = jobs[i]();
            } catch (const ProviderError& e) {
                errors[i] = e.what();
            }
        },
        4);

    std::vector<InstructionEntry> entries;
    std::vector<nlohmann::json> skipped;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!errors[i].empty()) skipped.push_back({{"job", i}, {"reason", "provider failure: " + errors[i]}});
        for (auto& e : results[i].entries) {
            if (ids.insert(e.id).second) entries.push_back(std::move(e));
        }
        for (const auto& s : results[i].skipped) skipped.push_back({{"job", i}, {"reason", s.reason}, {"raw", s.raw}});
    }
    write_jsonl(ctx.ws.gen() / "generated.jsonl", entries, [](const auto& e) { return to_json(e); });
    write_jsonl(ctx.ws.gen() / "skipped.jsonl", skipped, [](const auto& j) { return j; });
    std::map<std::string, std::size_t> by_task;
    for (const auto& e : entries) ++by_task[std::string(to_string(e.task))];
    auto* cache = dynamic_cast<CachedProvider*>(provider.get());
    return {{"calls", jobs.size()},
            {"failed_calls", std::count_if(errors.begin(), errors.end(), [](const auto& s) { return !s.empty(); })},
            {"generated", entries.size()},
            {"by_task", by_task},
            {"skipped_records", skipped.size()},
            {"cache_hits", cache ? cache->hits() : 0}};
}

nlohmann::json stage_judge(const StageContext& ctx) {
    const auto& c = ctx.config;
    curate::EntryStore store(ctx.ws.store(), {}, c.review_lease);
    std::vector<InstructionEntry> incoming = seeds_of(c);
    const auto seeds = incoming.size();
    if (fs::exists(ctx.ws.gen() / "generated.jsonl")) {
        for (const auto& j : read_jsonl(ctx.ws.gen() / "generated.jsonl")) incoming.push_back(entry_from_json(j));
    }
    const auto inserted = store.insert(incoming);

    std::vector<InstructionEntry> unscored;
    for (const auto& e : store.entries()) {
        if (e.status == Status::pending && !e.judge_score) unscored.push_back(e);
    }
    nlohmann::json summary{{"seeds", seeds}, {"inserted", inserted}, {"to_score", unscored.size()}};
    if (c.judge.model.empty()) {
        summary["note"] = "no judge model configured; entries go to review unscored";
        return summary;
    }
    auto judge_provider = cached(ctx.provider(c.judge.model), ctx.ws.judge() / "cache.jsonl");
    judge::JudgeSettings js;
    js.batch_size = c.judge.batch_size;
    js.prompts = prompt_set(c);
    auto outcomes = judge::score_entries(unscored, *judge_provider, js);

    std::vector<judge::JudgeScore> scores;
    std::vector<nlohmann::json> failures;
    for (const auto& o : outcomes) {
        if (o.failed) {
            failures.push_back({{"entry_ids", o.entry_ids}, {"reason", o.failure_reason}, {"raw_reply", o.raw_reply}});
            continue;
        }
        for (const auto& s : o.scores) {
            store.set_judge_score(s.entry_id, s.score, s.rationale_text);
            scores.push_back(s);
        }
    }
    std::size_t rejected = 0;
    for (const auto& s : scores) {
        if (s.score < c.judge.min_score) {
            store.reject(s.entry_id, "low_judge_score", "judge:" + c.judge.model);
            ++rejected;
        }
    }
    fs::create_directories(ctx.ws.judge());
    write_jsonl(ctx.ws.judge() / "scores.jsonl", scores, [](const auto& s) { return s.to_json(); });
    write_jsonl(ctx.ws.judge() / "failed_batches.jsonl", failures, [](const auto& j) { return j; });
    summary["scored"] = scores.size();
    summary["failed_batches"] = failures.size();
    summary["rejected_low_score"] = rejected;
    summary["min_score"] = c.judge.min_score;
    return summary;
}

nlohmann::json stage_filter_rules(const StageContext& ctx) {
    curate::EntryStore store(ctx.ws.store(), {}, ctx.config.review_lease);
    // Finalized entries go first so a pending copy of an accepted entry is the one rejected.
    std::vector<InstructionEntry> ordered;
    for (const auto& e : store.entries()) {
        if (e.status == Status::accepted || e.status == Status::fixed) ordered.push_back(e);
    }
    for (const auto& e : store.entries()) {
        if (e.status == Status::pending) ordered.push_back(e);
    }
    auto outcome = curate::apply_rule_filters(std::move(ordered), ctx.config.rules);
    std::map<std::string, std::size_t> by_rule;
    std::vector<nlohmann::json> log;
    for (const auto& r : outcome.rejected) {
        if (store.get(r.entry.id)->status != Status::pending) {
            log.push_back({{"entry_id", r.entry.id}, {"rule", r.rule}, {"action", "none (already finalized)"}});
            continue;
        }
        store.reject(r.entry.id, r.rule, "rules");
        ++by_rule[r.rule];
        log.push_back({{"entry_id", r.entry.id}, {"rule", r.rule}, {"action", "deleted"}});
    }
    write_jsonl(ctx.ws.store() / "rule_rejections.jsonl", log, [](const auto& j) { return j; });
    return {{"kept", outcome.kept.size()}, {"rejected_by_rule", by_rule}, {"pending_for_review", store.pending_count()}};
}

nlohmann::json stage_assemble(const StageContext& ctx) {
    curate::EntryStore store(ctx.ws.store(), {}, ctx.config.review_lease);
    const auto pending = store.pending_count();
    if (pending > 0 && !ctx.allow_pending) throw ReviewGateError(pending);
    std::vector<InstructionEntry> finalized;
    for (auto& e : store.entries()) {
        if (e.status == Status::accepted || e.status == Status::fixed) finalized.push_back(std::move(e));
    }
    auto splits = curate::split_dataset(std::move(finalized), ctx.config.split);
    nlohmann::json tasks = nlohmann::json::object();
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [task, parts] : splits) {
        for (auto split : curate::kAllSplits) {
            const auto& part = parts[static_cast<std::size_t>(split)];
            nlohmann::json ids = nlohmann::json::array();
            for (const auto& e : part) ids.push_back(e.id);
            tasks[std::string(to_string(task))][std::string(curate::to_string(split))] = ids;
            counts[std::string(to_string(task))][std::string(curate::to_string(split))] = part.size();
        }
    }
    write_json(ctx.ws.assembled() / "splits.json", {{"config_hash", ctx.config.hash()},
                                                   {"spec", ctx.config.split.to_json()},
                                                   {"pending_excluded", pending},
                                                   {"tasks", tasks}});
    return {{"counts", counts}, {"pending_excluded", pending}};
}

nlohmann::json stage_export(const StageContext& ctx, const std::optional<fs::path>& out_dir) {
    const auto assembled = read_json(ctx.ws.assembled() / "splits.json");
    curate::EntryStore store(ctx.ws.store(), {}, ctx.config.review_lease);
    curate::SplitSet splits;
    for (auto task : kAllTasks) {
        auto& parts = splits[task];
        const auto key = std::string(to_string(task));
        if (!assembled.at("tasks").contains(key)) continue;
        for (auto split : curate::kAllSplits) {
            for (const auto& id : assembled.at("tasks").at(key).at(std::string(curate::to_string(split)))) {
                auto e = store.get(id.get<std::string>());
                if (!e) throw NotFoundError("assembled entry " + id.get<std::string>() + " is missing from the store");
                if (e->status != Status::accepted && e->status != Status::fixed) {
                    throw ConflictError("entry " + e->id + " changed status after assembly; rerun assemble");
                }
                parts[static_cast<std::size_t>(split)].push_back(std::move(*e));
            }
        }
    }
    const auto dir = out_dir.value_or(ctx.ws.bundle());
    auto bundle = curate::export_benchmark(splits, dir);
    write_json(dir / "provenance.json", {{"config_hash", ctx.config.hash()}, {"bundle_sha256", bundle.bundle_hash()}});
    return {{"bundle", dir.string()}, {"bundle_sha256", bundle.bundle_hash()}, {"counts", bundle.manifest.at("counts")},
            {"total", bundle.manifest.at("total")}};
}

nlohmann::json stage_eval(const StageContext& ctx) {
    const auto& c = ctx.config;
    if (c.eval.endpoints.empty()) return {{"skipped", "not configured"}};
    std::unique_ptr<eval::Embedder> embedder;
    if (c.eval.embedding_url) embedder = std::make_unique<eval::HttpEmbedder>(*c.eval.embedding_url);
    std::vector<eval::EvalReport> reports;
    nlohmann::json headline = nlohmann::json::object();
    for (const auto& name : c.eval.endpoints) {
        auto endpoint = ctx.provider(name);
        for (auto task : c.eval.tasks) {
            eval::EvalTask et;
            et.task = task;
            et.dataset_path = ctx.ws.bundle() / curate::bundle_file_name(task, curate::Split::test);
            eval::EvalSettings es;
            es.model_name = name;
            es.workers = c.eval.workers;
            es.prompts = prompt_set(c);
            es.embedder = embedder.get();
            auto report = eval::run_eval(*endpoint, et, es);
            report.protocol["config_hash"] = c.hash();
            write_json(ctx.ws.eval() / (name + "__" + std::string(to_string(task)) + ".json"), report.to_json());
            nlohmann::json agg = nlohmann::json::object();
            for (const auto& [m, v] : report.aggregates) agg[m] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
            headline[name][std::string(to_string(task))] = agg;
            reports.push_back(std::move(report));
        }
    }
    std::ofstream(ctx.ws.eval() / "table.txt", std::ios::trunc) << eval::render_table(reports);
    return {{"reports", reports.size()}, {"aggregates", headline}};
}

nlohmann::json stage_upscale(const StageContext& ctx) {
    const auto& s = ctx.config.surgery;
    if (!s.source) return {{"skipped", "not configured"}};
    surgery::LayerNaming naming{s.name_template};
    const auto src = surgery::load_manifest(*s.source, naming);
    const auto plan = surgery::plan_upscale(src.n_layers, s.m);
    fs::create_directories(ctx.ws.upscaled());
    const auto dst = ctx.ws.upscaled() / s.source->filename();
    surgery::depth_upscale(*s.source, plan, dst, naming);
    auto report = surgery::verify_upscaled(*s.source, dst, s.m, naming);
    if (!report.ok()) throw StructuralError("upscaled archive failed verification: " + report.to_json().dump());
    return {{"output", dst.string()}, {"n", plan.n}, {"m", plan.m}, {"s", plan.s}, {"verified", true}};
}

nlohmann::json RunResult::to_json() const {
    nlohmann::json st = nlohmann::json::array();
    for (const auto& s : stages) {
        st.push_back({{"stage", s.name}, {"status", s.status}, {"message", s.message}, {"summary", s.summary}});
    }
    return {{"exit_code", exit_code}, {"stages", st}};
}

RunResult run_pipeline(const ForgeConfig& config, const std::vector<std::string>& stages, const RunOptions& options) {
    std::set<std::string> wanted;
    for (const auto& s : stages) {
        if (s == "all") {
            wanted.insert(stage_order().begin(), stage_order().end());
        } else if (std::find(stage_order().begin(), stage_order().end(), s) == stage_order().end()) {
            throw ParameterError("unknown stage '" + s + "'");
        } else {
            wanted.insert(s);
        }
    }
    StageContext ctx(config, options.factory, options.allow_pending);
    const auto hash = config.hash();
    RunResult result;
    bool failed = false;
    for (const auto& name : stage_order()) {
        if (!wanted.count(name)) continue;
        StageReport rep{name, "", "", nullptr};
        if (failed) {
            rep.status = "not run";
            result.stages.push_back(std::move(rep));
            continue;
        }
        const auto marker = ctx.ws.markers() / (name + ".json");
        if (!options.force && fs::exists(marker)) {
            try {
                auto m = read_json(marker);
                if (m.value("config_hash", "") == hash) {
                    rep.status = "skipped (complete)";
                    rep.summary = m.value("summary", nlohmann::json());
                    result.stages.push_back(std::move(rep));
                    continue;
                }
                rep.message = "config changed since last completion; rerunning";
            } catch (const std::exception&) {
                rep.message = "unreadable marker; rerunning";
            }
        }
        try {
            nlohmann::json summary;
            if (name == "ingest") summary = stage_ingest(ctx);
            else if (name == "extract-docs") summary = stage_extract_docs(ctx);
            else if (name == "dedup") summary = stage_dedup(ctx);
            else if (name == "gen-topics") summary = stage_gen_topics(ctx);
            else if (name == "gen-data") summary = stage_gen_data(ctx);
            else if (name == "judge") summary = stage_judge(ctx);
            else if (name == "filter-rules") summary = stage_filter_rules(ctx);
            else if (name == "assemble") summary = stage_assemble(ctx);
            else if (name == "export") summary = stage_export(ctx);
            else if (name == "eval") summary = stage_eval(ctx);
            else if (name == "upscale") summary = stage_upscale(ctx);
            rep.summary = summary;
            if (summary.is_object() && summary.contains("skipped") && summary.at("skipped").is_string()) {
                rep.status = "skipped (" + summary.at("skipped").get<std::string>() + ")";
            } else {
                rep.status = "ran";
                write_json(marker, {{"stage", name}, {"config_hash", hash}, {"summary", summary}});
            }
        } catch (const std::exception& e) {
            rep.status = "failed";
            rep.message = e.what();
            failed = true;
            result.exit_code = 1;
        }
        result.stages.push_back(std::move(rep));
    }
    return result;
}

}  // namespace forge::pipeline
