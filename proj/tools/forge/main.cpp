// forge: command-line front end for the corpus, instruction-data, surgery and
// evaluation stages.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#include "forge/config.hpp"
#include "forge/curate.hpp"
#include "forge/errors.hpp"
#include "forge/evalharness.hpp"
#include "forge/ingest.hpp"
#include "forge/judge.hpp"
#include "forge/pipeline.hpp"
#include "forge/review_server.hpp"
#include "forge/surgery.hpp"
#include "forge/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::string config_path;
    bool json_out = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "Pipeline configuration (JSON)");
    cmd->add_flag("--json", c.json_out, "Print a machine-readable JSON result");
}

forge::ForgeConfig config_of(const Common& c) {
    if (!c.config_path.empty()) return forge::load_config(c.config_path);
    return forge::ForgeConfig::from_json(json::object(), fs::current_path());
}

void emit(const Common& c, const json& result, const std::string& human) {
    if (c.json_out) {
        std::cout << result.dump(2) << '\n';
    } else {
        std::cout << human << '\n';
    }
}

std::string human_summary(const std::string& stage, const json& summary) {
    return stage + ": " + summary.dump();
}

std::shared_ptr<forge::ChatProvider> endpoint_provider(const forge::ForgeConfig& cfg, const std::string& endpoint,
                                                       const std::string& model) {
    if (endpoint.find("://") != std::string::npos) {
        forge::ProviderConfig pc;
        pc.name = model.empty() ? endpoint : model;
        pc.base_url = endpoint;
        pc.model_id = model.empty() ? "default" : model;
        pc.temperature = 0.0;
        return std::make_shared<forge::HttpChatProvider>(pc);
    }
    return std::make_shared<forge::HttpChatProvider>(cfg.provider(endpoint));
}

forge::curate::ReviewServer* g_server = nullptr;

void handle_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forge: mainframe corpus and instruction-data toolchain"};
    app.set_version_flag("--version", std::string("forge ") + forge::kVersion);
    app.require_subcommand(1);

    Common common;

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Collect COBOL repositories (or a local tree) into a corpus");
    add_common(ingest, common);
    std::string from_dir;
    ingest->add_option("--from-dir", from_dir, "Ingest a local directory instead of querying the code host");

    // stats
    auto* stats = app.add_subcommand("stats", "Corpus statistics");
    add_common(stats, common);
    std::string stats_corpus;
    std::string stats_manifest = "manifest.jsonl";
    stats->add_option("--corpus", stats_corpus, "Corpus directory (default: workspace corpus)");
    stats->add_option("--manifest", stats_manifest, "Manifest file name inside the corpus");

    // dedup
    auto* dedup_cmd = app.add_subcommand("dedup", "Near-duplicate removal over a corpus (MinHash + LSH)");
    add_common(dedup_cmd, common);
    std::string dedup_corpus;
    dedup_cmd->add_option("--corpus", dedup_corpus, "Corpus directory (default: workspace corpus)");

    auto* extract = app.add_subcommand("extract-docs", "Extract main text from web pages and books");
    add_common(extract, common);

    auto* gen_topics = app.add_subcommand("gen-topics", "Generate sub-topics with the generator models");
    add_common(gen_topics, common);
    auto* gen_data = app.add_subcommand("gen-data", "Generate instruction entries from sub-topics and seeds");
    add_common(gen_data, common);

    // judge
    auto* judge_cmd = app.add_subcommand("judge", "Score generated entries with the judge model");
    add_common(judge_cmd, common);
    std::string rank_a, rank_b;
    bool rank_swap = false;
    auto* rank = judge_cmd->add_subcommand("rank", "Pairwise-rank two stored entries");
    add_common(rank, common);
    rank->add_option("a", rank_a, "First entry id")->required();
    rank->add_option("b", rank_b, "Second entry id")->required();
    rank->add_flag("--swap", rank_swap, "Present the second entry first");

    auto* filter = app.add_subcommand("filter-rules", "Apply rule-based filters to pending entries");
    add_common(filter, common);

    // review-serve
    auto* review = app.add_subcommand("review-serve", "Serve the review HTTP API (and optional UI bundle)");
    add_common(review, common);
    int review_port = 8080;
    std::string review_host = "127.0.0.1";
    std::string review_static;
    review->add_option("--port", review_port, "Port (0 = any free port)");
    review->add_option("--host", review_host, "Bind address");
    review->add_option("--static", review_static, "Directory with the review UI bundle");

    // assemble
    auto* assemble = app.add_subcommand("assemble", "Split finalized entries into train/validation/test");
    add_common(assemble, common);
    std::string spec_file;
    bool allow_pending = false;
    assemble->add_option("--spec", spec_file, "Split spec (JSON); default: the config's split");
    assemble->add_flag("--allow-pending", allow_pending, "Assemble even while entries await review");

    // export
    auto* export_cmd = app.add_subcommand("export", "Write the benchmark bundle");
    add_common(export_cmd, common);
    std::string export_out;
    export_cmd->add_option("--out", export_out, "Output directory (default: workspace bundle)");

    // upscale
    auto* upscale = app.add_subcommand("upscale", "Depth up-scale a layered checkpoint");
    add_common(upscale, common);
    std::string up_src, up_out, up_template = "model.layers.{i}.";
    std::size_t up_m = 6;
    upscale->add_option("src", up_src, "Source archive");
    upscale->add_option("--m", up_m, "Layers trimmed from each copy");
    upscale->add_option("--out", up_out, "Destination archive");
    upscale->add_option("--layer-template", up_template, "Layer tensor name template");
    auto* verify = upscale->add_subcommand("verify", "Check an up-scaled archive against its source");
    add_common(verify, common);
    std::string v_src, v_dst;
    std::size_t v_m = 6;
    verify->add_option("src", v_src, "Source archive")->required();
    verify->add_option("dst", v_dst, "Up-scaled archive")->required();
    verify->add_option("--m", v_m, "Layers trimmed from each copy");
    verify->add_option("--layer-template", up_template, "Layer tensor name template");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a chat endpoint on a benchmark file");
    add_common(eval_cmd, common);
    std::string ev_task, ev_dataset, ev_endpoint, ev_model, ev_out, ev_embed;
    std::vector<std::string> ev_metrics;
    std::size_t ev_workers = 4;
    eval_cmd->add_option("--task", ev_task, "mcq | qa | summarization");
    eval_cmd->add_option("--dataset", ev_dataset, "Benchmark JSON Lines file");
    eval_cmd->add_option("--endpoint", ev_endpoint, "Provider name from the config, or a base URL");
    eval_cmd->add_option("--model", ev_model, "Model id when --endpoint is a URL");
    eval_cmd->add_option("--out", ev_out, "Report path");
    eval_cmd->add_option("--metrics", ev_metrics, "Subset of metrics");
    eval_cmd->add_option("--embedding-url", ev_embed, "Embedding endpoint for BERTScore");
    eval_cmd->add_option("--workers", ev_workers, "Concurrent requests");
    auto* table = eval_cmd->add_subcommand("table", "Render reports as a comparison table");
    add_common(table, common);
    std::vector<std::string> table_reports;
    table->add_option("reports", table_reports, "Report files")->required();

    // run
    auto* run = app.add_subcommand("run", "Run pipeline stages in dependency order");
    add_common(run, common);
    std::vector<std::string> run_stages;
    bool run_force = false;
    bool run_allow_pending = false;
    run->add_option("stages", run_stages, "Stages to run (default: all)");
    run->add_flag("--force", run_force, "Rerun stages that already completed");
    run->add_flag("--allow-pending", run_allow_pending, "Bypass the review gate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*ingest) {
            auto cfg = config_of(common);
            if (!from_dir.empty()) cfg.ingest.from_dir = fs::absolute(from_dir);
            forge::pipeline::StageContext ctx(cfg);
            auto s = forge::pipeline::stage_ingest(ctx);
            emit(common, s, human_summary("ingest", s));
        } else if (*stats) {
            fs::path dir = stats_corpus;
            if (dir.empty()) dir = forge::pipeline::Workspace{config_of(common).workspace_dir}.corpus();
            auto docs = forge::ingest::read_corpus(dir, false, stats_manifest);
            auto s = forge::ingest::corpus_stats(docs).to_json();
            emit(common, s, s.dump(2));
        } else if (*dedup_cmd) {
            auto cfg = config_of(common);
            forge::pipeline::StageContext ctx(cfg);
            std::optional<fs::path> dir;
            if (!dedup_corpus.empty()) dir = fs::path(dedup_corpus);
            auto s = forge::pipeline::stage_dedup(ctx, dir);
            emit(common, s, human_summary("dedup", s));
        } else if (*extract || *gen_topics || *gen_data || *filter || (*judge_cmd && !*rank)) {
            auto cfg = config_of(common);
            forge::pipeline::StageContext ctx(cfg);
            json s;
            std::string name;
            if (*extract) s = forge::pipeline::stage_extract_docs(ctx), name = "extract-docs";
            else if (*gen_topics) s = forge::pipeline::stage_gen_topics(ctx), name = "gen-topics";
            else if (*gen_data) s = forge::pipeline::stage_gen_data(ctx), name = "gen-data";
            else if (*filter) s = forge::pipeline::stage_filter_rules(ctx), name = "filter-rules";
            else s = forge::pipeline::stage_judge(ctx), name = "judge";
            emit(common, s, human_summary(name, s));
        } else if (*rank) {
            auto cfg = config_of(common);
            if (cfg.judge.model.empty()) throw forge::ValidationError("judge.model is not configured");
            forge::pipeline::StageContext ctx(cfg);
            forge::curate::EntryStore store(ctx.ws.store());
            auto a = store.get(rank_a);
            auto b = store.get(rank_b);
            if (!a || !b) throw forge::NotFoundError("unknown entry id");
            auto provider = ctx.provider(cfg.judge.model);
            auto v = forge::judge::pairwise_rank(*a, *b, *provider, rank_swap);
            emit(common, v.to_json(), "winner: " + std::string(forge::judge::to_string(v.winner)));
        } else if (*review) {
            auto cfg = config_of(common);
            forge::pipeline::Workspace ws{cfg.workspace_dir};
            forge::curate::EntryStore store(ws.store(), {}, cfg.review_lease);
            forge::curate::ReviewServerOptions opts;
            opts.rules = cfg.rules;
            if (!review_static.empty()) opts.static_dir = fs::path(review_static);
            forge::curate::ReviewServer server(store, opts);
            const int port = server.bind(review_host, review_port);
            g_server = &server;
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            emit(common, {{"host", review_host}, {"port", port}},
                 "review API listening on http://" + review_host + ":" + std::to_string(port));
            std::cout.flush();
            server.serve();
            g_server = nullptr;
        } else if (*assemble) {
            auto cfg = config_of(common);
            if (!spec_file.empty()) {
                std::ifstream in(spec_file);
                if (!in) throw forge::IoError("cannot open split spec " + spec_file);
                cfg.split = forge::curate::SplitSpec::from_json(json::parse(in));
            }
            forge::pipeline::StageContext ctx(cfg, {}, allow_pending);
            auto s = forge::pipeline::stage_assemble(ctx);
            emit(common, s, human_summary("assemble", s));
        } else if (*export_cmd) {
            auto cfg = config_of(common);
            forge::pipeline::StageContext ctx(cfg);
            std::optional<fs::path> out;
            if (!export_out.empty()) out = fs::path(export_out);
            auto s = forge::pipeline::stage_export(ctx, out);
            emit(common, s, human_summary("export", s));
        } else if (*verify) {
            auto report = forge::surgery::verify_upscaled(v_src, v_dst, v_m, {up_template});
            std::string human = report.ok() ? "OK: " + std::to_string(report.tensors_checked) + " tensors verified"
                                            : std::to_string(report.violations.size()) + " violation(s)";
            for (const auto& v : report.violations) human += "\n  [" + v.kind + "] " + v.tensor + " " + v.detail;
            emit(common, report.to_json(), human);
            return report.ok() ? 0 : 1;
        } else if (*upscale) {
            if (up_src.empty() || up_out.empty()) throw forge::ParameterError("upscale needs <src> and --out <dst>");
            forge::surgery::LayerNaming naming{up_template};
            auto src = forge::surgery::load_manifest(up_src, naming);
            auto plan = forge::surgery::plan_upscale(src.n_layers, up_m);
            auto dst = forge::surgery::depth_upscale(up_src, plan, up_out, naming);
            json s{{"n", plan.n}, {"m", plan.m}, {"s", plan.s}, {"provenance", plan.provenance}, {"out", up_out}};
            emit(common, s, "wrote " + up_out + " with " + std::to_string(dst.n_layers) + " layers (n=" +
                                std::to_string(plan.n) + ", m=" + std::to_string(plan.m) + ")");
        } else if (*table) {
            std::vector<forge::eval::EvalReport> reports;
            for (const auto& f : table_reports) {
                std::ifstream in(f);
                if (!in) throw forge::IoError("cannot open report " + f);
                reports.push_back(forge::eval::EvalReport::from_json(json::parse(in)));
            }
            json agg = json::array();
            for (const auto& r : reports) {
                json a = json::object();
                for (const auto& [k, v] : r.aggregates) a[k] = v ? json(*v) : json(nullptr);
                agg.push_back({{"model", r.model_name}, {"task", forge::to_string(r.task)}, {"aggregates", a}});
            }
            emit(common, agg, forge::eval::render_table(reports));
        } else if (*eval_cmd) {
            if (ev_task.empty() || ev_dataset.empty() || ev_endpoint.empty()) {
                throw forge::ParameterError("eval needs --task, --dataset and --endpoint");
            }
            auto cfg = config_of(common);
            auto endpoint = endpoint_provider(cfg, ev_endpoint, ev_model);
            forge::eval::EvalTask task{forge::parse_task(ev_task), ev_dataset, {}, ev_metrics};
            forge::eval::EvalSettings settings;
            settings.model_name = ev_model.empty() ? ev_endpoint : ev_model;
            settings.workers = ev_workers;
            settings.prompts = forge::prompts::PromptSet(cfg.prompts_dir);
            std::unique_ptr<forge::eval::Embedder> embedder;
            if (ev_embed.empty() && cfg.eval.embedding_url) ev_embed = *cfg.eval.embedding_url;
            if (!ev_embed.empty()) embedder = std::make_unique<forge::eval::HttpEmbedder>(ev_embed);
            settings.embedder = embedder.get();
            auto report = forge::eval::run_eval(*endpoint, task, settings);
            if (!common.config_path.empty()) report.protocol["config_hash"] = cfg.hash();
            auto j = report.to_json();
            if (!ev_out.empty()) {
                std::ofstream out(ev_out, std::ios::trunc);
                out << j.dump(2) << '\n';
                if (!out) throw forge::IoError("cannot write " + ev_out);
            }
            json agg = json::object();
            for (const auto& [k, v] : report.aggregates) agg[k] = v ? json(*v) : json(nullptr);
            emit(common, {{"model", report.model_name}, {"task", ev_task}, {"aggregates", agg}, {"n", report.examples.size()}},
                 forge::eval::render_table({report}));
        } else if (*run) {
            auto cfg = config_of(common);
            forge::pipeline::RunOptions opts;
            opts.force = run_force;
            opts.allow_pending = run_allow_pending;
            if (run_stages.empty()) run_stages = {"all"};
            auto result = forge::pipeline::run_pipeline(cfg, run_stages, opts);
            std::string human;
            for (const auto& s : result.stages) {
                human += s.name + ": " + s.status;
                if (!s.message.empty()) human += " - " + s.message;
                human += '\n';
            }
            if (result.stages.empty()) human = "no stages requested\n";
            human.pop_back();
            emit(common, result.to_json(), human);
            return result.exit_code;
        }
    } catch (const forge::pipeline::ReviewGateError& e) {
        std::cerr << "forge: review gate: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "forge: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
