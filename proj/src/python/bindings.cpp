#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "forge/config.hpp"
#include "forge/dedup.hpp"
#include "forge/errors.hpp"
#include "forge/evalharness.hpp"
#include "forge/judge.hpp"
#include "forge/metrics.hpp"
#include "forge/pipeline.hpp"
#include "forge/surgery.hpp"
#include "forge/text.hpp"
#include "forge/version.hpp"

namespace py = pybind11;

namespace {

using Scorer = double (*)(const forge::eval::Tokens&, const forge::eval::Tokens&);

template <Scorer F>
double on_text(const std::string& hyp, const std::string& ref) {
    return F(forge::text::metric_tokens(hyp), forge::text::metric_tokens(ref));
}

double meteor_text(const std::string& hyp, const std::string& ref) {
    return forge::eval::meteor(forge::text::metric_tokens(hyp), forge::text::metric_tokens(ref));
}

std::vector<std::uint64_t> signature(const std::string& text, std::size_t k, std::size_t num_hashes, std::uint64_t seed,
                                     bool code) {
    auto s = forge::dedup::shingle(text, k, code ? forge::dedup::Normalizer::code : forge::dedup::Normalizer::words);
    return forge::dedup::minhash_signature(s, num_hashes, seed).values;
}

double estimate(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b, std::uint64_t seed) {
    forge::dedup::MinHashSignature sa{"a", a.size(), seed, a};
    forge::dedup::MinHashSignature sb{"b", b.size(), seed, b};
    return forge::dedup::estimate_jaccard(sa, sb);
}

std::string dedup_json(const std::vector<std::pair<std::string, std::string>>& docs, std::size_t k,
                       std::size_t num_hashes, std::size_t bands, std::size_t rows, double threshold, bool exact_verify) {
    std::vector<forge::dedup::DedupDoc> in;
    in.reserve(docs.size());
    for (const auto& [id, text] : docs) in.push_back({id, text, forge::dedup::Normalizer::words});
    forge::dedup::DedupParams p;
    p.k = k;
    p.num_hashes = num_hashes;
    p.lsh = {bands, rows, threshold};
    p.exact_verify = exact_verify;
    forge::dedup::DedupResult r;
    {
        py::gil_scoped_release release;
        r = forge::dedup::dedup_corpus(in, p);
    }
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& c : r.clusters) clusters.push_back(c.to_json());
    return nlohmann::json{{"kept", r.kept},
                          {"clusters", clusters},
                          {"candidate_pairs", r.candidate_pairs},
                          {"verified_pairs", r.verified_pairs}}
        .dump();
}

std::string upscale_json(const std::string& src, const std::string& dst, std::size_t m, const std::string& tmpl) {
    forge::surgery::LayerNaming naming{tmpl};
    auto manifest = forge::surgery::load_manifest(src, naming);
    auto plan = forge::surgery::plan_upscale(manifest.n_layers, m);
    auto out = forge::surgery::depth_upscale(src, plan, dst, naming);
    return nlohmann::json{{"n", plan.n}, {"m", plan.m}, {"s", plan.s}, {"provenance", plan.provenance},
                          {"layers_written", out.n_layers}}
        .dump();
}

std::string run_pipeline_json(const std::string& config_path, const std::vector<std::string>& stages, bool force,
                              bool allow_pending) {
    auto cfg = forge::load_config(config_path);
    forge::pipeline::RunOptions opts;
    opts.force = force;
    opts.allow_pending = allow_pending;
    py::gil_scoped_release release;
    return forge::pipeline::run_pipeline(cfg, stages, opts).to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of mainframe_forge";
    m.attr("__version__") = forge::kVersion;

    m.def("metric_tokens", &forge::text::metric_tokens, py::arg("text"));
    m.def("bleu4", &on_text<&forge::eval::bleu4>, py::arg("hyp"), py::arg("ref"), "Sentence BLEU-4, 0-100");
    m.def("rouge_l", &on_text<&forge::eval::rouge_l>, py::arg("hyp"), py::arg("ref"));
    m.def("meteor", &meteor_text, py::arg("hyp"), py::arg("ref"));
    m.def("token_f1", &on_text<&forge::eval::token_f1>, py::arg("hyp"), py::arg("ref"));
    m.def("average_precision", &on_text<&forge::eval::average_precision>, py::arg("hyp"), py::arg("ref"));
    m.def("porter_stem", &forge::eval::porter_stem, py::arg("word"));
    m.def(
        "extract_choice",
        [](const std::string& s) -> std::optional<std::string> {
            auto c = forge::eval::extract_choice(s);
            if (!c) return std::nullopt;
            return std::string(1, *c);
        },
        py::arg("raw_output"));
    m.def("parse_trailing_int_list", &forge::judge::parse_trailing_int_list, py::arg("text"));

    m.def("minhash_signature", &signature, py::arg("text"), py::arg("k") = 5, py::arg("num_hashes") = 256,
          py::arg("seed") = forge::dedup::DedupParams{}.seed, py::arg("code") = false);
    m.def("estimate_jaccard", &estimate, py::arg("a"), py::arg("b"), py::arg("seed") = forge::dedup::DedupParams{}.seed);
    m.def(
        "exact_jaccard",
        [](const std::string& a, const std::string& b, std::size_t k) {
            return forge::dedup::exact_jaccard(forge::dedup::shingle(a, k), forge::dedup::shingle(b, k));
        },
        py::arg("a"), py::arg("b"), py::arg("k") = 5);
    m.def("_dedup", &dedup_json, py::arg("docs"), py::arg("k") = 5, py::arg("num_hashes") = 256, py::arg("bands") = 32,
          py::arg("rows") = 8, py::arg("threshold") = 0.8, py::arg("exact_verify") = false);

    m.def(
        "plan_upscale",
        [](std::size_t n, std::size_t mm) {
            auto p = forge::surgery::plan_upscale(n, mm);
            return py::make_tuple(p.s, p.provenance);
        },
        py::arg("n"), py::arg("m"));
    m.def("_upscale", &upscale_json, py::arg("src"), py::arg("dst"), py::arg("m") = 6,
          py::arg("layer_template") = "model.layers.{i}.");
    m.def(
        "_verify_upscaled",
        [](const std::string& src, const std::string& dst, std::size_t mm, const std::string& tmpl) {
            return forge::surgery::verify_upscaled(src, dst, mm, {tmpl}).to_json().dump();
        },
        py::arg("src"), py::arg("dst"), py::arg("m") = 6, py::arg("layer_template") = "model.layers.{i}.");

    m.def("config_hash", [](const std::string& path) { return forge::load_config(path).hash(); }, py::arg("path"));
    m.def("_run_pipeline", &run_pipeline_json, py::arg("config"), py::arg("stages"), py::arg("force") = false,
          py::arg("allow_pending") = false);

    py::register_exception<forge::ParameterError>(m, "ParameterError", PyExc_ValueError);
    py::register_exception<forge::ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<forge::StructuralError>(m, "StructuralError", PyExc_ValueError);
    py::register_exception<forge::CorruptionError>(m, "CorruptionError", PyExc_ValueError);
}
