#include "forge/surgery.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "forge/errors.hpp"
#include "forge/version.hpp"

namespace forge::surgery {

namespace fs = std::filesystem;

namespace {

std::pair<std::string, std::string> split_template(const std::string& tmpl) {
    auto pos = tmpl.find("{i}");
    if (pos == std::string::npos || tmpl.find("{i}", pos + 3) != std::string::npos) {
        throw ParameterError("layer name template must contain exactly one {i}: '" + tmpl + "'");
    }
    return {tmpl.substr(0, pos), tmpl.substr(pos + 3)};
}

}  // namespace

std::optional<std::pair<std::size_t, std::string>> LayerNaming::parse(std::string_view tensor_name) const {
    const auto [prefix, sep] = split_template(name_template);
    if (tensor_name.substr(0, prefix.size()) != prefix) return std::nullopt;
    std::size_t pos = prefix.size();
    std::size_t digits_end = pos;
    while (digits_end < tensor_name.size() && tensor_name[digits_end] >= '0' && tensor_name[digits_end] <= '9') ++digits_end;
    if (digits_end == pos || digits_end - pos > 9) return std::nullopt;
    if (tensor_name.substr(digits_end, sep.size()) != sep) return std::nullopt;
    const auto suffix = tensor_name.substr(digits_end + sep.size());
    if (suffix.empty()) return std::nullopt;
    const auto digits = tensor_name.substr(pos, digits_end - pos);
    if (digits.size() > 1 && digits[0] == '0') {
        throw StructuralError("layer index with leading zero in '" + std::string(tensor_name) + "'");
    }
    return std::make_pair(static_cast<std::size_t>(std::stoul(std::string(digits))), std::string(suffix));
}

std::string LayerNaming::name(std::size_t layer, std::string_view suffix) const {
    const auto [prefix, sep] = split_template(name_template);
    return prefix + std::to_string(layer) + sep + std::string(suffix);
}

const TensorEntry& CheckpointManifest::tensor(const std::string& name) const {
    for (const auto& t : header.tensors) {
        if (t.name == name) return t;
    }
    throw NotFoundError("no tensor '" + name + "' in " + path.string());
}

const TensorEntry& CheckpointManifest::layer_tensor(std::size_t layer, const std::string& suffix) const {
    return tensor(naming.name(layer, suffix));
}

nlohmann::json CheckpointManifest::to_json() const {
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : header.tensors) {
        tensors.push_back({{"name", t.name},
                           {"dtype", to_string(t.dtype)},
                           {"shape", t.shape},
                           {"byte_offset", t.byte_offset},
                           {"byte_len", t.byte_len}});
    }
    return {{"path", path.string()},
            {"n_layers", n_layers},
            {"layer_suffixes", layer_suffixes},
            {"singletons", singletons},
            {"tensors", tensors},
            {"metadata", header.metadata}};
}

CheckpointManifest load_manifest(const fs::path& archive, const LayerNaming& naming) {
    CheckpointManifest m;
    m.path = archive;
    m.naming = naming;
    m.header = read_archive_header(archive);
    if (m.header.tensors.empty()) throw StructuralError("archive " + archive.string() + " contains no tensors");

    std::map<std::size_t, std::set<std::string>> layers;
    for (const auto& t : m.header.tensors) {
        if (auto parsed = naming.parse(t.name)) {
            layers[parsed->first].insert(parsed->second);
            m.layer_suffixes.insert(parsed->second);
        } else {
            m.singletons.push_back(t.name);
        }
    }
    if (layers.empty()) {
        throw StructuralError("archive " + archive.string() + " has no tensors matching '" + naming.name_template + "'");
    }
    m.n_layers = layers.rbegin()->first + 1;
    for (std::size_t i = 0; i < m.n_layers; ++i) {
        auto it = layers.find(i);
        if (it == layers.end()) {
            throw StructuralError("layer " + std::to_string(i) + " is missing (gap in layer indices of " +
                                  archive.string() + ")");
        }
        for (const auto& suffix : m.layer_suffixes) {
            if (!it->second.count(suffix)) throw StructuralError("missing tensor " + naming.name(i, suffix));
        }
    }
    return m;
}

UpscalePlan plan_upscale(std::size_t n, std::size_t m) {
    if (n == 0) throw ParameterError("source model must have at least one layer");
    if (m >= n) {
        throw ParameterError("trim count m=" + std::to_string(m) + " must be smaller than n=" + std::to_string(n));
    }
    UpscalePlan p{n, m, 2 * (n - m), {}};
    p.provenance.reserve(p.s);
    for (std::size_t i = 0; i < n - m; ++i) p.provenance.push_back(i);
    for (std::size_t i = m; i < n; ++i) p.provenance.push_back(i);
    return p;
}

CheckpointManifest depth_upscale(const fs::path& src, const UpscalePlan& plan, const fs::path& dst,
                                 const LayerNaming& naming) {
    const auto expected = plan_upscale(plan.n, plan.m);
    if (plan.s != expected.s || plan.provenance != expected.provenance) {
        throw ParameterError("upscale plan is inconsistent with n=" + std::to_string(plan.n) +
                             ", m=" + std::to_string(plan.m));
    }
    const auto source = load_manifest(src, naming);
    if (source.n_layers != plan.n) {
        throw ParameterError("plan expects " + std::to_string(plan.n) + " layers but " + src.string() + " has " +
                             std::to_string(source.n_layers));
    }
    if (fs::exists(dst) && fs::equivalent(src, dst)) throw ParameterError("destination must differ from source");

    auto range_of = [&](const TensorEntry& t) {
        return FileRange{src, source.header.data_start + t.byte_offset, t.byte_len};
    };

    // Singletons located before the first layer tensor (embeddings) stay in
    // front; the rest (final norm, head) follow the layer stack.
    std::uint64_t first_layer_offset = std::numeric_limits<std::uint64_t>::max();
    for (const auto& t : source.header.tensors) {
        if (naming.parse(t.name)) first_layer_offset = std::min(first_layer_offset, t.byte_offset);
    }
    std::vector<OutputTensor> head, layers, tail;
    for (const auto& name : source.singletons) {
        const auto& t = source.tensor(name);
        (t.byte_offset < first_layer_offset ? head : tail).push_back({t.name, t.dtype, t.shape, range_of(t)});
    }
    for (std::size_t i = 0; i < plan.s; ++i) {
        for (const auto& suffix : source.layer_suffixes) {
            const auto& t = source.layer_tensor(plan.provenance[i], suffix);
            layers.push_back({naming.name(i, suffix), t.dtype, t.shape, range_of(t)});
        }
    }
    std::vector<OutputTensor> all;
    all.reserve(head.size() + layers.size() + tail.size());
    for (auto* part : {&head, &layers, &tail}) std::move(part->begin(), part->end(), std::back_inserter(all));

    auto metadata = source.header.metadata;
    metadata["upscale.n"] = std::to_string(plan.n);
    metadata["upscale.m"] = std::to_string(plan.m);
    metadata["upscale.s"] = std::to_string(plan.s);
    metadata["upscale.provenance"] = nlohmann::json(plan.provenance).dump();
    metadata["upscale.tool_version"] = std::string("forge ") + kVersion;
    write_archive(dst, all, metadata);
    return load_manifest(dst, naming);
}

nlohmann::json VerifyReport::to_json() const {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& x : violations) v.push_back({{"kind", x.kind}, {"tensor", x.tensor}, {"detail", x.detail}});
    return {{"n", n},
            {"m", m},
            {"expected_layers", expected_layers},
            {"actual_layers", actual_layers},
            {"tensors_checked", tensors_checked},
            {"ok", ok()},
            {"violations", v}};
}

VerifyReport verify_upscaled(const fs::path& src, const fs::path& dst, std::size_t m, const LayerNaming& naming) {
    const auto source = load_manifest(src, naming);
    const auto target = load_manifest(dst, naming);
    VerifyReport r;
    r.n = source.n_layers;
    r.m = m;
    r.actual_layers = target.n_layers;
    if (m >= source.n_layers) {
        r.violations.push_back({"structure", "", "m=" + std::to_string(m) + " is not smaller than n=" +
                                                     std::to_string(source.n_layers)});
        return r;
    }
    const auto plan = plan_upscale(source.n_layers, m);
    r.expected_layers = plan.s;
    if (target.n_layers != plan.s) {
        r.violations.push_back({"structure", "", "expected " + std::to_string(plan.s) + " layers, found " +
                                                     std::to_string(target.n_layers)});
    }
    if (target.layer_suffixes != source.layer_suffixes) {
        r.violations.push_back({"structure", "", "per-layer tensor suffixes differ between source and destination"});
    }

    std::unordered_map<std::string, std::string> src_hash;
    auto source_digest = [&](const TensorEntry& t) -> const std::string& {
        auto it = src_hash.find(t.name);
        if (it == src_hash.end()) it = src_hash.emplace(t.name, tensor_sha256(src, source.header, t)).first;
        return it->second;
    };
    auto compare = [&](const TensorEntry& want, const TensorEntry& got, const char* kind) {
        ++r.tensors_checked;
        if (want.dtype != got.dtype || want.shape != got.shape) {
            r.violations.push_back({"layer_meta", got.name, "dtype/shape differ from " + want.name});
            return;
        }
        if (source_digest(want) != tensor_sha256(dst, target.header, got)) {
            r.violations.push_back({kind, got.name, "bytes differ from " + want.name});
        }
    };

    const auto layers = std::min(target.n_layers, plan.s);
    for (std::size_t i = 0; i < layers; ++i) {
        for (const auto& suffix : source.layer_suffixes) {
            if (!target.layer_suffixes.count(suffix)) continue;
            compare(source.layer_tensor(plan.provenance[i], suffix), target.layer_tensor(i, suffix), "layer_bytes");
        }
    }
    std::set<std::string> dst_singletons(target.singletons.begin(), target.singletons.end());
    for (const auto& name : source.singletons) {
        if (!dst_singletons.erase(name)) {
            r.violations.push_back({"singleton", name, "missing from destination"});
            continue;
        }
        compare(source.tensor(name), target.tensor(name), "singleton");
    }
    for (const auto& extra : dst_singletons) {
        r.violations.push_back({"singleton", extra, "not present in source"});
    }
    return r;
}

}  // namespace forge::surgery
