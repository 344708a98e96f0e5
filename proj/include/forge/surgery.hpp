#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/tensor_archive.hpp"

namespace forge::surgery {

// Layer tensor names: <prefix><index><separator><suffix>, given as a template
// with "{i}" standing for the index.
struct LayerNaming {
    std::string name_template = "model.layers.{i}.";

    std::optional<std::pair<std::size_t, std::string>> parse(std::string_view tensor_name) const;
    std::string name(std::size_t layer, std::string_view suffix) const;
};

struct CheckpointManifest {
    std::filesystem::path path;
    std::size_t n_layers = 0;
    ArchiveHeader header;
    std::set<std::string> layer_suffixes;
    std::vector<std::string> singletons;  // non-layer tensor names, in file order
    LayerNaming naming;

    const TensorEntry& tensor(const std::string& name) const;
    const TensorEntry& layer_tensor(std::size_t layer, const std::string& suffix) const;
    nlohmann::json to_json() const;
};

// n is 1 + the highest layer index. Throws StructuralError for an archive with
// no tensors or no layers, a gap in layer indices, or a missing layer/suffix
// pair; CorruptionError as read_archive_header.
CheckpointManifest load_manifest(const std::filesystem::path& archive, const LayerNaming& naming = {});

struct UpscalePlan {
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t s = 0;
    std::vector<std::size_t> provenance;  // target layer -> source layer
};

// Two copies of an n-layer stack; the first loses its last m layers, the
// second its first m, and the remainders are concatenated.
UpscalePlan plan_upscale(std::size_t n, std::size_t m);

CheckpointManifest depth_upscale(const std::filesystem::path& src, const UpscalePlan& plan,
                                 const std::filesystem::path& dst, const LayerNaming& naming = {});

struct Violation {
    std::string kind;    // structure | layer_bytes | layer_meta | singleton
    std::string tensor;  // empty for structural violations
    std::string detail;
};

struct VerifyReport {
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t expected_layers = 0;
    std::size_t actual_layers = 0;
    std::size_t tensors_checked = 0;
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }
    nlohmann::json to_json() const;
};

VerifyReport verify_upscaled(const std::filesystem::path& src, const std::filesystem::path& dst, std::size_t m,
                             const LayerNaming& naming = {});

}  // namespace forge::surgery
