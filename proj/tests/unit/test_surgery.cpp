#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "forge/errors.hpp"
#include "forge/hashing.hpp"
#include "forge/surgery.hpp"
#include "test_support.hpp"

using namespace forge;
using namespace forge::surgery;
using forge::testing::TempDir;
using forge::testing::write_toy_checkpoint;

namespace {

std::vector<std::size_t> iota_range(std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> v;
    for (std::size_t i = lo; i < hi; ++i) v.push_back(i);
    return v;
}

// Independent reader: parses the raw file with no library help.
struct RawArchive {
    nlohmann::json header;
    std::string data;
};

RawArchive read_raw(const std::filesystem::path& p) {
    auto bytes = forge::testing::read_file(p);
    std::uint64_t n = 0;
    for (int i = 7; i >= 0; --i) n = (n << 8) | static_cast<unsigned char>(bytes[i]);
    return {nlohmann::json::parse(bytes.substr(8, n)), bytes.substr(8 + n)};
}

std::string raw_tensor(const RawArchive& a, const std::string& name) {
    auto off = a.header.at(name).at("data_offsets");
    auto b = off[0].get<std::size_t>(), e = off[1].get<std::size_t>();
    return a.data.substr(b, e - b);
}

}  // namespace

TEST(Archive, LayoutIsSafetensorsCompatible) {
    TempDir tmp;
    std::vector<OutputTensor> ts{{"b", DType::f16, {2}, std::string("\x01\x02\x03\x04", 4)},
                                 {"a", DType::f32, {1, 1}, std::string("\x05\x06\x07\x08", 4)}};
    write_archive(tmp / "x.safetensors", ts, {{"k", "v"}});
    auto bytes = forge::testing::read_file(tmp / "x.safetensors");
    std::uint64_t n = 0;
    std::memcpy(&n, bytes.data(), 8);
    EXPECT_EQ(n % 8, 0u);
    auto raw = read_raw(tmp / "x.safetensors");
    EXPECT_EQ(raw.header.at("__metadata__").at("k"), "v");
    EXPECT_EQ(raw.header.at("b").at("dtype"), "F16");
    EXPECT_EQ(raw_tensor(raw, "b"), std::string("\x01\x02\x03\x04", 4));
    EXPECT_EQ(raw_tensor(raw, "a"), std::string("\x05\x06\x07\x08", 4));

    auto h = read_archive_header(tmp / "x.safetensors");
    ASSERT_EQ(h.tensors.size(), 2u);
    EXPECT_EQ(h.tensors[0].name, "b");
    EXPECT_EQ(h.data_start, 8 + n);
    EXPECT_EQ(read_tensor_bytes(tmp / "x.safetensors", h, h.tensors[1]), std::string("\x05\x06\x07\x08", 4));
    EXPECT_EQ(tensor_sha256(tmp / "x.safetensors", h, h.tensors[1]), sha256_hex(std::string("\x05\x06\x07\x08", 4)));
}

TEST(Archive, MalformedHeadersRejected) {
    TempDir tmp;
    auto write = [&](const std::string& header_json, std::size_t data_len) {
        std::string header = header_json;
        std::string out(8, '\0');
        std::uint64_t n = header.size();
        std::memcpy(out.data(), &n, 8);
        out += header + std::string(data_len, '\0');
        forge::testing::write_file(tmp / "bad.safetensors", out);
        return tmp / "bad.safetensors";
    };
    EXPECT_THROW(read_archive_header(write("{not json", 0)), CorruptionError);
    EXPECT_THROW(read_archive_header(write(R"({"t":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})", 4)),
                 CorruptionError);
    EXPECT_THROW(read_archive_header(write(R"({"t":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}})", 8)),
                 CorruptionError);
    EXPECT_THROW(read_archive_header(write(R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},)"
                                           R"("b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}})",
                                           12)),
                 CorruptionError);
    EXPECT_THROW(read_archive_header(write(R"({"t":{"dtype":"I8","shape":[1],"data_offsets":[0,1]}})", 1)),
                 CorruptionError);
    forge::testing::write_file(tmp / "short.safetensors", "abc");
    EXPECT_THROW(read_archive_header(tmp / "short.safetensors"), CorruptionError);
    EXPECT_THROW(read_archive_header(tmp / "missing.safetensors"), IoError);
}

TEST(Manifest, ToyCheckpoint) {
    TempDir tmp;
    std::vector<OutputTensor> ts;
    auto blob = [](std::size_t n) { return std::string(n, 'x'); };
    ts.push_back({"model.embed_tokens.weight", DType::f32, {2}, blob(8)});
    for (int i = 0; i < 4; ++i) {
        ts.push_back({"model.layers." + std::to_string(i) + ".attn.weight", DType::f32, {2}, blob(8)});
        ts.push_back({"model.layers." + std::to_string(i) + ".mlp.weight", DType::f32, {2}, blob(8)});
    }
    ts.push_back({"model.norm.weight", DType::f32, {2}, blob(8)});
    ts.push_back({"lm_head.weight", DType::f32, {2}, blob(8)});
    write_archive(tmp / "m.safetensors", ts);
    auto m = load_manifest(tmp / "m.safetensors");
    EXPECT_EQ(m.n_layers, 4u);
    EXPECT_EQ(m.header.tensors.size(), 11u);
    EXPECT_EQ(m.layer_suffixes, (std::set<std::string>{"attn.weight", "mlp.weight"}));
    EXPECT_EQ(m.singletons.size(), 3u);
}

TEST(Manifest, StructuralErrors) {
    TempDir tmp;
    auto t = [](const std::string& name) { return OutputTensor{name, DType::f32, {1}, std::string(4, 'x')}; };
    write_archive(tmp / "gap.safetensors", {t("model.layers.0.w"), t("model.layers.1.w"), t("model.layers.3.w")});
    try {
        load_manifest(tmp / "gap.safetensors");
        FAIL();
    } catch (const StructuralError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
    }
    write_archive(tmp / "empty.safetensors", {});
    EXPECT_THROW(load_manifest(tmp / "empty.safetensors"), StructuralError);
    write_archive(tmp / "nolayers.safetensors", {t("embed")});
    EXPECT_THROW(load_manifest(tmp / "nolayers.safetensors"), StructuralError);
    write_archive(tmp / "ragged.safetensors", {t("model.layers.0.a"), t("model.layers.0.b"), t("model.layers.1.a")});
    EXPECT_THROW(load_manifest(tmp / "ragged.safetensors"), StructuralError);
}

TEST(Naming, CustomTemplate) {
    LayerNaming n{"transformer.h.{i}."};
    auto p = n.parse("transformer.h.12.attn.c_attn.weight");
    ASSERT_TRUE(p);
    EXPECT_EQ(p->first, 12u);
    EXPECT_EQ(p->second, "attn.c_attn.weight");
    EXPECT_FALSE(n.parse("transformer.wte.weight"));
    EXPECT_EQ(n.name(3, "mlp.w"), "transformer.h.3.mlp.w");
    EXPECT_THROW(n.parse("transformer.h.01.x"), StructuralError);
}

TEST(Plan, Examples) {
    auto p = plan_upscale(30, 6);
    EXPECT_EQ(p.s, 48u);
    auto want = iota_range(0, 24);
    auto tail = iota_range(6, 30);
    want.insert(want.end(), tail.begin(), tail.end());
    EXPECT_EQ(p.provenance, want);
    EXPECT_EQ(plan_upscale(4, 0).provenance, (std::vector<std::size_t>{0, 1, 2, 3, 0, 1, 2, 3}));
    EXPECT_EQ(plan_upscale(4, 1).provenance, (std::vector<std::size_t>{0, 1, 2, 1, 2, 3}));
    EXPECT_THROW(plan_upscale(4, 4), ParameterError);
    EXPECT_THROW(plan_upscale(0, 0), ParameterError);
}

TEST(Plan, LayerCountAndContiguityLaws) {
    for (std::size_t n = 1; n <= 12; ++n) {
        for (std::size_t m = 0; m < n; ++m) {
            auto p = plan_upscale(n, m);
            ASSERT_EQ(p.s, 2 * (n - m));
            ASSERT_EQ(p.provenance.size(), p.s);
            for (std::size_t i = 0; i < n - m; ++i) {
                EXPECT_EQ(p.provenance[i], i);
                EXPECT_EQ(p.provenance[n - m + i], m + i);
            }
            if (2 * m < n) {
                std::set<std::size_t> first(p.provenance.begin(), p.provenance.begin() + (n - m));
                std::set<std::size_t> second(p.provenance.begin() + (n - m), p.provenance.end());
                std::size_t overlap = 0;
                for (auto x : first) overlap += second.count(x);
                EXPECT_EQ(overlap, n - 2 * m);
            }
        }
    }
}

TEST(Upscale, ByteEqualityAgainstPlan) {
    TempDir tmp;
    write_toy_checkpoint(tmp / "src.safetensors", 4, 1);
    auto plan = plan_upscale(4, 1);
    auto out = depth_upscale(tmp / "src.safetensors", plan, tmp / "dst.safetensors");
    EXPECT_EQ(out.n_layers, 6u);
    auto src = read_raw(tmp / "src.safetensors"), dst = read_raw(tmp / "dst.safetensors");
    EXPECT_EQ(raw_tensor(dst, "model.layers.3.attn.q.weight"), raw_tensor(src, "model.layers.1.attn.q.weight"));
    for (std::size_t t = 0; t < plan.s; ++t) {
        for (const auto* suffix : {"attn.q.weight", "mlp.up.weight"}) {
            EXPECT_EQ(raw_tensor(dst, "model.layers." + std::to_string(t) + "." + suffix),
                      raw_tensor(src, "model.layers." + std::to_string(plan.provenance[t]) + "." + suffix));
        }
    }
    for (const auto* name : {"model.embed_tokens.weight", "model.norm.weight", "lm_head.weight"}) {
        EXPECT_EQ(raw_tensor(dst, name), raw_tensor(src, name));
    }
    EXPECT_EQ(dst.header.at("__metadata__").at("upscale.s"), "6");
    EXPECT_EQ(dst.header.at("__metadata__").at("format"), "pt");
}

TEST(Upscale, FullDuplicationHalvesIdentical) {
    TempDir tmp;
    write_toy_checkpoint(tmp / "src.safetensors", 2, 2);
    depth_upscale(tmp / "src.safetensors", plan_upscale(2, 0), tmp / "dst.safetensors");
    auto dst = read_raw(tmp / "dst.safetensors");
    for (int i = 0; i < 2; ++i) {
        EXPECT_EQ(raw_tensor(dst, "model.layers." + std::to_string(i) + ".mlp.up.weight"),
                  raw_tensor(dst, "model.layers." + std::to_string(i + 2) + ".mlp.up.weight"));
    }
}

TEST(Upscale, PlanMismatchRejected) {
    TempDir tmp;
    write_toy_checkpoint(tmp / "src.safetensors", 4, 3);
    EXPECT_THROW(depth_upscale(tmp / "src.safetensors", plan_upscale(5, 1), tmp / "dst.safetensors"), ParameterError);
    EXPECT_FALSE(std::filesystem::exists(tmp / "dst.safetensors"));
}

TEST(Verify, CleanOutputHasNoViolations) {
    TempDir tmp;
    write_toy_checkpoint(tmp / "src.safetensors", 5, 4);
    depth_upscale(tmp / "src.safetensors", plan_upscale(5, 2), tmp / "dst.safetensors");
    auto r = verify_upscaled(tmp / "src.safetensors", tmp / "dst.safetensors", 2);
    EXPECT_TRUE(r.ok()) << r.to_json().dump();
    EXPECT_EQ(r.actual_layers, 6u);
}

TEST(Verify, CorruptedLayerTensorNamed) {
    TempDir tmp;
    write_toy_checkpoint(tmp / "src.safetensors", 4, 5);
    depth_upscale(tmp / "src.safetensors", plan_upscale(4, 1), tmp / "dst.safetensors");
    auto raw = read_raw(tmp / "dst.safetensors");
    auto bytes = forge::testing::read_file(tmp / "dst.safetensors");
    std::uint64_t n = 0;
    std::memcpy(&n, bytes.data(), 8);
    auto off = raw.header.at("model.layers.4.mlp.up.weight").at("data_offsets")[0].get<std::size_t>();
    bytes[8 + n + off] ^= 0x5a;
    forge::testing::write_file(tmp / "dst.safetensors", bytes);
    auto r = verify_upscaled(tmp / "src.safetensors", tmp / "dst.safetensors", 1);
    ASSERT_EQ(r.violations.size(), 1u);
    EXPECT_EQ(r.violations[0].tensor, "model.layers.4.mlp.up.weight");
    EXPECT_EQ(r.violations[0].kind, "layer_bytes");
}

TEST(Verify, WrongLayerCountIsStructural) {
    TempDir tmp;
    write_toy_checkpoint(tmp / "src.safetensors", 4, 6);
    depth_upscale(tmp / "src.safetensors", plan_upscale(4, 1), tmp / "dst.safetensors");
    auto r = verify_upscaled(tmp / "src.safetensors", tmp / "dst.safetensors", 2);
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.violations[0].kind, "structure");
}

TEST(Upscale, RandomPropertyFidelityAndVerification) {
    TempDir tmp;
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 12; ++trial) {
        std::size_t n = 1 + rng() % 12, m = rng() % n;
        auto src = tmp / ("src" + std::to_string(trial) + ".safetensors");
        auto dst = tmp / ("dst" + std::to_string(trial) + ".safetensors");
        write_toy_checkpoint(src, n, rng());
        auto out = depth_upscale(src, plan_upscale(n, m), dst);
        EXPECT_EQ(out.n_layers, 2 * (n - m));
        EXPECT_TRUE(verify_upscaled(src, dst, m).ok());
        auto s = read_raw(src), d = read_raw(dst);
        std::set<std::string> src_sums;
        for (const auto& [name, _] : s.header.items()) {
            if (name != "__metadata__") src_sums.insert(sha256_hex(raw_tensor(s, name)));
        }
        for (const auto& [name, _] : d.header.items()) {
            if (name != "__metadata__") {
                EXPECT_TRUE(src_sums.count(sha256_hex(raw_tensor(d, name)))) << name;
            }
        }
    }
}

TEST(Upscale, CustomTemplate) {
    TempDir tmp;
    write_toy_checkpoint(tmp / "src.safetensors", 3, 8, {"w"}, "transformer.h.{i}.");
    LayerNaming naming{"transformer.h.{i}."};
    auto out = depth_upscale(tmp / "src.safetensors", plan_upscale(3, 1), tmp / "dst.safetensors", naming);
    EXPECT_EQ(out.n_layers, 4u);
    EXPECT_TRUE(verify_upscaled(tmp / "src.safetensors", tmp / "dst.safetensors", 1, naming).ok());
}
