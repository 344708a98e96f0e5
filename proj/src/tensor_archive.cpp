#include "forge/tensor_archive.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "forge/errors.hpp"
#include "forge/hashing.hpp"

namespace forge::surgery {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kMaxHeaderBytes = 100ull << 20;
constexpr std::size_t kCopyChunk = 1 << 20;

std::uint64_t read_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> b{};
    for (std::size_t i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b.data(), 8);
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const std::string& name) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
        throw CorruptionError("shape of tensor '" + name + "' overflows");
    }
    return a * b;
}

// Calls sink(chunk) over [offset, offset+length) of path.
template <typename Sink>
void stream_range(const fs::path& path, std::uint64_t offset, std::uint64_t length, Sink&& sink) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(static_cast<std::streamoff>(offset));
    std::vector<char> buf(static_cast<std::size_t>(std::min<std::uint64_t>(length, kCopyChunk)));
    while (length > 0) {
        auto n = static_cast<std::size_t>(std::min<std::uint64_t>(length, buf.size()));
        in.read(buf.data(), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n) throw CorruptionError("unexpected end of data in " + path.string());
        sink(std::string_view(buf.data(), n));
        length -= n;
    }
}

}  // namespace

std::string_view to_string(DType d) noexcept {
    switch (d) {
        case DType::f32: return "F32";
        case DType::f16: return "F16";
        case DType::bf16: return "BF16";
    }
    return "F32";
}

DType parse_dtype(std::string_view s) {
    if (s == "F32") return DType::f32;
    if (s == "F16") return DType::f16;
    if (s == "BF16") return DType::bf16;
    throw CorruptionError("unsupported dtype '" + std::string(s) + "'");
}

std::size_t dtype_size(DType d) noexcept { return d == DType::f32 ? 4 : 2; }

std::uint64_t TensorEntry::element_count() const noexcept {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

ArchiveHeader read_archive_header(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open archive " + path.string());
    const auto file_size = fs::file_size(path);
    std::array<unsigned char, 8> len_bytes{};
    in.read(reinterpret_cast<char*>(len_bytes.data()), 8);
    if (in.gcount() != 8) throw CorruptionError("archive " + path.string() + " is shorter than its length prefix");
    const auto header_len = read_u64_le(len_bytes.data());
    if (header_len > kMaxHeaderBytes || header_len > file_size - 8) {
        throw CorruptionError("archive " + path.string() + " declares an impossible header length");
    }
    std::string raw(static_cast<std::size_t>(header_len), '\0');
    in.read(raw.data(), static_cast<std::streamsize>(header_len));

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
        throw CorruptionError("archive " + path.string() + " header is not JSON: " + e.what());
    }
    if (!j.is_object()) throw CorruptionError("archive " + path.string() + " header is not an object");

    ArchiveHeader h;
    h.data_start = 8 + header_len;
    const auto data_len = file_size - h.data_start;
    for (const auto& [name, v] : j.items()) {
        if (name == "__metadata__") {
            if (!v.is_object()) throw CorruptionError("__metadata__ must be an object");
            for (const auto& [k, mv] : v.items()) {
                if (!mv.is_string()) throw CorruptionError("metadata value for '" + k + "' must be a string");
                h.metadata[k] = mv.get<std::string>();
            }
            continue;
        }
        TensorEntry t;
        t.name = name;
        try {
            t.dtype = parse_dtype(v.at("dtype").get<std::string>());
            t.shape = v.at("shape").get<std::vector<std::uint64_t>>();
            const auto offsets = v.at("data_offsets").get<std::array<std::uint64_t, 2>>();
            if (offsets[1] < offsets[0]) throw CorruptionError("inverted data_offsets");
            t.byte_offset = offsets[0];
            t.byte_len = offsets[1] - offsets[0];
        } catch (const nlohmann::json::exception& e) {
            throw CorruptionError("tensor '" + name + "' has a malformed header entry: " + e.what());
        }
        if (t.byte_offset + t.byte_len > data_len) {
            throw CorruptionError("tensor '" + name + "' extends past the end of " + path.string());
        }
        std::uint64_t expect = dtype_size(t.dtype);
        for (auto d : t.shape) expect = checked_mul(expect, d, name);
        if (expect != t.byte_len) {
            throw CorruptionError("tensor '" + name + "' holds " + std::to_string(t.byte_len) + " bytes but its shape needs " +
                                  std::to_string(expect));
        }
        h.tensors.push_back(std::move(t));
    }
    std::sort(h.tensors.begin(), h.tensors.end(), [](const TensorEntry& a, const TensorEntry& b) {
        return a.byte_offset != b.byte_offset ? a.byte_offset < b.byte_offset : a.name < b.name;
    });
    const TensorEntry* furthest = nullptr;
    for (const auto& cur : h.tensors) {
        if (cur.byte_len == 0) continue;
        if (furthest && cur.byte_offset < furthest->byte_offset + furthest->byte_len) {
            throw CorruptionError("tensors '" + furthest->name + "' and '" + cur.name + "' have overlapping byte ranges");
        }
        if (!furthest || cur.byte_offset + cur.byte_len > furthest->byte_offset + furthest->byte_len) furthest = &cur;
    }
    return h;
}

std::string read_tensor_bytes(const fs::path& path, const ArchiveHeader& header, const TensorEntry& t) {
    std::string out;
    out.reserve(static_cast<std::size_t>(t.byte_len));
    stream_range(path, header.data_start + t.byte_offset, t.byte_len, [&](std::string_view c) { out.append(c); });
    return out;
}

std::string tensor_sha256(const fs::path& path, const ArchiveHeader& header, const TensorEntry& t) {
    Sha256 h;
    stream_range(path, header.data_start + t.byte_offset, t.byte_len, [&](std::string_view c) { h.update(c); });
    return h.hex_digest();
}

void write_archive(const fs::path& dst, const std::vector<OutputTensor>& tensors,
                   const std::map<std::string, std::string>& metadata) {
    nlohmann::json header = nlohmann::json::object();
    if (!metadata.empty()) header["__metadata__"] = metadata;
    std::uint64_t offset = 0;
    std::set<std::string> names;
    for (const auto& t : tensors) {
        if (t.name == "__metadata__" || !names.insert(t.name).second) {
            throw ParameterError("duplicate or reserved tensor name '" + t.name + "'");
        }
        std::uint64_t len = dtype_size(t.dtype);
        for (auto d : t.shape) len = checked_mul(len, d, t.name);
        const std::uint64_t actual = std::holds_alternative<std::string>(t.data)
                                         ? std::get<std::string>(t.data).size()
                                         : std::get<FileRange>(t.data).length;
        if (actual != len) throw ParameterError("tensor '" + t.name + "' data does not match its shape");
        header[t.name] = {{"dtype", to_string(t.dtype)}, {"shape", t.shape}, {"data_offsets", {offset, offset + len}}};
        offset += len;
    }
    std::string raw = header.dump();
    raw.append((8 - raw.size() % 8) % 8, ' ');

    auto tmp = dst;
    tmp += ".tmp";
    try {
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot create " + tmp.string());
            write_u64_le(out, raw.size());
            out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
            for (const auto& t : tensors) {
                if (const auto* bytes = std::get_if<std::string>(&t.data)) {
                    out.write(bytes->data(), static_cast<std::streamsize>(bytes->size()));
                } else {
                    const auto& r = std::get<FileRange>(t.data);
                    stream_range(r.path, r.offset, r.length,
                                 [&](std::string_view c) { out.write(c.data(), static_cast<std::streamsize>(c.size())); });
                }
                if (!out) throw IoError("write failed on " + tmp.string());
            }
            out.close();
            if (!out) throw IoError("write failed on " + tmp.string());
        }
        fs::rename(tmp, dst);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
}

}  // namespace forge::surgery
