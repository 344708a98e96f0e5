#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace forge::surgery {

// Single-file named-tensor archive, byte-compatible with safetensors:
//
//   [u64 little-endian N][N bytes of JSON header, space padded][tensor data]
//
// The header maps each tensor name to {"dtype", "shape", "data_offsets":[begin,end]}
// with offsets relative to the first data byte; the optional "__metadata__" key
// holds a string->string map.

enum class DType { f32, f16, bf16 };

std::string_view to_string(DType d) noexcept;  // "F32" | "F16" | "BF16"
DType parse_dtype(std::string_view s);
std::size_t dtype_size(DType d) noexcept;

struct TensorEntry {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::uint64_t> shape;
    std::uint64_t byte_offset = 0;  // relative to the data section
    std::uint64_t byte_len = 0;

    std::uint64_t element_count() const noexcept;
};

struct ArchiveHeader {
    std::vector<TensorEntry> tensors;  // ordered by byte_offset
    std::map<std::string, std::string> metadata;
    std::uint64_t data_start = 0;  // absolute file offset of the data section
};

// Throws IoError when unreadable and CorruptionError on a malformed header,
// out-of-range or overlapping byte ranges, or a length/shape mismatch.
ArchiveHeader read_archive_header(const std::filesystem::path& path);

std::string read_tensor_bytes(const std::filesystem::path& path, const ArchiveHeader& header, const TensorEntry& t);

// Streaming sha256 of one tensor's bytes.
std::string tensor_sha256(const std::filesystem::path& path, const ArchiveHeader& header, const TensorEntry& t);

struct FileRange {
    std::filesystem::path path;
    std::uint64_t offset = 0;  // absolute
    std::uint64_t length = 0;
};

struct OutputTensor {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::uint64_t> shape;
    std::variant<std::string, FileRange> data;
};

// Writes to <dst>.tmp and renames into place; on failure dst is untouched.
void write_archive(const std::filesystem::path& dst, const std::vector<OutputTensor>& tensors,
                   const std::map<std::string, std::string>& metadata = {});

}  // namespace forge::surgery
