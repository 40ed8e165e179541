#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mgc/tensor.hpp"

namespace mgc::io {

using json = nlohmann::json;

// Named-tensor archive with a JSON metadata header. Used for all checkpoints.
struct Archive {
    json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;
};

void save_archive(const std::filesystem::path& path, const Archive& a);
Archive load_archive(const std::filesystem::path& path);

// zlib wrappers.
std::vector<std::uint8_t> zlib_compress(const std::uint8_t* data, std::size_t n);
std::vector<std::uint8_t> zlib_decompress(const std::uint8_t* data, std::size_t n,
                                          std::size_t expected_size);

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Minimal RGB8 PNG writer (zlib-backed, no filtering).
void write_png(const std::filesystem::path& path, const std::uint8_t* rgb, int width, int height);

// FNV-1a over raw bytes, used for checkpoint/weight checksums.
std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n);
std::uint64_t tensor_checksum(const std::vector<std::pair<std::string, Tensor>>& tensors);

}  // namespace mgc::io
