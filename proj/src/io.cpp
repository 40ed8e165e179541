#include "mgc/io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "mgc/errors.hpp"

namespace mgc::io {

const Tensor& Archive::get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw DataError("archive tensor not found: " + name);
}

bool Archive::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for write: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw DataError("cannot open: " + path.string());
    const auto n = static_cast<std::size_t>(f.tellg());
    f.seekg(0);
    std::vector<std::uint8_t> bytes(n);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (!f) throw DataError("read failed: " + path.string());
    return bytes;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for write: " + path.string());
    f << text;
}

std::string read_text(const std::filesystem::path& path) {
    auto b = read_file(path);
    return std::string(b.begin(), b.end());
}

namespace {
void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
std::uint32_t read_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
}  // namespace

void save_archive(const std::filesystem::path& path, const Archive& a) {
    json header;
    header["meta"] = a.meta;
    header["entries"] = json::array();
    for (const auto& [name, t] : a.tensors)
        header["entries"].push_back({{"name", name}, {"shape", t.shape}});
    const std::string hs = header.dump();

    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'M', 'G', 'C', 'T'});
    append_u32(out, static_cast<std::uint32_t>(hs.size()));
    out.insert(out.end(), hs.begin(), hs.end());
    for (const auto& [name, t] : a.tensors) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(t.data.data());
        out.insert(out.end(), p, p + t.data.size() * sizeof(float));
    }
    write_file(path, out);
}

Archive load_archive(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "MGCT", 4) != 0)
        throw DataError("not an archive: " + path.string());
    const std::uint32_t hlen = read_u32(bytes.data() + 4);
    if (bytes.size() < 8 + hlen) throw DataError("truncated archive: " + path.string());
    json header = json::parse(std::string(bytes.begin() + 8, bytes.begin() + 8 + hlen));
    Archive a;
    a.meta = header.value("meta", json::object());
    std::size_t off = 8 + hlen;
    for (const auto& e : header["entries"]) {
        Tensor t(e["shape"].get<std::vector<int>>());
        const std::size_t nbytes = t.data.size() * sizeof(float);
        if (off + nbytes > bytes.size()) throw DataError("truncated archive: " + path.string());
        std::memcpy(t.data.data(), bytes.data() + off, nbytes);
        off += nbytes;
        a.tensors.emplace_back(e["name"].get<std::string>(), std::move(t));
    }
    return a;
}

std::vector<std::uint8_t> zlib_compress(const std::uint8_t* data, std::size_t n) {
    uLongf bound = compressBound(static_cast<uLong>(n));
    std::vector<std::uint8_t> out(bound);
    if (compress2(out.data(), &bound, data, static_cast<uLong>(n), 6) != Z_OK)
        throw DataError("zlib compress failed");
    out.resize(bound);
    return out;
}

std::vector<std::uint8_t> zlib_decompress(const std::uint8_t* data, std::size_t n,
                                          std::size_t expected_size) {
    std::vector<std::uint8_t> out(expected_size);
    uLongf len = static_cast<uLongf>(expected_size);
    if (uncompress(out.data(), &len, data, static_cast<uLong>(n)) != Z_OK ||
        len != expected_size)
        throw DataError("zlib decompress failed");
    return out;
}

namespace {
void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void png_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
    append_be32(out, static_cast<std::uint32_t>(payload.size()));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    std::uint32_t crc =
        static_cast<std::uint32_t>(crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
    append_be32(out, crc);
}
}  // namespace

void write_png(const std::filesystem::path& path, const std::uint8_t* rgb, int width, int height) {
    // Raw scanlines with filter byte 0.
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), rgb + static_cast<std::size_t>(y) * width * 3,
                   rgb + (static_cast<std::size_t>(y) + 1) * width * 3);
    }
    auto compressed = zlib_compress(raw.data(), raw.size());

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    std::vector<std::uint8_t> ihdr;
    append_be32(ihdr, static_cast<std::uint32_t>(width));
    append_be32(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    png_chunk(out, "IHDR", ihdr);
    png_chunk(out, "IDAT", compressed);
    png_chunk(out, "IEND", {});
    write_file(path, out);
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t tensor_checksum(const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : tensors) {
        h ^= fnv1a(reinterpret_cast<const std::uint8_t*>(name.data()), name.size());
        h *= 0x100000001b3ULL;
        h ^= fnv1a(reinterpret_cast<const std::uint8_t*>(t.data.data()),
                   t.data.size() * sizeof(float));
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace mgc::io
