#include "iclseg/embedding_store.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "binio.hpp"

namespace iclseg {

namespace binio {

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

void atomic_write_bytes(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(std::random_device{}());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open file for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

}  // namespace binio

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::size_t kHeaderSize = 12;

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    p += ".json";
    return p;
}

}  // namespace

FormatError::FormatError(const std::string& message, std::size_t byte_offset)
    : std::runtime_error(message + " (byte " + std::to_string(byte_offset) + ")"),
      byte_offset_(byte_offset) {}

void write_embedding_store(const std::filesystem::path& path,
                           const std::vector<GlobalEmbedding>& embeddings) {
    const std::uint32_t count = static_cast<std::uint32_t>(embeddings.size());
    const std::uint32_t dim = count ? static_cast<std::uint32_t>(embeddings[0].vector.size()) : 0;

    std::string bytes;
    bytes.reserve(kHeaderSize + static_cast<std::size_t>(count) * dim * 4);
    bytes.append(kMagic, 4);
    binio::append_u32le(bytes, count);
    binio::append_u32le(bytes, dim);

    nlohmann::json ids = nlohmann::json::array();
    for (const auto& emb : embeddings) {
        if (emb.vector.size() != dim) {
            throw std::invalid_argument("write_embedding_store: embeddings must share one dimension");
        }
        for (const float v : emb.vector) binio::append_f32le(bytes, v);
        ids.push_back(emb.id);
    }

    binio::atomic_write_bytes(path, bytes);
    binio::atomic_write_bytes(sidecar_path(path), nlohmann::json{{"ids", ids}}.dump(2) + "\n");
}

std::vector<GlobalEmbedding> load_embedding_store(const std::filesystem::path& path) {
    const std::vector<unsigned char> bytes = binio::read_file_bytes(path);
    if (bytes.size() < kHeaderSize) {
        throw FormatError("embedding store: truncated header", bytes.size());
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("embedding store: bad magic, expected EMB1", 0);
    }
    const std::uint32_t count = binio::read_u32le(bytes.data() + 4);
    const std::uint32_t dim = binio::read_u32le(bytes.data() + 8);
    if (count > 0 && dim == 0) {
        throw FormatError("embedding store: zero dimension with nonzero count", 8);
    }
    const std::size_t expected =
        kHeaderSize + static_cast<std::size_t>(count) * dim * 4;
    if (bytes.size() != expected) {
        throw FormatError("embedding store: file size " + std::to_string(bytes.size()) +
                              " does not match header (expected " + std::to_string(expected) + ")",
                          std::min(bytes.size(), expected));
    }

    nlohmann::json sidecar;
    {
        std::ifstream in(sidecar_path(path));
        if (!in) throw std::runtime_error("embedding store: missing sidecar " + sidecar_path(path).string());
        in >> sidecar;
    }
    if (!sidecar.contains("ids") || !sidecar["ids"].is_array() ||
        sidecar["ids"].size() != count) {
        throw FormatError("embedding store: sidecar id count does not match header count", 4);
    }

    std::vector<GlobalEmbedding> result;
    result.reserve(count);
    for (std::uint32_t row = 0; row < count; ++row) {
        GlobalEmbedding emb;
        emb.id = sidecar["ids"][row].get<std::string>();
        emb.vector.resize(dim);
        double norm_sq = 0.0;
        for (std::uint32_t c = 0; c < dim; ++c) {
            const std::size_t offset = kHeaderSize + (static_cast<std::size_t>(row) * dim + c) * 4;
            const float v = binio::read_f32le(bytes.data() + offset);
            if (!std::isfinite(v)) {
                throw FormatError("embedding store: non-finite value in row " + std::to_string(row),
                                  offset);
            }
            emb.vector[c] = v;
            norm_sq += static_cast<double>(v) * v;
        }
        const double norm = std::sqrt(norm_sq);
        if (!(norm > 0.0)) {
            throw FormatError("embedding store: zero-norm vector in row " + std::to_string(row),
                              kHeaderSize + static_cast<std::size_t>(row) * dim * 4);
        }
        for (auto& v : emb.vector) v = static_cast<float>(v / norm);
        result.push_back(std::move(emb));
    }
    return result;
}

}  // namespace iclseg
