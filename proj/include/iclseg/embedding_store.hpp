#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "iclseg/encoder.hpp"

namespace iclseg {

/// Raised when a binary store file (EMB1 / MBK1) is malformed. The message
/// names the offending byte offset.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& message, std::size_t byte_offset);
    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

/// Embedding store layout: magic "EMB1", little-endian u32 count, u32 dim,
/// then count*dim little-endian f32. Row ids live in the sidecar
/// "<file>.json" as {"ids": [...]} with one id per row.
void write_embedding_store(const std::filesystem::path& path,
                           const std::vector<GlobalEmbedding>& embeddings);

/// Loads a store; vectors are re-normalized to unit length. Throws
/// FormatError on bad magic, size mismatch, non-finite or zero-norm rows,
/// and on a sidecar whose id count disagrees with the header.
std::vector<GlobalEmbedding> load_embedding_store(const std::filesystem::path& path);

}  // namespace iclseg
