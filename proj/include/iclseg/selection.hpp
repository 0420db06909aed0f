#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "iclseg/encoder.hpp"

namespace iclseg {

/// Immutable table of unit-norm embeddings over a meta-support set,
/// supporting exact nearest-neighbor selection. Ids must be unique and all
/// vectors must share one dimension. Read-only after construction.
class EmbeddingIndex {
public:
    explicit EmbeddingIndex(std::vector<GlobalEmbedding> embeddings);

    std::size_t size() const { return embeddings_.size(); }
    int dim() const { return dim_; }
    const GlobalEmbedding& at(std::size_t i) const { return embeddings_[i]; }
    std::optional<std::size_t> find(const std::string& id) const;

private:
    std::vector<GlobalEmbedding> embeddings_;
    std::unordered_map<std::string, std::size_t> by_id_;
    int dim_ = 0;
};

struct SelectionResult {
    std::string query_id;
    std::vector<std::string> chosen;  ///< knn: descending similarity; random: draw order
    std::string strategy;             ///< "knn" | "random" | "full"
    std::size_t n = 0;                ///< requested support size
};

/// Exact cosine top-n over the index (linear scan). Ties break toward the
/// lower insertion index. With exclude_self, an entry whose id equals the
/// query's id is skipped.
SelectionResult select_knn(const EmbeddingIndex& index, const GlobalEmbedding& query,
                           std::size_t n, bool exclude_self = true);

/// Uniform selection without replacement, seeded and deterministic.
SelectionResult select_random(const EmbeddingIndex& index, std::size_t n, std::uint64_t seed,
                              const std::string& query_id = "", bool exclude_self = true);

/// Id-pool variant of select_random used where no embeddings exist; the
/// index-based overload delegates here.
SelectionResult select_random_ids(const std::vector<std::string>& ids, std::size_t n,
                                  std::uint64_t seed, const std::string& query_id = "",
                                  bool exclude_self = true);

}  // namespace iclseg
