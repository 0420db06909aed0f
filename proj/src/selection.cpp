#include "iclseg/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "iclseg/rng.hpp"

namespace iclseg {

EmbeddingIndex::EmbeddingIndex(std::vector<GlobalEmbedding> embeddings)
    : embeddings_(std::move(embeddings)) {
    if (embeddings_.empty()) {
        throw std::invalid_argument("EmbeddingIndex: at least one embedding required");
    }
    dim_ = embeddings_[0].dim();
    for (std::size_t i = 0; i < embeddings_.size(); ++i) {
        const auto& emb = embeddings_[i];
        if (emb.dim() != dim_) {
            throw std::invalid_argument("EmbeddingIndex: inconsistent dimension at '" + emb.id + "'");
        }
        double norm_sq = 0.0;
        for (const float v : emb.vector) norm_sq += static_cast<double>(v) * v;
        if (std::abs(std::sqrt(norm_sq) - 1.0) > 1e-6) {
            throw std::invalid_argument("EmbeddingIndex: embedding '" + emb.id + "' is not unit norm");
        }
        if (!by_id_.emplace(emb.id, i).second) {
            throw std::invalid_argument("EmbeddingIndex: duplicate id '" + emb.id + "'");
        }
    }
}

std::optional<std::size_t> EmbeddingIndex::find(const std::string& id) const {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

SelectionResult select_knn(const EmbeddingIndex& index, const GlobalEmbedding& query,
                           std::size_t n, bool exclude_self) {
    if (n < 1) throw std::invalid_argument("select_knn: n must be >= 1");
    if (query.dim() != index.dim()) {
        throw std::invalid_argument("select_knn: query dimension does not match index");
    }

    std::vector<std::size_t> candidates;
    candidates.reserve(index.size());
    std::vector<double> sim(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (exclude_self && index.at(i).id == query.id) continue;
        sim[i] = cosine_similarity(query, index.at(i));
        candidates.push_back(i);
    }

    const auto better = [&sim](std::size_t a, std::size_t b) {
        return sim[a] > sim[b] || (sim[a] == sim[b] && a < b);
    };
    const std::size_t take = std::min(n, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                      candidates.end(), better);

    SelectionResult result;
    result.query_id = query.id;
    result.strategy = "knn";
    result.n = n;
    result.chosen.reserve(take);
    for (std::size_t r = 0; r < take; ++r) result.chosen.push_back(index.at(candidates[r]).id);
    return result;
}

SelectionResult select_random_ids(const std::vector<std::string>& ids, std::size_t n,
                                  std::uint64_t seed, const std::string& query_id,
                                  bool exclude_self) {
    if (n < 1) throw std::invalid_argument("select_random: n must be >= 1");

    std::vector<std::size_t> pool;
    pool.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (exclude_self && !query_id.empty() && ids[i] == query_id) continue;
        pool.push_back(i);
    }

    Rng rng(seed);
    const std::size_t take = std::min(n, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.bounded(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }

    SelectionResult result;
    result.query_id = query_id;
    result.strategy = "random";
    result.n = n;
    result.chosen.reserve(take);
    for (std::size_t i = 0; i < take; ++i) result.chosen.push_back(ids[pool[i]]);
    return result;
}

SelectionResult select_random(const EmbeddingIndex& index, std::size_t n, std::uint64_t seed,
                              const std::string& query_id, bool exclude_self) {
    std::vector<std::string> ids;
    ids.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) ids.push_back(index.at(i).id);
    return select_random_ids(ids, n, seed, query_id, exclude_self);
}

}  // namespace iclseg
