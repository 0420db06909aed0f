#pragma once

#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "iclseg/core.hpp"
#include "iclseg/decoder.hpp"
#include "iclseg/encoder.hpp"
#include "iclseg/memory.hpp"
#include "iclseg/selection.hpp"

namespace iclseg {

enum class Strategy { knn, random, full };
enum class Aggregation { memory, logit_avg };

std::string to_string(Strategy s);
std::string to_string(Aggregation a);
Strategy strategy_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);

struct PredictorConfig {
    std::size_t support_size = 10;
    Strategy strategy = Strategy::full;
    Aggregation aggregation = Aggregation::memory;
    double temperature = 1.0;
    int top_k = 30;          ///< <= 0 disables sparse readout
    double threshold = 0.5;  ///< in (0, 1)
    DecoderConfig decoder;
    EncoderConfig encoder;
    MemoryConfig memory;
    std::uint64_t seed = 0;
    bool exclude_self = true;  ///< drop exact-id matches during selection
};

/// Where whole-image embeddings come from for knn selection: a preloaded
/// store keyed by pair id, or (when store is null) the toy embedder applied
/// to pixels on demand.
struct EmbeddingSource {
    std::shared_ptr<const std::unordered_map<std::string, GlobalEmbedding>> store;
};

struct PredictResult {
    BinaryMask mask;
    LogitMap logits;
    SelectionResult selection;
};

/// The (query, meta-support) -> mask mapping: optional support-set
/// selection, memory population, affinity readout and decoding. Banks built
/// for a given support id sequence are cached (LRU, at most 8 in memory,
/// optional disk spill via the MBK1 snapshot format under
/// $ICL_SEG_CACHE_DIR) so repeated queries against the same support reuse
/// them; cached banks are bit-identical to fresh builds.
class Predictor {
public:
    Predictor(std::vector<LabeledPair> meta_support, PredictorConfig config,
              EmbeddingSource embeddings = {});

    PredictResult predict(const Image& query, const std::string& query_id = "") const;

    /// Results are byte-identical to per-query predict() calls for any
    /// thread count. threads == 0 picks the default.
    std::vector<PredictResult> predict_batch(const std::vector<Image>& queries,
                                             const std::vector<std::string>& query_ids,
                                             unsigned threads = 0) const;

    /// Builds the shared full-support bank ahead of a batch fan-out.
    void prewarm() const;

    const PredictorConfig& config() const { return config_; }
    const std::vector<LabeledPair>& meta_support() const { return meta_support_; }

private:
    SelectionResult choose_support(const Image& query, const std::string& query_id) const;
    GlobalEmbedding embedding_for(const Image& image, const std::string& id) const;
    std::shared_ptr<const MemoryBank> bank_for(const std::vector<std::string>& chosen) const;
    MemoryBank build_bank(const std::vector<std::string>& chosen) const;
    std::string cache_key(const std::vector<std::string>& chosen) const;
    LogitMap memory_mode_logits(const Image& query, const std::vector<std::string>& chosen) const;
    LogitMap logit_avg_logits(const Image& query, const std::vector<std::string>& chosen) const;

    std::vector<LabeledPair> meta_support_;
    std::unordered_map<std::string, std::size_t> pair_by_id_;
    std::vector<std::string> meta_ids_;
    PredictorConfig config_;
    EmbeddingSource embeddings_;
    std::optional<EmbeddingIndex> index_;
    std::optional<std::filesystem::path> spill_dir_;

    struct CacheEntry {
        std::string key;
        std::shared_ptr<const MemoryBank> bank;
    };
    static constexpr std::size_t kMaxCachedBanks = 8;
    mutable std::mutex cache_mutex_;
    mutable std::list<CacheEntry> lru_;
    mutable std::unordered_map<std::string, std::list<CacheEntry>::iterator> cache_;
};

/// Logit dump: magic "LGT1", little-endian u32 height, u32 width, then
/// height*width little-endian f32; sidecar "<file>.json" holds
/// {"id", "height", "width"}.
void write_logit_dump(const std::filesystem::path& path, const LogitMap& logits,
                      const std::string& id);
LogitMap load_logit_dump(const std::filesystem::path& path);

/// One-shot conveniences over a temporary Predictor.
PredictResult predict(const Image& query, const std::vector<LabeledPair>& meta_support,
                      const PredictorConfig& config, const std::string& query_id = "");
std::vector<PredictResult> predict_batch(const std::vector<Image>& queries,
                                         const std::vector<std::string>& query_ids,
                                         const std::vector<LabeledPair>& meta_support,
                                         const PredictorConfig& config, unsigned threads = 0);

}  // namespace iclseg
