#include "iclseg/predictor.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "binio.hpp"
#include "iclseg/embedding_store.hpp"
#include "iclseg/parallel.hpp"
#include "iclseg/rng.hpp"

namespace iclseg {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::knn: return "knn";
        case Strategy::random: return "random";
        case Strategy::full: return "full";
    }
    return "?";
}

std::string to_string(Aggregation a) {
    return a == Aggregation::memory ? "memory" : "logit_avg";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "knn") return Strategy::knn;
    if (s == "random") return Strategy::random;
    if (s == "full") return Strategy::full;
    throw std::invalid_argument("unknown strategy '" + s + "' (expected knn|random|full)");
}

Aggregation aggregation_from_string(const std::string& s) {
    if (s == "memory") return Aggregation::memory;
    if (s == "logit_avg") return Aggregation::logit_avg;
    throw std::invalid_argument("unknown aggregation '" + s + "' (expected memory|logit_avg)");
}

namespace {

void check_predictor_config(const PredictorConfig& config) {
    if (config.support_size < 1) {
        throw std::invalid_argument("predictor: support_size must be >= 1");
    }
    if (!(config.threshold > 0.0 && config.threshold < 1.0)) {
        throw std::invalid_argument("predictor: threshold must be in (0, 1)");
    }
    if (!(config.temperature > 0.0)) {
        throw std::invalid_argument("predictor: temperature must be > 0");
    }
    MemoryBank probe(config.memory);  // validates the memory config
}

}  // namespace

Predictor::Predictor(std::vector<LabeledPair> meta_support, PredictorConfig config,
                     EmbeddingSource embeddings)
    : meta_support_(std::move(meta_support)),
      config_(std::move(config)),
      embeddings_(std::move(embeddings)) {
    if (meta_support_.empty()) {
        throw std::invalid_argument("predictor: meta-support set must be non-empty");
    }
    check_predictor_config(config_);

    meta_ids_.reserve(meta_support_.size());
    for (std::size_t i = 0; i < meta_support_.size(); ++i) {
        if (!pair_by_id_.emplace(meta_support_[i].id, i).second) {
            throw std::invalid_argument("predictor: duplicate meta-support id '" +
                                        meta_support_[i].id + "'");
        }
        meta_ids_.push_back(meta_support_[i].id);
    }

    if (config_.strategy == Strategy::knn) {
        std::vector<GlobalEmbedding> embs;
        embs.reserve(meta_support_.size());
        for (const auto& pair : meta_support_) {
            embs.push_back(embedding_for(pair.image, pair.id));
        }
        index_.emplace(std::move(embs));
    }

    if (const char* dir = std::getenv("ICL_SEG_CACHE_DIR"); dir && *dir) {
        spill_dir_ = std::filesystem::path(dir);
    }
}

GlobalEmbedding Predictor::embedding_for(const Image& image, const std::string& id) const {
    if (embeddings_.store) {
        const auto it = embeddings_.store->find(id);
        if (it == embeddings_.store->end()) {
            throw std::runtime_error("predictor: embedding store has no entry for '" + id +
                                     "'; provide embeddings for every image or use the toy embedder");
        }
        GlobalEmbedding emb = it->second;
        emb.id = id;
        return emb;
    }
    return embed_global(image, config_.encoder, id);
}

SelectionResult Predictor::choose_support(const Image& query, const std::string& query_id) const {
    switch (config_.strategy) {
        case Strategy::full: {
            SelectionResult sel;
            sel.query_id = query_id;
            sel.strategy = "full";
            sel.n = meta_ids_.size();
            sel.chosen = meta_ids_;
            return sel;
        }
        case Strategy::knn:
            return select_knn(*index_, embedding_for(query, query_id), config_.support_size,
                              config_.exclude_self);
        case Strategy::random:
            return select_random_ids(meta_ids_, config_.support_size,
                                     mix_seed(config_.seed, fnv1a64(query_id)), query_id,
                                     config_.exclude_self);
    }
    throw std::logic_error("predictor: unreachable strategy");
}

std::string Predictor::cache_key(const std::vector<std::string>& chosen) const {
    std::ostringstream material;
    material.precision(17);
    for (const auto& id : chosen) material << id << '\x1f';
    material << "|stride=" << config_.encoder.stride
             << "|pos=" << config_.encoder.positional_weight
             << "|cap=" << config_.memory.capacity
             << "|budget=" << config_.memory.prototype_budget
             << "|auto=" << config_.memory.auto_consolidate;
    std::ostringstream key;
    key << std::hex << fnv1a64(material.str());
    return key.str();
}

MemoryBank Predictor::build_bank(const std::vector<std::string>& chosen) const {
    MemoryBank bank(config_.memory);
    for (const auto& id : chosen) {
        const auto it = pair_by_id_.find(id);
        if (it == pair_by_id_.end()) {
            throw std::invalid_argument("predictor: support id '" + id + "' not in meta-support");
        }
        const LabeledPair& pair = meta_support_[it->second];
        bank.add_support(encode_keys(pair.image, config_.encoder),
                         encode_values(pair.image, pair.mask, config_.encoder), pair.id);
    }
    return bank;
}

std::shared_ptr<const MemoryBank> Predictor::bank_for(const std::vector<std::string>& chosen) const {
    const std::string key = cache_key(chosen);
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        const auto it = cache_.find(key);
        if (it != cache_.end()) {
            lru_.splice(lru_.begin(), lru_, it->second);
            return it->second->bank;
        }
    }

    std::shared_ptr<const MemoryBank> bank;
    const std::filesystem::path spill_path =
        spill_dir_ ? *spill_dir_ / ("bank_" + key + ".mbk1") : std::filesystem::path{};
    if (spill_dir_ && std::filesystem::exists(spill_path)) {
        try {
            auto loaded = std::make_shared<MemoryBank>(MemoryBank::load(spill_path));
            // The snapshot must describe exactly this support sequence.
            std::vector<std::string> ids;
            for (std::size_t i = 0; i < loaded->total_entries(); ++i) {
                const std::string& pid = loaded->entry_source(i).pair_id;
                if (ids.empty() || ids.back() != pid) ids.push_back(pid);
            }
            if (ids == chosen) bank = std::move(loaded);
        } catch (const std::exception&) {
            bank.reset();  // unreadable spill, rebuild below
        }
    }
    if (!bank) {
        bank = std::make_shared<const MemoryBank>(build_bank(chosen));
        if (spill_dir_) {
            std::filesystem::create_directories(*spill_dir_);
            bank->save(spill_path);
        }
    }

    std::lock_guard<std::mutex> lock(cache_mutex_);
    const auto it = cache_.find(key);
    if (it != cache_.end()) {
        // another thread built the same (identical) bank first
        lru_.splice(lru_.begin(), lru_, it->second);
        return it->second->bank;
    }
    lru_.push_front(CacheEntry{key, bank});
    cache_[key] = lru_.begin();
    while (lru_.size() > kMaxCachedBanks) {
        cache_.erase(lru_.back().key);
        lru_.pop_back();
    }
    return bank;
}

LogitMap Predictor::memory_mode_logits(const Image& query,
                                       const std::vector<std::string>& chosen) const {
    const FeatureGrid keys = encode_keys(query, config_.encoder);
    const auto bank = bank_for(chosen);
    const ValueGrid values = bank->readout(keys, config_.temperature, config_.top_k);
    return decode(values, query.height(), query.width(), config_.decoder, &keys);
}

LogitMap Predictor::logit_avg_logits(const Image& query,
                                     const std::vector<std::string>& chosen) const {
    const FeatureGrid keys = encode_keys(query, config_.encoder);

    // Accumulation order is canonicalized by id so the mean is exactly
    // invariant under permutations of the support list.
    std::vector<std::string> order = chosen;
    std::sort(order.begin(), order.end());

    std::vector<double> acc(static_cast<std::size_t>(query.height()) * query.width(), 0.0);
    for (const auto& id : order) {
        const auto bank = bank_for({id});
        const ValueGrid values = bank->readout(keys, config_.temperature, config_.top_k);
        const LogitMap logits = decode(values, query.height(), query.width(), config_.decoder, &keys);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += logits.data()[i];
    }
    std::vector<float> out(acc.size());
    const double k = static_cast<double>(order.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / k);
    return LogitMap(query.height(), query.width(), std::move(out));
}

PredictResult Predictor::predict(const Image& query, const std::string& query_id) const {
    SelectionResult selection = choose_support(query, query_id);
    if (selection.chosen.empty()) {
        throw std::runtime_error("predict: selection produced no support items for query '" +
                                 query_id + "'");
    }
    LogitMap logits = config_.aggregation == Aggregation::memory
                          ? memory_mode_logits(query, selection.chosen)
                          : logit_avg_logits(query, selection.chosen);
    BinaryMask mask = mask_from_logits(logits, config_.threshold);
    return {std::move(mask), std::move(logits), std::move(selection)};
}

std::vector<PredictResult> Predictor::predict_batch(const std::vector<Image>& queries,
                                                    const std::vector<std::string>& query_ids,
                                                    unsigned threads) const {
    if (!query_ids.empty() && query_ids.size() != queries.size()) {
        throw std::invalid_argument("predict_batch: query_ids size must match queries");
    }
    if (config_.strategy == Strategy::full) prewarm();

    std::vector<std::optional<PredictResult>> slots(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        const std::string& id = query_ids.empty() ? std::string{} : query_ids[i];
        slots[i] = predict(queries[i], id);
    });

    std::vector<PredictResult> results;
    results.reserve(queries.size());
    for (auto& slot : slots) results.push_back(std::move(*slot));
    return results;
}

void Predictor::prewarm() const {
    if (config_.strategy == Strategy::full) bank_for(meta_ids_);
}

void write_logit_dump(const std::filesystem::path& path, const LogitMap& logits,
                      const std::string& id) {
    std::string bytes;
    bytes.append("LGT1", 4);
    binio::append_u32le(bytes, static_cast<std::uint32_t>(logits.height()));
    binio::append_u32le(bytes, static_cast<std::uint32_t>(logits.width()));
    for (const float v : logits.data()) binio::append_f32le(bytes, v);
    binio::atomic_write_bytes(path, bytes);

    const nlohmann::json sidecar = {
        {"id", id}, {"height", logits.height()}, {"width", logits.width()}};
    std::filesystem::path side = path;
    side += ".json";
    binio::atomic_write_bytes(side, sidecar.dump(2) + "\n");
}

LogitMap load_logit_dump(const std::filesystem::path& path) {
    const std::vector<unsigned char> bytes = binio::read_file_bytes(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "LGT1", 4) != 0) {
        throw FormatError("logit dump: bad header, expected LGT1", 0);
    }
    const std::uint32_t h = binio::read_u32le(bytes.data() + 4);
    const std::uint32_t w = binio::read_u32le(bytes.data() + 8);
    const std::size_t expected = 12 + static_cast<std::size_t>(h) * w * 4;
    if (bytes.size() != expected) {
        throw FormatError("logit dump: file size does not match header",
                          std::min(bytes.size(), expected));
    }
    std::vector<float> data(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = binio::read_f32le(bytes.data() + 12 + i * 4);
    }
    return LogitMap(static_cast<int>(h), static_cast<int>(w), std::move(data));
}

PredictResult predict(const Image& query, const std::vector<LabeledPair>& meta_support,
                      const PredictorConfig& config, const std::string& query_id) {
    return Predictor(meta_support, config).predict(query, query_id);
}

std::vector<PredictResult> predict_batch(const std::vector<Image>& queries,
                                         const std::vector<std::string>& query_ids,
                                         const std::vector<LabeledPair>& meta_support,
                                         const PredictorConfig& config, unsigned threads) {
    return Predictor(meta_support, config).predict_batch(queries, query_ids, threads);
}

}  // namespace iclseg
