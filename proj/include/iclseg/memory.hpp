#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iclseg/encoder.hpp"

namespace iclseg {

struct MemoryConfig {
    std::size_t capacity = 4096;         ///< max working-memory entries before condensation
    std::size_t prototype_budget = 128;  ///< max long-term prototypes; must be <= capacity/2
    bool auto_consolidate = true;        ///< condense inside add_support once capacity is exceeded
};

struct EntrySource {
    std::string pair_id;
    std::size_t patch_index = 0;
};

/// Normalized nonnegative weights over all memory entries for one query
/// patch: working entries first, then long-term prototypes. Sums to 1.
struct AffinityRow {
    std::vector<double> weights;
};

/// Usage statistics gathered during read-only readout. Kept outside the
/// bank so concurrent readers never touch shared state; fold back with
/// MemoryBank::apply_usage under the single writer.
class UsageAccumulator {
public:
    void add(std::size_t entry, double weight);
    void merge(const UsageAccumulator& other);
    const std::vector<double>& weights() const { return acc_; }

private:
    std::vector<double> acc_;
};

struct ConsolidationReport {
    bool performed = false;
    std::vector<std::size_t> prototype_entries;  ///< working indices promoted this round
    std::vector<std::size_t> retained_entries;   ///< working indices kept in working memory
    /// (evicted working index, long-term slot that absorbed its value mass)
    std::vector<std::pair<std::size_t, std::size_t>> absorbed;
};

/// XMem-style memory: a working store of per-patch key/value entries in
/// insertion order plus a compact long-term store of condensed prototypes.
/// Population and consolidation are single-writer; once populated the bank
/// is frozen and affinity/readout are const and callable concurrently.
class MemoryBank {
public:
    explicit MemoryBank(MemoryConfig config = {});

    /// Appends one entry per patch with usage 0. Key/value grids must share
    /// geometry; the key dimension must match entries already stored.
    /// Consolidates afterwards when the working store exceeds capacity (and
    /// auto_consolidate is on).
    void add_support(const FeatureGrid& keys, const ValueGrid& values, const std::string& pair_id);

    /// similarity_i = -||query - key_i||^2 / (temperature * sqrt(key_dim));
    /// with top_k > 0 only the k best similarities are kept. Weights are the
    /// softmax over kept similarities. Usage mass is recorded into `usage`
    /// when provided; the bank itself is not mutated.
    AffinityRow affinity(std::span<const float> query_key, double temperature, int top_k,
                         UsageAccumulator* usage = nullptr) const;

    /// Affinity-weighted sum of stored values per query patch. Output grid
    /// geometry mirrors the query grid; dim = value_dim().
    ValueGrid readout(const FeatureGrid& query_keys, double temperature, int top_k,
                      UsageAccumulator* usage = nullptr) const;

    /// Condenses the working store: the most-used entries (ties by insertion
    /// order) move to the long-term store up to the prototype budget, the
    /// most recent capacity/2 entries stay in working memory, and every
    /// other entry's value mass folds into its nearest prototype as a
    /// mass-weighted running mean. No-op (with a stderr warning) when the
    /// working store is within capacity or the budget covers it entirely.
    ConsolidationReport consolidate();

    /// Folds read-side usage statistics into the stored entries. Call only
    /// while the bank is not being mutated; indices refer to the entry
    /// layout at the time the readouts ran.
    void apply_usage(const UsageAccumulator& acc);

    std::size_t key_dim() const { return key_dim_; }
    std::size_t value_dim() const { return value_dim_; }
    std::size_t working_count() const;
    std::size_t longterm_count() const;
    std::size_t total_entries() const { return working_count() + longterm_count(); }

    /// Entry accessors over the combined index space: [0, working_count)
    /// are working entries in insertion order, the rest long-term slots.
    std::span<const float> entry_key(std::size_t i) const;
    std::span<const float> entry_value(std::size_t i) const;
    double entry_usage(std::size_t i) const;
    const EntrySource& entry_source(std::size_t i) const;

    const MemoryConfig& config() const { return config_; }

    /// Snapshot layout: magic "MBK1", u32 key_dim, u32 value_dim, u32
    /// working count, u32 long-term count, then keys/values/usage as
    /// little-endian f32 arrays (working rows first), then a JSON trailer
    /// with source bookkeeping. load() reproduces readout bit-identically.
    void save(const std::filesystem::path& path) const;
    static MemoryBank load(const std::filesystem::path& path);

private:
    void absorb_into_prototype(std::size_t lt_slot, std::size_t working_index);

    MemoryConfig config_;
    std::size_t key_dim_ = 0;
    std::size_t value_dim_ = 0;

    std::vector<float> w_keys_;
    std::vector<float> w_values_;
    std::vector<double> w_usage_;
    std::vector<EntrySource> w_source_;

    std::vector<float> lt_keys_;
    std::vector<float> lt_values_;
    std::vector<double> lt_usage_;
    std::vector<double> lt_mass_;  ///< running-mean weight, 1 + usage at promotion plus absorbed mass
    std::vector<EntrySource> lt_source_;
};

}  // namespace iclseg
