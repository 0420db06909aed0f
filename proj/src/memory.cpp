#include "iclseg/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "binio.hpp"
#include "iclseg/embedding_store.hpp"

namespace iclseg {

namespace {

void check_memory_config(const MemoryConfig& config) {
    if (config.capacity < 2) throw std::invalid_argument("memory: capacity must be >= 2");
    if (config.prototype_budget < 1) {
        throw std::invalid_argument("memory: prototype_budget must be >= 1");
    }
    // Budget above capacity/2 could leave condensation with nothing to
    // evict, which would violate the strictly-decreasing entry count.
    if (config.prototype_budget * 2 > config.capacity) {
        throw std::invalid_argument("memory: prototype_budget must be <= capacity/2");
    }
}

double squared_distance(std::span<const float> a, const float* b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc;
}

/// Sums in ascending value order. The result depends only on the multiset
/// of terms, which makes affinity and readout exactly invariant under
/// permutations of the memory entries.
double sorted_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double acc = 0.0;
    for (const double t : terms) acc += t;
    return acc;
}

}  // namespace

void UsageAccumulator::add(std::size_t entry, double weight) {
    if (entry >= acc_.size()) acc_.resize(entry + 1, 0.0);
    acc_[entry] += weight;
}

void UsageAccumulator::merge(const UsageAccumulator& other) {
    if (other.acc_.size() > acc_.size()) acc_.resize(other.acc_.size(), 0.0);
    for (std::size_t i = 0; i < other.acc_.size(); ++i) acc_[i] += other.acc_[i];
}

MemoryBank::MemoryBank(MemoryConfig config) : config_(config) { check_memory_config(config_); }

std::size_t MemoryBank::working_count() const {
    return key_dim_ ? w_keys_.size() / key_dim_ : 0;
}

std::size_t MemoryBank::longterm_count() const {
    return key_dim_ ? lt_keys_.size() / key_dim_ : 0;
}

std::span<const float> MemoryBank::entry_key(std::size_t i) const {
    const std::size_t w = working_count();
    if (i < w) return {w_keys_.data() + i * key_dim_, key_dim_};
    return {lt_keys_.data() + (i - w) * key_dim_, key_dim_};
}

std::span<const float> MemoryBank::entry_value(std::size_t i) const {
    const std::size_t w = working_count();
    if (i < w) return {w_values_.data() + i * value_dim_, value_dim_};
    return {lt_values_.data() + (i - w) * value_dim_, value_dim_};
}

double MemoryBank::entry_usage(std::size_t i) const {
    const std::size_t w = working_count();
    return i < w ? w_usage_[i] : lt_usage_[i - w];
}

const EntrySource& MemoryBank::entry_source(std::size_t i) const {
    const std::size_t w = working_count();
    return i < w ? w_source_[i] : lt_source_[i - w];
}

void MemoryBank::add_support(const FeatureGrid& keys, const ValueGrid& values,
                             const std::string& pair_id) {
    if (keys.grid_h != values.grid_h || keys.grid_w != values.grid_w) {
        throw std::invalid_argument("add_support: key and value grids differ in geometry");
    }
    if (key_dim_ == 0) {
        key_dim_ = static_cast<std::size_t>(keys.dim);
        value_dim_ = static_cast<std::size_t>(values.dim);
        if (key_dim_ == 0 || value_dim_ == 0) {
            throw std::invalid_argument("add_support: zero-dimensional grids");
        }
    } else if (static_cast<std::size_t>(keys.dim) != key_dim_ ||
               static_cast<std::size_t>(values.dim) != value_dim_) {
        throw std::invalid_argument("add_support: grid dimensions inconsistent with stored entries");
    }

    const std::size_t n = keys.patch_count();
    w_keys_.insert(w_keys_.end(), keys.data.begin(), keys.data.end());
    w_values_.insert(w_values_.end(), values.data.begin(), values.data.end());
    w_usage_.insert(w_usage_.end(), n, 0.0);
    for (std::size_t p = 0; p < n; ++p) w_source_.push_back({pair_id, p});

    if (config_.auto_consolidate && working_count() > config_.capacity) consolidate();
}

AffinityRow MemoryBank::affinity(std::span<const float> query_key, double temperature, int top_k,
                                 UsageAccumulator* usage) const {
    const std::size_t n = total_entries();
    if (n == 0) throw std::invalid_argument("affinity: memory bank is empty");
    if (!(temperature > 0.0)) throw std::invalid_argument("affinity: temperature must be > 0");
    if (query_key.size() != key_dim_) {
        throw std::invalid_argument("affinity: query key dimension mismatch");
    }

    const double scale = 1.0 / (temperature * std::sqrt(static_cast<double>(key_dim_)));
    std::vector<double> score(n);
    for (std::size_t i = 0; i < n; ++i) {
        score[i] = -squared_distance(query_key, entry_key(i).data()) * scale;
    }

    std::vector<std::size_t> kept(n);
    std::iota(kept.begin(), kept.end(), 0);
    if (top_k > 0 && static_cast<std::size_t>(top_k) < n) {
        const auto better = [&score](std::size_t a, std::size_t b) {
            return score[a] > score[b] || (score[a] == score[b] && a < b);
        };
        std::partial_sort(kept.begin(), kept.begin() + top_k, kept.end(), better);
        kept.resize(static_cast<std::size_t>(top_k));
    }

    double max_score = -std::numeric_limits<double>::infinity();
    for (const std::size_t i : kept) max_score = std::max(max_score, score[i]);

    AffinityRow row{std::vector<double>(n, 0.0)};
    std::vector<double> terms;
    terms.reserve(kept.size());
    for (const std::size_t i : kept) {
        const double e = std::exp(score[i] - max_score);
        row.weights[i] = e;
        terms.push_back(e);
    }
    const double sum = sorted_sum(terms);
    for (const std::size_t i : kept) {
        row.weights[i] /= sum;
        if (usage) usage->add(i, row.weights[i]);
    }
    return row;
}

ValueGrid MemoryBank::readout(const FeatureGrid& query_keys, double temperature, int top_k,
                              UsageAccumulator* usage) const {
    if (static_cast<std::size_t>(query_keys.dim) != key_dim_) {
        throw std::invalid_argument("readout: query key dimension mismatch");
    }
    const std::size_t patches = query_keys.patch_count();
    const std::size_t dv = value_dim_;
    ValueGrid out{query_keys.grid_h, query_keys.grid_w, static_cast<int>(dv), query_keys.stride,
                  std::vector<float>(patches * dv)};

    std::vector<std::vector<double>> terms(dv);
    for (std::size_t p = 0; p < patches; ++p) {
        const AffinityRow row = affinity(query_keys.patch(p), temperature, top_k, usage);
        for (auto& t : terms) t.clear();
        for (std::size_t i = 0; i < row.weights.size(); ++i) {
            const double w = row.weights[i];
            if (w == 0.0) continue;
            const std::span<const float> value = entry_value(i);
            for (std::size_t c = 0; c < dv; ++c) terms[c].push_back(w * value[c]);
        }
        for (std::size_t c = 0; c < dv; ++c) {
            out.data[p * dv + c] = static_cast<float>(sorted_sum(terms[c]));
        }
    }
    return out;
}

void MemoryBank::absorb_into_prototype(std::size_t lt_slot, std::size_t working_index) {
    const double mass = 1.0 + w_usage_[working_index];
    const double total = lt_mass_[lt_slot] + mass;
    for (std::size_t c = 0; c < value_dim_; ++c) {
        const double merged = (lt_mass_[lt_slot] * lt_values_[lt_slot * value_dim_ + c] +
                               mass * w_values_[working_index * value_dim_ + c]) /
                              total;
        lt_values_[lt_slot * value_dim_ + c] = static_cast<float>(merged);
    }
    lt_usage_[lt_slot] += w_usage_[working_index];
    lt_mass_[lt_slot] = total;
}

ConsolidationReport MemoryBank::consolidate() {
    ConsolidationReport report;
    const std::size_t W = working_count();
    if (W <= config_.capacity) {
        std::cerr << "iclseg: consolidate skipped, working memory (" << W
                  << ") within capacity (" << config_.capacity << ")\n";
        return report;
    }
    if (config_.prototype_budget >= W) {
        std::cerr << "iclseg: consolidate skipped, prototype budget (" << config_.prototype_budget
                  << ") covers the working store (" << W << ")\n";
        return report;
    }

    // Rank by usage, ties broken by insertion order.
    std::vector<std::size_t> order(W);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [this](std::size_t a, std::size_t b) { return w_usage_[a] > w_usage_[b]; });

    const std::size_t room = config_.prototype_budget - longterm_count();
    const std::size_t n_promote = std::min(room, W);
    std::vector<std::size_t> promote(order.begin(), order.begin() + n_promote);
    std::sort(promote.begin(), promote.end());  // long-term keeps insertion order

    std::vector<bool> is_prototype(W, false);
    for (const std::size_t i : promote) is_prototype[i] = true;

    for (const std::size_t i : promote) {
        lt_keys_.insert(lt_keys_.end(), w_keys_.begin() + i * key_dim_,
                        w_keys_.begin() + (i + 1) * key_dim_);
        lt_values_.insert(lt_values_.end(), w_values_.begin() + i * value_dim_,
                          w_values_.begin() + (i + 1) * value_dim_);
        lt_usage_.push_back(w_usage_[i]);
        lt_mass_.push_back(1.0 + w_usage_[i]);
        lt_source_.push_back(w_source_[i]);
    }
    report.prototype_entries = promote;

    std::vector<std::size_t> remainder;
    remainder.reserve(W - n_promote);
    for (std::size_t i = 0; i < W; ++i) {
        if (!is_prototype[i]) remainder.push_back(i);
    }
    const std::size_t retain = std::min(remainder.size(), config_.capacity / 2);
    const std::size_t evict = remainder.size() - retain;

    const std::size_t L = longterm_count();
    for (std::size_t r = 0; r < evict; ++r) {
        const std::size_t e = remainder[r];
        const std::span<const float> key{w_keys_.data() + e * key_dim_, key_dim_};
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < L; ++p) {
            const double d = squared_distance(key, lt_keys_.data() + p * key_dim_);
            if (d < best_dist) {
                best_dist = d;
                best = p;
            }
        }
        absorb_into_prototype(best, e);
        report.absorbed.emplace_back(e, best);
    }

    std::vector<float> new_keys, new_values;
    std::vector<double> new_usage;
    std::vector<EntrySource> new_source;
    new_keys.reserve(retain * key_dim_);
    new_values.reserve(retain * value_dim_);
    for (std::size_t r = evict; r < remainder.size(); ++r) {
        const std::size_t i = remainder[r];
        new_keys.insert(new_keys.end(), w_keys_.begin() + i * key_dim_,
                        w_keys_.begin() + (i + 1) * key_dim_);
        new_values.insert(new_values.end(), w_values_.begin() + i * value_dim_,
                          w_values_.begin() + (i + 1) * value_dim_);
        new_usage.push_back(w_usage_[i]);
        new_source.push_back(w_source_[i]);
        report.retained_entries.push_back(i);
    }
    w_keys_ = std::move(new_keys);
    w_values_ = std::move(new_values);
    w_usage_ = std::move(new_usage);
    w_source_ = std::move(new_source);

    report.performed = true;
    return report;
}

void MemoryBank::apply_usage(const UsageAccumulator& acc) {
    const auto& weights = acc.weights();
    if (weights.size() > total_entries()) {
        throw std::invalid_argument("apply_usage: accumulator is larger than the bank");
    }
    const std::size_t w = working_count();
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (i < w) {
            w_usage_[i] += weights[i];
        } else {
            lt_usage_[i - w] += weights[i];
        }
    }
}

namespace {
constexpr char kBankMagic[4] = {'M', 'B', 'K', '1'};
constexpr std::size_t kBankHeaderSize = 20;
}  // namespace

void MemoryBank::save(const std::filesystem::path& path) const {
    const std::size_t W = working_count();
    const std::size_t L = longterm_count();

    std::string bytes;
    bytes.append(kBankMagic, 4);
    binio::append_u32le(bytes, static_cast<std::uint32_t>(key_dim_));
    binio::append_u32le(bytes, static_cast<std::uint32_t>(value_dim_));
    binio::append_u32le(bytes, static_cast<std::uint32_t>(W));
    binio::append_u32le(bytes, static_cast<std::uint32_t>(L));

    for (const float v : w_keys_) binio::append_f32le(bytes, v);
    for (const float v : lt_keys_) binio::append_f32le(bytes, v);
    for (const float v : w_values_) binio::append_f32le(bytes, v);
    for (const float v : lt_values_) binio::append_f32le(bytes, v);
    for (const double v : w_usage_) binio::append_f32le(bytes, static_cast<float>(v));
    for (const double v : lt_usage_) binio::append_f32le(bytes, static_cast<float>(v));

    nlohmann::json sources = nlohmann::json::array();
    for (std::size_t i = 0; i < total_entries(); ++i) {
        const EntrySource& s = entry_source(i);
        sources.push_back({s.pair_id, s.patch_index});
    }
    const nlohmann::json trailer = {
        {"sources", sources},
        {"capacity", config_.capacity},
        {"prototype_budget", config_.prototype_budget},
        {"auto_consolidate", config_.auto_consolidate},
        {"longterm_mass", lt_mass_},
    };
    bytes += trailer.dump();

    binio::atomic_write_bytes(path, bytes);
}

MemoryBank MemoryBank::load(const std::filesystem::path& path) {
    const std::vector<unsigned char> bytes = binio::read_file_bytes(path);
    if (bytes.size() < kBankHeaderSize) {
        throw FormatError("bank snapshot: truncated header", bytes.size());
    }
    if (std::memcmp(bytes.data(), kBankMagic, 4) != 0) {
        throw FormatError("bank snapshot: bad magic, expected MBK1", 0);
    }
    const std::size_t dk = binio::read_u32le(bytes.data() + 4);
    const std::size_t dv = binio::read_u32le(bytes.data() + 8);
    const std::size_t W = binio::read_u32le(bytes.data() + 12);
    const std::size_t L = binio::read_u32le(bytes.data() + 16);
    const std::size_t total = W + L;
    const std::size_t float_bytes = (total * dk + total * dv + total) * 4;
    if (bytes.size() < kBankHeaderSize + float_bytes) {
        throw FormatError("bank snapshot: truncated arrays", bytes.size());
    }

    nlohmann::json trailer;
    try {
        trailer = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(kBankHeaderSize + float_bytes),
                                        bytes.end());
    } catch (const nlohmann::json::exception& err) {
        throw FormatError(std::string("bank snapshot: bad JSON trailer: ") + err.what(),
                          kBankHeaderSize + float_bytes);
    }

    MemoryConfig config;
    config.capacity = trailer.at("capacity").get<std::size_t>();
    config.prototype_budget = trailer.at("prototype_budget").get<std::size_t>();
    config.auto_consolidate = trailer.at("auto_consolidate").get<bool>();
    MemoryBank bank(config);
    bank.key_dim_ = dk;
    bank.value_dim_ = dv;

    std::size_t offset = kBankHeaderSize;
    const auto read_floats = [&](std::vector<float>& dst, std::size_t n) {
        dst.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            dst[i] = binio::read_f32le(bytes.data() + offset);
            if (!std::isfinite(dst[i])) {
                throw FormatError("bank snapshot: non-finite value", offset);
            }
            offset += 4;
        }
    };
    read_floats(bank.w_keys_, W * dk);
    read_floats(bank.lt_keys_, L * dk);
    read_floats(bank.w_values_, W * dv);
    read_floats(bank.lt_values_, L * dv);

    std::vector<float> usage;
    read_floats(usage, total);
    bank.w_usage_.assign(usage.begin(), usage.begin() + static_cast<std::ptrdiff_t>(W));
    bank.lt_usage_.assign(usage.begin() + static_cast<std::ptrdiff_t>(W), usage.end());

    const auto& sources = trailer.at("sources");
    if (sources.size() != total) {
        throw FormatError("bank snapshot: source count does not match entry count",
                          kBankHeaderSize + float_bytes);
    }
    for (std::size_t i = 0; i < total; ++i) {
        EntrySource s{sources[i][0].get<std::string>(), sources[i][1].get<std::size_t>()};
        if (i < W) {
            bank.w_source_.push_back(std::move(s));
        } else {
            bank.lt_source_.push_back(std::move(s));
        }
    }
    bank.lt_mass_ = trailer.at("longterm_mass").get<std::vector<double>>();
    if (bank.lt_mass_.size() != L) {
        throw FormatError("bank snapshot: long-term mass count mismatch",
                          kBankHeaderSize + float_bytes);
    }
    return bank;
}

}  // namespace iclseg
