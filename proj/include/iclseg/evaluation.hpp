#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iclseg/core.hpp"
#include "iclseg/dataset.hpp"
#include "iclseg/predictor.hpp"

namespace iclseg {

/// Foreground intersection-over-union. Both masks empty counts as a perfect
/// prediction (1.0). Throws on dimension mismatch.
double iou(const BinaryMask& pred, const BinaryMask& gt);

/// Mean of foreground IoU and background IoU (each side with the same
/// empty-mask convention). Sensitivity-check variant of the metric.
double fg_bg_iou(const BinaryMask& pred, const BinaryMask& gt);

struct ClassSplit {
    int class_id = 0;
    std::string class_name;
    DatasetSplit split;
};

struct PerClassResult {
    int class_id = 0;
    std::string class_name;
    std::size_t n_queries = 0;  ///< eval pairs attempted
    std::size_t n_errors = 0;   ///< per-query failures, excluded from the mean
    double mean_iou = 0.0;
};

struct EvalReport {
    std::string dataset;
    std::size_t support_size = 0;
    std::string strategy;
    std::string aggregation;
    std::vector<PerClassResult> per_class;
    double mean_miou = 0.0;  ///< unweighted mean over classes with successful queries
    std::uint64_t seed = 0;
    double wall_time_seconds = 0.0;
};

struct EvalOptions {
    std::string dataset_name = "dataset";
    unsigned threads = 0;  ///< 0 = default parallelism
    EmbeddingSource embeddings;
    bool include_background_iou = false;  ///< score with fg_bg_iou instead of foreground IoU
};

/// Runs the predictor over every class's eval pairs against that class's
/// meta-support set. Per-query failures are recorded per class and excluded
/// from the means, never silently dropped. Deterministic given the seed;
/// parallel evaluation equals sequential exactly.
EvalReport evaluate(const std::vector<ClassSplit>& splits, const PredictorConfig& config,
                    const EvalOptions& options = {});

/// Injection point for oracle predictors in tests: fn maps (query pair,
/// class split) to a predicted mask.
using PredictFn =
    std::function<BinaryMask(const LabeledPair& query, const ClassSplit& class_split)>;
EvalReport evaluate_with(const PredictFn& fn, const std::vector<ClassSplit>& splits,
                         const PredictorConfig& config, const EvalOptions& options = {});

/// One report per (support size, strategy) cell. Embeddings are computed
/// once and shared across cells.
std::vector<EvalReport> sweep(const std::vector<ClassSplit>& splits,
                              const PredictorConfig& base_config,
                              const std::vector<std::size_t>& support_sizes,
                              const std::vector<Strategy>& strategies,
                              const EvalOptions& options = {});

nlohmann::json report_to_json(const EvalReport& report,
                              const nlohmann::json& resolved_config = {});
std::string reports_to_csv(const std::vector<EvalReport>& reports);
nlohmann::json predictor_config_to_json(const PredictorConfig& config);

/// Mean with the accumulation order canonicalized (values sorted first), so
/// reordering inputs cannot perturb the result. Returns 0 for empty input.
double stable_mean(std::vector<double> values);

}  // namespace iclseg
