#include "iclseg/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "iclseg/parallel.hpp"

namespace iclseg {

double iou(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width()) {
        throw std::invalid_argument("iou: mask dimensions differ");
    }
    std::size_t intersection = 0, unions = 0;
    const auto& a = pred.data();
    const auto& b = gt.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        intersection += (a[i] && b[i]) ? 1 : 0;
        unions += (a[i] || b[i]) ? 1 : 0;
    }
    // Correctly predicting "nothing" is a perfect prediction.
    if (unions == 0) return 1.0;
    return static_cast<double>(intersection) / static_cast<double>(unions);
}

double fg_bg_iou(const BinaryMask& pred, const BinaryMask& gt) {
    const auto invert = [](const BinaryMask& m) {
        std::vector<std::uint8_t> data(m.data().size());
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = m.data()[i] ? 0 : 1;
        return BinaryMask(m.height(), m.width(), std::move(data));
    };
    return 0.5 * (iou(pred, gt) + iou(invert(pred), invert(gt)));
}

double stable_mean(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (const double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

namespace {

void check_splits(const std::vector<ClassSplit>& splits) {
    if (splits.empty()) throw std::invalid_argument("evaluate: no class splits given");
    for (const auto& cs : splits) {
        if (cs.split.meta_support.empty() || cs.split.eval.empty()) {
            throw std::invalid_argument("evaluate: class '" + cs.class_name +
                                        "' needs non-empty meta-support and eval sets");
        }
    }
}

EvalReport run_eval(const PredictFn& fn, const std::vector<ClassSplit>& splits,
                    const PredictorConfig& config, const EvalOptions& options) {
    check_splits(splits);
    const auto start = std::chrono::steady_clock::now();

    EvalReport report;
    report.dataset = options.dataset_name;
    report.support_size = config.support_size;
    report.strategy = to_string(config.strategy);
    report.aggregation = to_string(config.aggregation);
    report.seed = config.seed;

    std::vector<double> class_means;
    for (const auto& cs : splits) {
        const std::size_t n = cs.split.eval.size();
        std::vector<double> ious(n, -1.0);  // -1 marks a failed query
        parallel_for(n, options.threads, [&](std::size_t i) {
            const LabeledPair& query = cs.split.eval[i];
            try {
                const BinaryMask pred = fn(query, cs);
                ious[i] = options.include_background_iou ? fg_bg_iou(pred, query.mask)
                                                         : iou(pred, query.mask);
            } catch (const std::exception&) {
                ious[i] = -1.0;
            }
        });

        PerClassResult pc;
        pc.class_id = cs.class_id;
        pc.class_name = cs.class_name;
        pc.n_queries = n;
        std::vector<double> ok;
        ok.reserve(n);
        for (const double v : ious) {
            if (v < 0.0) {
                ++pc.n_errors;
            } else {
                ok.push_back(v);
            }
        }
        pc.mean_iou = stable_mean(ok);
        if (!ok.empty()) class_means.push_back(pc.mean_iou);
        report.per_class.push_back(std::move(pc));
    }
    report.mean_miou = stable_mean(std::move(class_means));

    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace

EvalReport evaluate_with(const PredictFn& fn, const std::vector<ClassSplit>& splits,
                         const PredictorConfig& config, const EvalOptions& options) {
    return run_eval(fn, splits, config, options);
}

EvalReport evaluate(const std::vector<ClassSplit>& splits, const PredictorConfig& config,
                    const EvalOptions& options) {
    check_splits(splits);

    // One predictor per class, built up front so the parallel query loop
    // only touches frozen state.
    std::vector<std::unique_ptr<Predictor>> predictors;
    predictors.reserve(splits.size());
    for (const auto& cs : splits) {
        predictors.push_back(
            std::make_unique<Predictor>(cs.split.meta_support, config, options.embeddings));
        if (config.strategy == Strategy::full) predictors.back()->prewarm();
    }

    std::size_t index = 0;
    std::unordered_map<const ClassSplit*, std::size_t> slot;
    for (const auto& cs : splits) slot[&cs] = index++;

    const PredictFn fn = [&](const LabeledPair& query, const ClassSplit& cs) {
        return predictors[slot.at(&cs)]->predict(query.image, query.id).mask;
    };
    return run_eval(fn, splits, config, options);
}

std::vector<EvalReport> sweep(const std::vector<ClassSplit>& splits,
                              const PredictorConfig& base_config,
                              const std::vector<std::size_t>& support_sizes,
                              const std::vector<Strategy>& strategies,
                              const EvalOptions& options) {
    if (support_sizes.empty() || strategies.empty()) {
        throw std::invalid_argument("sweep: need at least one support size and one strategy");
    }
    for (const std::size_t s : support_sizes) {
        if (s < 1) throw std::invalid_argument("sweep: support sizes must be >= 1");
    }
    check_splits(splits);

    // Compute embeddings once and share them across every cell.
    EvalOptions shared = options;
    if (!shared.embeddings.store) {
        auto store = std::make_shared<std::unordered_map<std::string, GlobalEmbedding>>();
        for (const auto& cs : splits) {
            for (const auto& pair : cs.split.meta_support) {
                store->emplace(pair.id, embed_global(pair.image, base_config.encoder, pair.id));
            }
            for (const auto& pair : cs.split.eval) {
                store->emplace(pair.id, embed_global(pair.image, base_config.encoder, pair.id));
            }
        }
        shared.embeddings.store = std::move(store);
    }

    std::vector<EvalReport> reports;
    reports.reserve(support_sizes.size() * strategies.size());
    for (const std::size_t size : support_sizes) {
        for (const Strategy strategy : strategies) {
            PredictorConfig cell = base_config;
            cell.support_size = size;
            cell.strategy = strategy;
            reports.push_back(evaluate(splits, cell, shared));
        }
    }
    return reports;
}

nlohmann::json predictor_config_to_json(const PredictorConfig& config) {
    return {
        {"support_size", config.support_size},
        {"strategy", to_string(config.strategy)},
        {"aggregation", to_string(config.aggregation)},
        {"temperature", config.temperature},
        {"top_k", config.top_k},
        {"threshold", config.threshold},
        {"seed", config.seed},
        {"exclude_self", config.exclude_self},
        {"decoder",
         {{"kind", config.decoder.kind == DecoderKind::label_transfer ? "label_transfer" : "external"},
          {"upsample", config.decoder.upsample == UpsampleMode::nearest ? "nearest" : "bilinear"},
          {"logit_scale", config.decoder.logit_scale}}},
        {"encoder",
         {{"stride", config.encoder.stride},
          {"positional_weight", config.encoder.positional_weight}}},
        {"memory",
         {{"capacity", config.memory.capacity},
          {"prototype_budget", config.memory.prototype_budget},
          {"auto_consolidate", config.memory.auto_consolidate}}},
    };
}

nlohmann::json report_to_json(const EvalReport& report, const nlohmann::json& resolved_config) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& pc : report.per_class) {
        per_class.push_back({{"class_id", pc.class_id},
                             {"class_name", pc.class_name},
                             {"n_queries", pc.n_queries},
                             {"n_errors", pc.n_errors},
                             {"mean_iou", pc.mean_iou}});
    }
    nlohmann::json out = {
        {"schema", "icl-seg-report/1"},
        {"dataset", report.dataset},
        {"support_size", report.support_size},
        {"strategy", report.strategy},
        {"aggregation", report.aggregation},
        {"seed", report.seed},
        {"mean_miou", report.mean_miou},
        {"per_class", per_class},
        {"wall_time_seconds", report.wall_time_seconds},
    };
    if (!resolved_config.is_null()) out["config"] = resolved_config;
    return out;
}

std::string reports_to_csv(const std::vector<EvalReport>& reports) {
    std::ostringstream csv;
    csv << "dataset,support_size,strategy,aggregation,n_classes,mean_miou,seed\n";
    csv << std::setprecision(17);
    for (const auto& r : reports) {
        csv << r.dataset << ',' << r.support_size << ',' << r.strategy << ',' << r.aggregation
            << ',' << r.per_class.size() << ',' << r.mean_miou << ',' << r.seed << '\n';
    }
    return csv.str();
}

}  // namespace iclseg
