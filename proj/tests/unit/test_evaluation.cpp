#include <doctest.h>

#include <algorithm>
#include <vector>

#include "helpers.hpp"
#include "iclseg/evaluation.hpp"
#include "iclseg/synthbench.hpp"

using namespace iclseg;

namespace {

BinaryMask mask_of(int h, int w, std::vector<std::uint8_t> data) {
    return BinaryMask(h, w, std::move(data));
}

std::vector<ClassSplit> synth_splits(std::size_t classes, std::size_t pairs, std::uint64_t seed) {
    SynthSpec spec;
    spec.n_classes = classes;
    spec.pairs_per_class = pairs;
    spec.image_size = 32;
    spec.seed = seed;
    const auto datasets = generate(spec);

    std::vector<ClassSplit> splits;
    for (const auto& dataset : datasets) {
        splits.push_back(
            {dataset.class_id, dataset.class_name, split_dataset(dataset.pairs, 0.25, seed)});
    }
    return splits;
}

PredictorConfig toy_config() {
    PredictorConfig config;
    config.strategy = Strategy::full;
    return config;
}

}  // namespace

TEST_CASE("iou: identical, disjoint, and hand-counted overlaps") {
    const BinaryMask a = mask_of(2, 2, {1, 1, 0, 0});
    const BinaryMask b = mask_of(2, 2, {1, 0, 0, 0});
    const BinaryMask c = mask_of(2, 2, {0, 0, 1, 1});
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, c) == 0.0);
    CHECK(iou(a, b) == 0.5);  // intersection 1, union 2
}

TEST_CASE("iou: empty-mask conventions") {
    const BinaryMask empty = mask_of(2, 2, {0, 0, 0, 0});
    const BinaryMask full = mask_of(2, 2, {1, 1, 1, 1});
    CHECK(iou(empty, empty) == 1.0);  // correctly predicting nothing
    CHECK(iou(empty, full) == 0.0);
    CHECK(iou(full, empty) == 0.0);
}

TEST_CASE("iou: symmetric on random masks") {
    Rng rng(90);
    for (int trial = 0; trial < 25; ++trial) {
        const BinaryMask a = testutil::random_mask(rng, 9, 7);
        const BinaryMask b = testutil::random_mask(rng, 9, 7);
        CHECK(iou(a, b) == iou(b, a));
        CHECK(iou(a, a) == 1.0);
    }
}

TEST_CASE("iou rejects mismatched dimensions") {
    CHECK_THROWS_AS(iou(mask_of(2, 2, {1, 1, 1, 1}), mask_of(1, 4, {1, 1, 1, 1})),
                    std::invalid_argument);
}

TEST_CASE("fg_bg_iou averages both sides of the mask") {
    const BinaryMask pred = mask_of(2, 2, {1, 1, 0, 0});
    const BinaryMask gt = mask_of(2, 2, {1, 0, 0, 0});
    // fg: 1/2; bg: {2,3} vs {1,2,3} -> 2/3
    CHECK(fg_bg_iou(pred, gt) == doctest::Approx(0.5 * (0.5 + 2.0 / 3.0)));
    CHECK(fg_bg_iou(gt, gt) == 1.0);

    // the toggle flows through evaluation
    const auto splits = synth_splits(2, 8, 41);
    const PredictFn oracle = [](const LabeledPair& query, const ClassSplit&) {
        return query.mask;
    };
    EvalOptions options;
    options.include_background_iou = true;
    CHECK(evaluate_with(oracle, splits, toy_config(), options).mean_miou == 1.0);
}

TEST_CASE("evaluate_with: an oracle predictor scores a perfect mIoU") {
    const auto splits = synth_splits(3, 8, 5);
    const PredictFn oracle = [](const LabeledPair& query, const ClassSplit&) {
        return query.mask;
    };
    const EvalReport report = evaluate_with(oracle, splits, toy_config());
    CHECK(report.mean_miou == 1.0);
    for (const auto& pc : report.per_class) {
        CHECK(pc.mean_iou == 1.0);
        CHECK(pc.n_errors == 0);
    }
}

TEST_CASE("evaluate_with: an all-background predictor scores zero on non-empty masks") {
    const auto splits = synth_splits(2, 8, 6);
    const PredictFn all_bg = [](const LabeledPair& query, const ClassSplit&) {
        return BinaryMask(query.mask.height(), query.mask.width(),
                          std::vector<std::uint8_t>(query.mask.data().size(), 0));
    };
    const EvalReport report = evaluate_with(all_bg, splits, toy_config());
    CHECK(report.mean_miou == 0.0);
}

TEST_CASE("evaluate_with: per-query failures are recorded, not dropped") {
    const auto splits = synth_splits(2, 8, 7);
    const std::string poison = splits[0].split.eval[0].id;
    const PredictFn flaky = [&](const LabeledPair& query, const ClassSplit&) {
        if (query.id == poison) throw std::runtime_error("synthetic failure");
        return query.mask;
    };
    const EvalReport report = evaluate_with(flaky, splits, toy_config());
    CHECK(report.per_class[0].n_errors == 1);
    CHECK(report.per_class[0].mean_iou == 1.0);  // failures excluded from the mean
    CHECK(report.per_class[1].n_errors == 0);
    CHECK(report.mean_miou == 1.0);
}

TEST_CASE("evaluate matches a straight-line reference implementation exactly") {
    const auto splits = synth_splits(3, 10, 17);
    PredictorConfig config = toy_config();
    config.strategy = Strategy::knn;
    config.support_size = 3;

    EvalOptions options;
    options.threads = 4;
    const EvalReport report = evaluate(splits, config, options);

    // reference: sequential, fresh predictor per query, no caching
    std::vector<double> class_means;
    for (const auto& cs : splits) {
        std::vector<double> ious;
        for (const auto& query : cs.split.eval) {
            const PredictResult r =
                Predictor(cs.split.meta_support, config).predict(query.image, query.id);
            ious.push_back(iou(r.mask, query.mask));
        }
        class_means.push_back(stable_mean(ious));
    }

    REQUIRE(report.per_class.size() == class_means.size());
    for (std::size_t i = 0; i < class_means.size(); ++i) {
        CHECK(report.per_class[i].mean_iou == class_means[i]);
    }
    CHECK(report.mean_miou == stable_mean(std::move(class_means)));
}

TEST_CASE("evaluate: means are invariant under class and query reordering") {
    auto splits = synth_splits(3, 8, 23);
    const PredictFn oracle = [](const LabeledPair& query, const ClassSplit& cs) {
        // deterministic imperfect prediction: drop the first foreground pixel
        std::vector<std::uint8_t> data = query.mask.data();
        for (auto& v : data) {
            if (v) {
                v = 0;
                break;
            }
        }
        (void)cs;
        return BinaryMask(query.mask.height(), query.mask.width(), std::move(data));
    };
    const double before = evaluate_with(oracle, splits, toy_config()).mean_miou;

    std::reverse(splits.begin(), splits.end());
    for (auto& cs : splits) std::reverse(cs.split.eval.begin(), cs.split.eval.end());
    const double after = evaluate_with(oracle, splits, toy_config()).mean_miou;
    CHECK(before == after);
}

TEST_CASE("evaluate validates splits") {
    CHECK_THROWS_AS(evaluate({}, toy_config()), std::invalid_argument);
    auto splits = synth_splits(1, 8, 3);
    splits[0].split.eval.clear();
    CHECK_THROWS_AS(evaluate(splits, toy_config()), std::invalid_argument);
}

TEST_CASE("sweep: a degenerate sweep equals evaluate") {
    const auto splits = synth_splits(2, 8, 29);
    PredictorConfig config = toy_config();
    config.support_size = 1;

    const auto reports = sweep(splits, config, {1}, {Strategy::full});
    REQUIRE(reports.size() == 1);
    const EvalReport direct = evaluate(splits, config);
    CHECK(reports[0].mean_miou == direct.mean_miou);
    CHECK(reports[0].support_size == 1);
    CHECK(reports[0].strategy == "full");
}

TEST_CASE("sweep: one report per cell, deterministic across invocations") {
    const auto splits = synth_splits(2, 10, 31);
    const PredictorConfig config = toy_config();

    const auto a = sweep(splits, config, {1, 2}, {Strategy::knn, Strategy::random});
    REQUIRE(a.size() == 4);
    const auto b = sweep(splits, config, {1, 2}, {Strategy::knn, Strategy::random});
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a[i].mean_miou == b[i].mean_miou);
        CHECK(a[i].seed == b[i].seed);
    }

    const std::string csv = reports_to_csv(a);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 rows
}

TEST_CASE("report JSON carries the schema tag and per-class rows") {
    const auto splits = synth_splits(2, 8, 37);
    const EvalReport report = evaluate(splits, toy_config());
    const nlohmann::json json = report_to_json(report, predictor_config_to_json(toy_config()));
    CHECK(json.at("schema") == "icl-seg-report/1");
    CHECK(json.at("per_class").size() == 2);
    CHECK(json.at("config").at("strategy") == "full");
    CHECK(json.at("mean_miou").get<double>() == report.mean_miou);
}
