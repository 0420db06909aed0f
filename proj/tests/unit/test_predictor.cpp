#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <vector>

#include "helpers.hpp"
#include "iclseg/evaluation.hpp"
#include "iclseg/predictor.hpp"

using namespace iclseg;

namespace {

PredictorConfig toy_config() {
    PredictorConfig config;
    config.strategy = Strategy::full;
    config.aggregation = Aggregation::memory;
    config.memory.capacity = 4096;
    config.memory.prototype_budget = 128;
    return config;
}

/// Patch-quantized ground truth: a pixel is foreground iff its patch's
/// foreground fraction exceeds one half.
BinaryMask patch_quantized(const BinaryMask& mask, int stride) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(mask.height()) * mask.width());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            const int y0 = (y / stride) * stride, x0 = (x / stride) * stride;
            int fg = 0, total = 0;
            for (int yy = y0; yy < std::min(mask.height(), y0 + stride); ++yy)
                for (int xx = x0; xx < std::min(mask.width(), x0 + stride); ++xx) {
                    fg += mask.at(yy, xx) ? 1 : 0;
                    ++total;
                }
            out[static_cast<std::size_t>(y) * mask.width() + x] = 2 * fg > total ? 1 : 0;
        }
    }
    return BinaryMask(mask.height(), mask.width(), std::move(out));
}

std::vector<LabeledPair> random_support(Rng& rng, int n, int size = 32) {
    std::vector<LabeledPair> pairs;
    for (int i = 0; i < n; ++i) {
        pairs.emplace_back("s" + std::to_string(i), testutil::random_image(rng, size, size, 3),
                           testutil::random_mask(rng, size, size));
    }
    return pairs;
}

}  // namespace

TEST_CASE("predict: self-retrieval transfers exact patch labels") {
    Rng rng(80);
    const Image image = testutil::random_image(rng, 32, 32, 3);  // unique patches
    const BinaryMask mask = testutil::random_mask(rng, 32, 32);

    PredictorConfig config = toy_config();
    config.top_k = 1;

    const std::vector<LabeledPair> support = {{"self", image, mask}};
    const Predictor predictor(support, config);
    const PredictResult result = predictor.predict(image, "query");

    const BinaryMask expect = patch_quantized(mask, config.encoder.stride);
    CHECK(result.mask == expect);
    CHECK(iou(result.mask, expect) == 1.0);
}

TEST_CASE("predict: logit averaging over identical supports equals a single support") {
    Rng rng(81);
    const Image image = testutil::random_image(rng, 24, 24, 3);
    const BinaryMask mask = testutil::random_mask(rng, 24, 24);
    const Image query = testutil::random_image(rng, 24, 24, 3);

    PredictorConfig config = toy_config();
    config.aggregation = Aggregation::logit_avg;

    const std::vector<LabeledPair> one = {{"a", image, mask}};
    const std::vector<LabeledPair> three = {{"a", image, mask}, {"b", image, mask}, {"c", image, mask}};
    const LogitMap single = Predictor(one, config).predict(query, "q").logits;
    const LogitMap triple = Predictor(three, config).predict(query, "q").logits;
    CHECK(single == triple);
}

TEST_CASE("predict: logit averaging is invariant under support permutations") {
    Rng rng(82);
    auto support = random_support(rng, 6, 24);
    const Image query = testutil::random_image(rng, 24, 24, 3);

    PredictorConfig config = toy_config();
    config.aggregation = Aggregation::logit_avg;

    const LogitMap a = Predictor(support, config).predict(query, "q").logits;
    std::reverse(support.begin(), support.end());
    const LogitMap b = Predictor(support, config).predict(query, "q").logits;
    CHECK(a == b);

    // and it is exactly the arithmetic mean of the per-pair maps
    std::vector<double> acc(a.data().size(), 0.0);
    std::sort(support.begin(), support.end(),
              [](const LabeledPair& x, const LabeledPair& y) { return x.id < y.id; });
    for (const auto& pair : support) {
        const LogitMap lm =
            Predictor({pair}, toy_config()).predict(query, "q").logits;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += lm.data()[i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i) {
        CHECK(static_cast<float>(acc[i] / 6.0) == a.data()[i]);
    }
}

TEST_CASE("predict: memory mode with one support equals logit averaging") {
    Rng rng(83);
    const auto support = random_support(rng, 1, 24);
    const Image query = testutil::random_image(rng, 24, 24, 3);

    PredictorConfig mem = toy_config();
    mem.support_size = 1;
    PredictorConfig avg = mem;
    avg.aggregation = Aggregation::logit_avg;

    const PredictResult a = Predictor(support, mem).predict(query, "q");
    const PredictResult b = Predictor(support, avg).predict(query, "q");
    CHECK(a.logits == b.logits);
    CHECK(a.mask == b.mask);
}

TEST_CASE("predict_batch equals sequential predictions byte for byte") {
    Rng rng(84);
    const auto support = random_support(rng, 8, 24);

    std::vector<Image> queries;
    std::vector<std::string> ids;
    for (int i = 0; i < 50; ++i) {
        queries.push_back(testutil::random_image(rng, 24, 24, 3));
        ids.push_back("q" + std::to_string(i));
    }

    for (const Strategy strategy : {Strategy::full, Strategy::knn, Strategy::random}) {
        PredictorConfig config = toy_config();
        config.strategy = strategy;
        config.support_size = 3;

        const Predictor predictor(support, config);
        const auto batch4 = predictor.predict_batch(queries, ids, 4);
        const auto batch1 = predictor.predict_batch(queries, ids, 1);

        const Predictor fresh(support, config);
        for (std::size_t i = 0; i < queries.size(); ++i) {
            const PredictResult one = fresh.predict(queries[i], ids[i]);
            CHECK(batch4[i].mask == one.mask);
            CHECK(batch4[i].logits == one.logits);
            CHECK(batch4[i].selection.chosen == one.selection.chosen);
            CHECK(batch1[i].mask == one.mask);
        }
    }
}

TEST_CASE("predict: disk-spilled banks reproduce in-memory results") {
    testutil::TempDir dir("bank_spill");
    Rng rng(85);
    const auto support = random_support(rng, 4, 24);
    const Image query = testutil::random_image(rng, 24, 24, 3);
    const PredictorConfig config = toy_config();

    const PredictResult without_cache = Predictor(support, config).predict(query, "q");

    setenv("ICL_SEG_CACHE_DIR", dir.path.string().c_str(), 1);
    const PredictResult writing = Predictor(support, config).predict(query, "q");
    const PredictResult reading = Predictor(support, config).predict(query, "q");  // loads spill
    unsetenv("ICL_SEG_CACHE_DIR");

    CHECK(writing.logits == without_cache.logits);
    CHECK(reading.logits == without_cache.logits);
    CHECK(!std::filesystem::is_empty(dir.path));
}

TEST_CASE("predictor validates its inputs") {
    Rng rng(86);
    CHECK_THROWS_AS(Predictor({}, toy_config()), std::invalid_argument);

    auto support = random_support(rng, 2, 16);
    support[1].id = support[0].id;
    CHECK_THROWS_AS(Predictor(support, toy_config()), std::invalid_argument);

    PredictorConfig bad = toy_config();
    bad.threshold = 1.5;
    CHECK_THROWS_AS(Predictor(random_support(rng, 2, 16), bad), std::invalid_argument);

    PredictorConfig zero_support = toy_config();
    zero_support.support_size = 0;
    CHECK_THROWS_AS(Predictor(random_support(rng, 2, 16), zero_support), std::invalid_argument);
}

TEST_CASE("predictor with a store-backed embedding source") {
    Rng rng(87);
    const auto support = random_support(rng, 5, 24);
    const Image query = testutil::random_image(rng, 24, 24, 3);

    PredictorConfig config = toy_config();
    config.strategy = Strategy::knn;
    config.support_size = 2;

    auto store = std::make_shared<std::unordered_map<std::string, GlobalEmbedding>>();
    for (const auto& pair : support) {
        store->emplace(pair.id, embed_global(pair.image, config.encoder, pair.id));
    }
    store->emplace("q", embed_global(query, config.encoder, "q"));

    EmbeddingSource source;
    source.store = store;
    const Predictor with_store(support, config, source);
    const Predictor with_toy(support, config);
    CHECK(with_store.predict(query, "q").selection.chosen ==
          with_toy.predict(query, "q").selection.chosen);

    // unknown query id cannot be embedded from the store
    CHECK_THROWS_WITH_AS(with_store.predict(query, "unknown_query"),
                         doctest::Contains("embedding store has no entry"), std::runtime_error);
}
