#include <doctest.h>

#include <algorithm>
#include <vector>

#include "helpers.hpp"
#include "iclseg/decoder.hpp"

using namespace iclseg;

namespace {

ValueGrid make_grid(int gh, int gw, std::vector<float> vals, int stride) {
    ValueGrid grid;
    grid.grid_h = gh;
    grid.grid_w = gw;
    grid.dim = 1;
    grid.stride = stride;
    grid.data = std::move(vals);
    return grid;
}

}  // namespace

TEST_CASE("decode: confident values saturate the logits") {
    DecoderConfig cfg;
    cfg.logit_scale = 5.0f;
    const LogitMap logits = decode(make_grid(2, 2, {1, 1, 1, 1}, 8), 16, 16, cfg);
    for (const float v : logits.data()) CHECK(v == 5.0f);
    CHECK(mask_from_logits(logits, 0.5).foreground_count() == 256);
}

TEST_CASE("decode: value 0.5 lands exactly on the background side") {
    const LogitMap logits = decode(make_grid(2, 2, {0.5f, 0.5f, 0.5f, 0.5f}, 8), 16, 16, {});
    for (const float v : logits.data()) CHECK(v == 0.0f);
    CHECK(mask_from_logits(logits, 0.5).foreground_count() == 0);
}

TEST_CASE("decode: nearest upsample of a 2x2 grid makes blocks") {
    DecoderConfig cfg;
    cfg.logit_scale = 8.0f;
    const LogitMap logits = decode(make_grid(2, 2, {1, 0, 0, 1}, 2), 4, 4, cfg);
    const BinaryMask mask = mask_from_logits(logits, 0.5);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            const bool expect = (y < 2) == (x < 2);
            CHECK(mask.at(y, x) == expect);
        }
    }
}

TEST_CASE("decode is monotone in the patch values") {
    Rng rng(50);
    for (const UpsampleMode mode : {UpsampleMode::nearest, UpsampleMode::bilinear}) {
        DecoderConfig cfg;
        cfg.upsample = mode;
        std::vector<float> vals(12);
        for (auto& v : vals) v = static_cast<float>(rng.next_double());
        const LogitMap before = decode(make_grid(3, 4, vals, 8), 24, 32, cfg);

        std::vector<float> bumped = vals;
        const std::size_t i = static_cast<std::size_t>(rng.bounded(12));
        bumped[i] = std::min(1.0f, bumped[i] + 0.25f);
        const LogitMap after = decode(make_grid(3, 4, std::move(bumped), 8), 24, 32, cfg);

        for (std::size_t p = 0; p < before.data().size(); ++p) {
            CHECK(after.data()[p] >= before.data()[p]);
        }
    }
}

TEST_CASE("decode: block down-averaging inverts nearest upsampling") {
    Rng rng(51);
    std::vector<float> vals(15);
    for (auto& v : vals) v = static_cast<float>(rng.next_double());
    const int gh = 3, gw = 5, stride = 4;
    const LogitMap logits = decode(make_grid(gh, gw, vals, stride), gh * stride, gw * stride, {});

    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            double sum = 0.0;
            for (int y = gy * stride; y < (gy + 1) * stride; ++y)
                for (int x = gx * stride; x < (gx + 1) * stride; ++x) sum += logits.at(y, x);
            const double mean = sum / (stride * stride);
            const double expect = 8.0 * (2.0 * vals[static_cast<std::size_t>(gy) * gw + gx] - 1.0);
            CHECK(mean == doctest::Approx(expect).epsilon(1e-6));
        }
    }
}

TEST_CASE("decode: bilinear stays within the value hull and handles constants") {
    Rng rng(52);
    DecoderConfig cfg;
    cfg.upsample = UpsampleMode::bilinear;

    std::vector<float> vals(16);
    for (auto& v : vals) v = static_cast<float>(rng.next_double());
    const float lo = *std::min_element(vals.begin(), vals.end());
    const float hi = *std::max_element(vals.begin(), vals.end());
    const LogitMap logits = decode(make_grid(4, 4, vals, 8), 32, 32, cfg);
    for (const float v : logits.data()) {
        CHECK(v >= 8.0f * (2.0f * lo - 1.0f) - 1e-4f);
        CHECK(v <= 8.0f * (2.0f * hi - 1.0f) + 1e-4f);
    }

    const LogitMap flat = decode(make_grid(2, 2, {0.75f, 0.75f, 0.75f, 0.75f}, 8), 10, 10, cfg);
    for (const float v : flat.data()) CHECK(v == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("decode rejects bad inputs") {
    CHECK_THROWS_AS(decode(make_grid(1, 1, {0.5f}, 8), 0, 4, {}), std::invalid_argument);
    CHECK_THROWS_AS(decode(make_grid(1, 1, {1.5f}, 8), 4, 4, {}), std::invalid_argument);

    ValueGrid two_dim;
    two_dim.grid_h = 1;
    two_dim.grid_w = 1;
    two_dim.dim = 2;
    two_dim.stride = 8;
    two_dim.data = {0.5f, 0.5f};
    CHECK_THROWS_AS(decode(two_dim, 4, 4, {}), std::invalid_argument);

    DecoderConfig external;
    external.kind = DecoderKind::external;
    CHECK_THROWS_AS(decode(make_grid(1, 1, {0.5f}, 8), 4, 4, external), std::runtime_error);

    DecoderConfig bad_scale;
    bad_scale.logit_scale = 0.0f;
    CHECK_THROWS_AS(decode(make_grid(1, 1, {0.5f}, 8), 4, 4, bad_scale), std::invalid_argument);
}
