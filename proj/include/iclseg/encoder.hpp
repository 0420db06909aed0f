#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "iclseg/core.hpp"

namespace iclseg {

struct EncoderConfig {
    int stride = 8;                   ///< pixels per patch side
    float positional_weight = 0.25f;  ///< scale of the normalized patch-center features
};

/// Per-patch key features at reduced spatial resolution. grid dims follow
/// ceil(image dim / stride); data is row-major grid_h x grid_w x dim.
struct FeatureGrid {
    int grid_h = 0;
    int grid_w = 0;
    int dim = 0;
    int stride = 0;
    std::vector<float> data;

    std::size_t patch_count() const { return static_cast<std::size_t>(grid_h) * grid_w; }
    std::span<const float> patch(std::size_t index) const {
        return {data.data() + index * dim, static_cast<std::size_t>(dim)};
    }

    bool operator==(const FeatureGrid& other) const = default;
};

/// Per-patch value features derived from an image and its mask. Same grid
/// geometry as the key FeatureGrid of the same image.
struct ValueGrid {
    int grid_h = 0;
    int grid_w = 0;
    int dim = 0;
    int stride = 0;
    std::vector<float> data;

    std::size_t patch_count() const { return static_cast<std::size_t>(grid_h) * grid_w; }
    std::span<const float> patch(std::size_t index) const {
        return {data.data() + index * dim, static_cast<std::size_t>(dim)};
    }

    bool operator==(const ValueGrid& other) const = default;
};

/// Whole-image embedding used for support-set selection. Unit L2 norm.
struct GlobalEmbedding {
    std::string id;
    std::vector<float> vector;

    int dim() const { return static_cast<int>(vector.size()); }
};

/// Toy key encoder: per patch, concatenates per-channel mean, per-channel
/// std, mean horizontal/vertical gradient magnitude, and the weighted
/// normalized patch center (x, y). dim = 2*channels + 4. Pure and
/// deterministic.
FeatureGrid encode_keys(const Image& image, const EncoderConfig& config = {});

/// Toy value encoder: one value per patch, the foreground fraction of the
/// mask inside that patch (a soft transferable label). dim = 1.
ValueGrid encode_values(const Image& image, const BinaryMask& mask, const EncoderConfig& config = {});

/// Toy global embedder: 3 x 8-bin per-channel histograms (gray images are
/// treated as three identical channels) plus mean gradient magnitudes,
/// L2-normalized. dim = 26.
GlobalEmbedding embed_global(const Image& image, const EncoderConfig& config = {}, std::string id = "");

double cosine_similarity(const GlobalEmbedding& a, const GlobalEmbedding& b);

}  // namespace iclseg
