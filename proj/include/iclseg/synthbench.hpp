#pragma once

#include <cstdint>
#include <vector>

#include "iclseg/dataset.hpp"

namespace iclseg {

enum class ShapeFamily { rectangle, circle };

struct HueBand {
    double lo = 0.0;
    double hi = 0.0;  ///< half-open [lo, hi), both in [0, 1)
};

/// One rendered pair's shape parameters, exposed so tests can re-rasterize
/// the footprint independently.
struct SynthShapeInfo {
    ShapeFamily family = ShapeFamily::rectangle;
    double cx = 0.0;   ///< center, pixels
    double cy = 0.0;
    double rx = 0.0;   ///< half extent (rectangle) or radius (circle), pixels
    double ry = 0.0;
    double hue = 0.0;
};

struct SynthSpec {
    std::size_t n_classes = 4;
    std::size_t pairs_per_class = 16;
    int image_size = 64;
    std::vector<HueBand> hue_bands;     ///< empty = evenly spaced disjoint defaults
    std::vector<ShapeFamily> shapes;    ///< empty = alternate rectangle/circle per class
    double noise_level = 0.05;
    std::uint64_t seed = 0;
};

/// Evenly spaced pairwise-disjoint bands, band i centered at (i + 0.5) / n.
std::vector<HueBand> default_hue_bands(std::size_t n_classes);

/// Renders one colored shape per pair on a gray noise texture; the mask is
/// the shape's exact rasterized footprint (no anti-aliasing). Classes get
/// disjoint hue bands so same-class images are closer in embedding space
/// than cross-class ones. Fully deterministic per (spec, class, pair).
/// Shape parameters are recorded into *info when provided (one inner vector
/// per class).
std::vector<BinaryDataset> generate(const SynthSpec& spec,
                                    std::vector<std::vector<SynthShapeInfo>>* info = nullptr);

}  // namespace iclseg
