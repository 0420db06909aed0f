#include "iclseg/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "iclseg/rng.hpp"

namespace iclseg {

std::vector<HueBand> default_hue_bands(std::size_t n_classes) {
    std::vector<HueBand> bands;
    bands.reserve(n_classes);
    for (std::size_t i = 0; i < n_classes; ++i) {
        const double center = (static_cast<double>(i) + 0.5) / static_cast<double>(n_classes);
        const double half_width = 0.25 / static_cast<double>(n_classes);
        bands.push_back({center - half_width, center + half_width});
    }
    return bands;
}

namespace {

void hsv_to_rgb(double h, double s, double v, float rgb[3]) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
        case 0: r = c, g = x; break;
        case 1: r = x, g = c; break;
        case 2: g = c, b = x; break;
        case 3: g = x, b = c; break;
        case 4: r = x, b = c; break;
        default: r = c, b = x; break;
    }
    const double m = v - c;
    rgb[0] = static_cast<float>(r + m);
    rgb[1] = static_cast<float>(g + m);
    rgb[2] = static_cast<float>(b + m);
}

bool inside_shape(const SynthShapeInfo& shape, int x, int y) {
    if (shape.family == ShapeFamily::rectangle) {
        return std::abs(x - shape.cx) <= shape.rx && std::abs(y - shape.cy) <= shape.ry;
    }
    const double dx = x - shape.cx, dy = y - shape.cy;
    return dx * dx + dy * dy <= shape.rx * shape.rx;
}

void check_spec(const SynthSpec& spec, const std::vector<HueBand>& bands) {
    if (spec.n_classes < 1 || spec.pairs_per_class < 1) {
        throw std::invalid_argument("synthbench: need at least one class and one pair");
    }
    if (spec.image_size < 16) {
        throw std::invalid_argument("synthbench: image_size must be >= 16");
    }
    if (!(spec.noise_level >= 0.0 && spec.noise_level <= 0.3)) {
        throw std::invalid_argument("synthbench: noise_level must be in [0, 0.3]");
    }
    if (bands.size() != spec.n_classes) {
        throw std::invalid_argument("synthbench: one hue band per class required");
    }
    for (std::size_t i = 0; i < bands.size(); ++i) {
        if (!(bands[i].lo >= 0.0 && bands[i].hi <= 1.0 && bands[i].lo < bands[i].hi)) {
            throw std::invalid_argument("synthbench: malformed hue band");
        }
        for (std::size_t j = i + 1; j < bands.size(); ++j) {
            if (bands[i].lo < bands[j].hi && bands[j].lo < bands[i].hi) {
                throw std::invalid_argument("synthbench: hue bands overlap");
            }
        }
    }
}

}  // namespace

std::vector<BinaryDataset> generate(const SynthSpec& spec,
                                    std::vector<std::vector<SynthShapeInfo>>* info) {
    const std::vector<HueBand> bands =
        spec.hue_bands.empty() ? default_hue_bands(spec.n_classes) : spec.hue_bands;
    check_spec(spec, bands);

    const int size = spec.image_size;
    std::vector<BinaryDataset> datasets;
    datasets.reserve(spec.n_classes);
    if (info) info->assign(spec.n_classes, {});

    for (std::size_t ci = 0; ci < spec.n_classes; ++ci) {
        BinaryDataset dataset;
        dataset.class_id = static_cast<int>(ci) + 1;
        dataset.class_name = "synth_" + std::to_string(dataset.class_id);

        const ShapeFamily family = spec.shapes.empty()
                                       ? (ci % 2 == 0 ? ShapeFamily::rectangle : ShapeFamily::circle)
                                       : spec.shapes[ci % spec.shapes.size()];

        for (std::size_t pi = 0; pi < spec.pairs_per_class; ++pi) {
            Rng rng(mix_seed(mix_seed(spec.seed, ci + 1), pi + 1));

            // Background: low-contrast gray texture. Draw order is fixed so
            // the whole pair is a pure function of (spec, class, pair).
            std::vector<float> pixels(static_cast<std::size_t>(size) * size * 3);
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const float g = static_cast<float>(0.35 + 0.25 * rng.next_double());
                    float* px = pixels.data() + (static_cast<std::size_t>(y) * size + x) * 3;
                    px[0] = px[1] = px[2] = g;
                }
            }

            SynthShapeInfo shape;
            shape.family = family;
            shape.cx = rng.uniform(0.3, 0.7) * size;
            shape.cy = rng.uniform(0.3, 0.7) * size;
            shape.rx = rng.uniform(0.12, 0.24) * size;
            shape.ry = family == ShapeFamily::rectangle ? rng.uniform(0.12, 0.24) * size : shape.rx;
            shape.hue = rng.uniform(bands[ci].lo, bands[ci].hi);

            float color[3];
            hsv_to_rgb(shape.hue, 0.9, 0.9, color);

            std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    if (!inside_shape(shape, x, y)) continue;
                    mask[static_cast<std::size_t>(y) * size + x] = 1;
                    float* px = pixels.data() + (static_cast<std::size_t>(y) * size + x) * 3;
                    px[0] = color[0];
                    px[1] = color[1];
                    px[2] = color[2];
                }
            }

            if (spec.noise_level > 0.0) {
                for (auto& v : pixels) {
                    const double n = rng.uniform(-spec.noise_level, spec.noise_level);
                    v = static_cast<float>(std::clamp(static_cast<double>(v) + n, 0.0, 1.0));
                }
            }

            const std::string id =
                "c" + std::to_string(dataset.class_id) + "_p" + std::to_string(pi);
            dataset.pairs.emplace_back(id, Image(size, size, 3, std::move(pixels)),
                                       BinaryMask(size, size, std::move(mask)));
            if (info) (*info)[ci].push_back(shape);
        }
        datasets.push_back(std::move(dataset));
    }
    return datasets;
}

}  // namespace iclseg
