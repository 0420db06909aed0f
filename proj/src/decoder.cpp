#include "iclseg/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace iclseg {

namespace {

/// Maps an output pixel coordinate to its source patch. When the target
/// dimension is consistent with the grid's stride this is the exact
/// containing patch (the inverse of patch extraction); otherwise falls back
/// to proportional nearest-neighbor mapping.
int nearest_patch(int pixel, int target, int grid, int stride) {
    if (stride > 0 && (target + stride - 1) / stride == grid) return pixel / stride;
    const int g = static_cast<int>((pixel + 0.5) * grid / target);
    return std::clamp(g, 0, grid - 1);
}

}  // namespace

LogitMap decode(const ValueGrid& readout, int target_h, int target_w, const DecoderConfig& config,
                const FeatureGrid* query_keys) {
    (void)query_keys;
    if (config.kind == DecoderKind::external) {
        throw std::runtime_error("decode: no external decoder registered in this build");
    }
    if (!(config.logit_scale > 0.0f) || !std::isfinite(config.logit_scale)) {
        throw std::invalid_argument("decode: logit_scale must be finite and > 0");
    }
    if (target_h <= 0 || target_w <= 0) {
        throw std::invalid_argument("decode: target dimensions must be positive");
    }
    if (readout.dim != 1) {
        throw std::invalid_argument("decode: label transfer requires value dim 1");
    }
    for (const float v : readout.data) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw std::invalid_argument("decode: label transfer requires values in [0, 1]");
        }
    }

    const int gh = readout.grid_h, gw = readout.grid_w;
    const double scale = config.logit_scale;
    std::vector<double> patch_logit(readout.patch_count());
    for (std::size_t p = 0; p < patch_logit.size(); ++p) {
        patch_logit[p] = scale * (2.0 * readout.data[p] - 1.0);
    }

    std::vector<float> out(static_cast<std::size_t>(target_h) * target_w);
    if (config.upsample == UpsampleMode::nearest) {
        for (int y = 0; y < target_h; ++y) {
            const int gy = nearest_patch(y, target_h, gh, readout.stride);
            for (int x = 0; x < target_w; ++x) {
                const int gx = nearest_patch(x, target_w, gw, readout.stride);
                out[static_cast<std::size_t>(y) * target_w + x] =
                    static_cast<float>(patch_logit[static_cast<std::size_t>(gy) * gw + gx]);
            }
        }
    } else {
        for (int y = 0; y < target_h; ++y) {
            const double fy = std::clamp((y + 0.5) * gh / target_h - 0.5, 0.0, static_cast<double>(gh - 1));
            const int y0 = static_cast<int>(std::floor(fy));
            const int y1 = std::min(y0 + 1, gh - 1);
            const double ty = fy - y0;
            for (int x = 0; x < target_w; ++x) {
                const double fx = std::clamp((x + 0.5) * gw / target_w - 0.5, 0.0, static_cast<double>(gw - 1));
                const int x0 = static_cast<int>(std::floor(fx));
                const int x1 = std::min(x0 + 1, gw - 1);
                const double tx = fx - x0;

                const double top = (1.0 - tx) * patch_logit[static_cast<std::size_t>(y0) * gw + x0] +
                                   tx * patch_logit[static_cast<std::size_t>(y0) * gw + x1];
                const double bottom =
                    (1.0 - tx) * patch_logit[static_cast<std::size_t>(y1) * gw + x0] +
                    tx * patch_logit[static_cast<std::size_t>(y1) * gw + x1];
                out[static_cast<std::size_t>(y) * target_w + x] =
                    static_cast<float>((1.0 - ty) * top + ty * bottom);
            }
        }
    }
    return LogitMap(target_h, target_w, std::move(out));
}

}  // namespace iclseg
