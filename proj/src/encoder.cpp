#include "iclseg/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iclseg {

namespace {

void check_config(const EncoderConfig& config) {
    if (config.stride < 1) throw std::invalid_argument("encoder: stride must be >= 1");
    if (!(config.positional_weight >= 0.0f)) {
        throw std::invalid_argument("encoder: positional_weight must be >= 0");
    }
}

}  // namespace

FeatureGrid encode_keys(const Image& image, const EncoderConfig& config) {
    check_config(config);
    const int stride = config.stride;
    const int h = image.height(), w = image.width(), C = image.channels();
    const int gh = (h + stride - 1) / stride;
    const int gw = (w + stride - 1) / stride;
    const int dim = 2 * C + 4;

    FeatureGrid grid{gh, gw, dim, stride, std::vector<float>(static_cast<std::size_t>(gh) * gw * dim)};

    for (int gy = 0; gy < gh; ++gy) {
        const int y0 = gy * stride, y1 = std::min(h, y0 + stride);
        for (int gx = 0; gx < gw; ++gx) {
            const int x0 = gx * stride, x1 = std::min(w, x0 + stride);
            const double npix = static_cast<double>(y1 - y0) * (x1 - x0);

            float* out = grid.data.data() + (static_cast<std::size_t>(gy) * gw + gx) * dim;

            for (int c = 0; c < C; ++c) {
                double sum = 0.0, sumsq = 0.0;
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) {
                        const double v = image.at(y, x, c);
                        sum += v;
                        sumsq += v * v;
                    }
                }
                const double mean = sum / npix;
                const double var = std::max(0.0, sumsq / npix - mean * mean);
                out[c] = static_cast<float>(mean);
                out[C + c] = static_cast<float>(std::sqrt(var));
            }

            // Mean absolute neighbor difference inside the patch, averaged
            // over channels. Zero when the patch is a single column/row.
            double grad_h = 0.0, grad_v = 0.0;
            std::size_t nh = 0, nv = 0;
            for (int c = 0; c < C; ++c) {
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x + 1 < x1; ++x) {
                        grad_h += std::abs(image.at(y, x + 1, c) - image.at(y, x, c));
                        ++nh;
                    }
                }
                for (int y = y0; y + 1 < y1; ++y) {
                    for (int x = x0; x < x1; ++x) {
                        grad_v += std::abs(image.at(y + 1, x, c) - image.at(y, x, c));
                        ++nv;
                    }
                }
            }
            out[2 * C] = static_cast<float>(nh ? grad_h / static_cast<double>(nh) : 0.0);
            out[2 * C + 1] = static_cast<float>(nv ? grad_v / static_cast<double>(nv) : 0.0);

            const double cx = 0.5 * (x0 + x1) / w;
            const double cy = 0.5 * (y0 + y1) / h;
            out[2 * C + 2] = static_cast<float>(config.positional_weight * cx);
            out[2 * C + 3] = static_cast<float>(config.positional_weight * cy);
        }
    }
    return grid;
}

ValueGrid encode_values(const Image& image, const BinaryMask& mask, const EncoderConfig& config) {
    check_config(config);
    if (image.height() != mask.height() || image.width() != mask.width()) {
        throw std::invalid_argument("encode_values: image and mask dimensions differ");
    }
    const int stride = config.stride;
    const int h = image.height(), w = image.width();
    const int gh = (h + stride - 1) / stride;
    const int gw = (w + stride - 1) / stride;

    ValueGrid grid{gh, gw, 1, stride, std::vector<float>(static_cast<std::size_t>(gh) * gw)};

    for (int gy = 0; gy < gh; ++gy) {
        const int y0 = gy * stride, y1 = std::min(h, y0 + stride);
        for (int gx = 0; gx < gw; ++gx) {
            const int x0 = gx * stride, x1 = std::min(w, x0 + stride);
            std::size_t fg = 0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) fg += mask.at(y, x) ? 1 : 0;
            }
            const double npix = static_cast<double>(y1 - y0) * (x1 - x0);
            grid.data[static_cast<std::size_t>(gy) * gw + gx] =
                static_cast<float>(static_cast<double>(fg) / npix);
        }
    }
    return grid;
}

GlobalEmbedding embed_global(const Image& image, const EncoderConfig& config, std::string id) {
    check_config(config);
    constexpr int kBins = 8;
    constexpr int kDim = 3 * kBins + 2;
    const int h = image.height(), w = image.width(), C = image.channels();

    std::vector<double> acc(kDim, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c3 = 0; c3 < 3; ++c3) {
                const int c = C == 3 ? c3 : 0;
                const float v = image.at(y, x, c);
                const int bin = std::min(kBins - 1, static_cast<int>(v * kBins));
                acc[static_cast<std::size_t>(c3) * kBins + bin] += 1.0;
            }
        }
    }
    const double npix = static_cast<double>(image.pixel_count());
    for (int i = 0; i < 3 * kBins; ++i) acc[i] /= npix;

    double grad_h = 0.0, grad_v = 0.0;
    std::size_t nh = 0, nv = 0;
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x + 1 < w; ++x) {
                grad_h += std::abs(image.at(y, x + 1, c) - image.at(y, x, c));
                ++nh;
            }
        }
        for (int y = 0; y + 1 < h; ++y) {
            for (int x = 0; x < w; ++x) {
                grad_v += std::abs(image.at(y + 1, x, c) - image.at(y, x, c));
                ++nv;
            }
        }
    }
    acc[3 * kBins] = nh ? grad_h / static_cast<double>(nh) : 0.0;
    acc[3 * kBins + 1] = nv ? grad_v / static_cast<double>(nv) : 0.0;

    double norm_sq = 0.0;
    for (const double v : acc) norm_sq += v * v;
    const double norm = std::sqrt(norm_sq);

    GlobalEmbedding emb;
    emb.id = std::move(id);
    emb.vector.resize(kDim);
    for (int i = 0; i < kDim; ++i) emb.vector[i] = static_cast<float>(acc[i] / norm);
    return emb;
}

double cosine_similarity(const GlobalEmbedding& a, const GlobalEmbedding& b) {
    if (a.dim() != b.dim()) {
        throw std::invalid_argument("cosine_similarity: embedding dimensions differ");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.vector.size(); ++i) {
        dot += static_cast<double>(a.vector[i]) * b.vector[i];
    }
    return dot;
}

}  // namespace iclseg
