#include "iclseg/core.hpp"

#include <cmath>
#include <stdexcept>

namespace iclseg {

Image::Image(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (height_ <= 0 || width_ <= 0) {
        throw std::invalid_argument("Image: dimensions must be positive");
    }
    if (channels_ != 1 && channels_ != 3) {
        throw std::invalid_argument("Image: channels must be 1 or 3");
    }
    const std::size_t expected =
        static_cast<std::size_t>(height_) * width_ * channels_;
    if (data_.size() != expected) {
        throw std::invalid_argument("Image: data length does not match height*width*channels");
    }
    for (const float v : data_) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw std::invalid_argument("Image: pixel values must be finite and within [0, 1]");
        }
    }
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
    if (height_ <= 0 || width_ <= 0) {
        throw std::invalid_argument("BinaryMask: dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(height_) * width_) {
        throw std::invalid_argument("BinaryMask: data length does not match height*width");
    }
    for (auto& v : data_) v = v ? 1 : 0;
}

std::size_t BinaryMask::foreground_count() const {
    std::size_t n = 0;
    for (const auto v : data_) n += v;
    return n;
}

LabeledPair::LabeledPair(std::string id_in, Image image_in, BinaryMask mask_in)
    : id(std::move(id_in)), image(std::move(image_in)), mask(std::move(mask_in)) {
    if (image.height() != mask.height() || image.width() != mask.width()) {
        throw std::invalid_argument("LabeledPair '" + id + "': image and mask dimensions differ");
    }
}

LogitMap::LogitMap(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
    if (height_ <= 0 || width_ <= 0) {
        throw std::invalid_argument("LogitMap: dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(height_) * width_) {
        throw std::invalid_argument("LogitMap: data length does not match height*width");
    }
    for (const float v : data_) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("LogitMap: logits must be finite");
        }
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

BinaryMask mask_from_logits(const LogitMap& logits, double threshold) {
    if (!std::isfinite(threshold)) {
        throw std::invalid_argument("mask_from_logits: threshold must be finite");
    }
    std::vector<std::uint8_t> out(logits.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = sigmoid(logits.data()[i]) > threshold ? 1 : 0;
    }
    return BinaryMask(logits.height(), logits.width(), std::move(out));
}

}  // namespace iclseg
