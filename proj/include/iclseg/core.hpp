#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace iclseg {

/// Dense row-major image. Pixels are floats in [0, 1]; channels is 1 (gray)
/// or 3 (RGB). Immutable after construction.
class Image {
public:
    Image(int height, int width, int channels, std::vector<float> data);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    const std::vector<float>& data() const { return data_; }

    float at(int y, int x, int c) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }

    bool operator==(const Image& other) const = default;

private:
    int height_;
    int width_;
    int channels_;
    std::vector<float> data_;
};

/// Per-pixel boolean mask, row-major, 1 = foreground. Values are normalized
/// to {0, 1} at construction.
class BinaryMask {
public:
    BinaryMask(int height, int width, std::vector<std::uint8_t> data);

    int height() const { return height_; }
    int width() const { return width_; }
    const std::vector<std::uint8_t>& data() const { return data_; }

    bool at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x] != 0; }

    std::size_t foreground_count() const;
    bool empty_mask() const { return foreground_count() == 0; }

    bool operator==(const BinaryMask& other) const = default;

private:
    int height_;
    int width_;
    std::vector<std::uint8_t> data_;
};

/// An image with its binary ground-truth mask; the atom of support and
/// evaluation sets. Image and mask must share dimensions.
struct LabeledPair {
    std::string id;
    Image image;
    BinaryMask mask;

    LabeledPair(std::string id, Image image, BinaryMask mask);
};

/// Per-pixel real-valued foreground logits. All values finite.
class LogitMap {
public:
    LogitMap(int height, int width, std::vector<float> data);

    int height() const { return height_; }
    int width() const { return width_; }
    const std::vector<float>& data() const { return data_; }

    float at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    bool operator==(const LogitMap& other) const = default;

private:
    int height_;
    int width_;
    std::vector<float> data_;
};

double sigmoid(double x);

/// A pixel is foreground iff sigmoid(logit) > threshold (strictly), so exact
/// ties fall to background. Output dimensions equal the input's.
BinaryMask mask_from_logits(const LogitMap& logits, double threshold);

}  // namespace iclseg
