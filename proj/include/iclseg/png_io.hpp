#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "iclseg/core.hpp"

namespace iclseg {

/// Decoded 8-bit PNG payload, row-major h*w*channels.
struct PngBuffer {
    int height = 0;
    int width = 0;
    int channels = 0;  ///< 1 (gray or palette index) or 3 (RGB)
    std::vector<std::uint8_t> data;
};

/// Reads a PNG as pixels: palettes expand to RGB, alpha is stripped, 16-bit
/// samples reduce to 8. Result has 1 or 3 channels.
PngBuffer read_png_image(const std::filesystem::path& path);

/// Reads an annotation PNG as raw integer labels (palette index or gray
/// value). Requires an 8-bit gray or palette file; RGB and 16-bit inputs
/// are rejected since they carry no class indices.
PngBuffer read_png_labels(const std::filesystem::path& path);

void write_png_gray8(const std::filesystem::path& path, int height, int width,
                     const std::uint8_t* data);
void write_png_rgb8(const std::filesystem::path& path, int height, int width,
                    const std::uint8_t* data);

/// 8-bit pixels scale to [0,1] by /255.
Image image_from_png(const PngBuffer& png);

/// Rounds [0,1] floats back to 8-bit and writes gray or RGB per channel count.
void write_image_png(const std::filesystem::path& path, const Image& image);

/// Foreground = 255, background = 0.
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

/// Any nonzero gray value counts as foreground.
BinaryMask mask_from_png(const PngBuffer& png);

}  // namespace iclseg
