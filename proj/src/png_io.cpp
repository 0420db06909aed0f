#include "iclseg/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace iclseg {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
    throw std::runtime_error("png: " + what + ": " + path.string());
}

// keep_labels: return raw palette indices / gray values instead of pixels.
PngBuffer read_png_internal(const std::filesystem::path& path, bool keep_labels) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) fail(path, "cannot open");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "out of memory");
    }

    // libpng reports errors via longjmp; translate into an exception after
    // tearing the structs down.
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "decode error");
    }

    png_init_io(png, file.get());
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);

    if (keep_labels) {
        if (color_type != PNG_COLOR_TYPE_PALETTE && color_type != PNG_COLOR_TYPE_GRAY) {
            png_destroy_read_struct(&png, &info, nullptr);
            fail(path, "annotation must be 8-bit gray or palette PNG");
        }
        if (bit_depth > 8) {
            png_destroy_read_struct(&png, &info, nullptr);
            fail(path, "annotation must be 8-bit (16-bit carries no class index)");
        }
        if (bit_depth < 8) png_set_packing(png);
    } else {
        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        if (bit_depth == 16) png_set_strip_16(png);
        if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);

    PngBuffer out;
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.channels = static_cast<int>(png_get_channels(png, info));

    if (out.channels != 1 && out.channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "unsupported channel count " + std::to_string(out.channels));
    }

    out.data.resize(static_cast<std::size_t>(out.height) * out.width * out.channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    const std::size_t row_bytes = static_cast<std::size_t>(out.width) * out.channels;
    for (int y = 0; y < out.height; ++y) {
        rows[static_cast<std::size_t>(y)] = out.data.data() + static_cast<std::size_t>(y) * row_bytes;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png_internal(const std::filesystem::path& path, int height, int width, int channels,
                        const std::uint8_t* data) {
    if (height <= 0 || width <= 0) fail(path, "invalid dimensions");
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(std::random_device{}());

    FilePtr file(std::fopen(tmp.string().c_str(), "wb"));
    if (!file) fail(tmp, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(path, "out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "encode error");
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t row_bytes = static_cast<std::size_t>(width) * channels;
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * row_bytes));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    file.reset();

    fs::rename(tmp, path);
}

}  // namespace

PngBuffer read_png_image(const std::filesystem::path& path) { return read_png_internal(path, false); }

PngBuffer read_png_labels(const std::filesystem::path& path) { return read_png_internal(path, true); }

void write_png_gray8(const std::filesystem::path& path, int height, int width,
                     const std::uint8_t* data) {
    write_png_internal(path, height, width, 1, data);
}

void write_png_rgb8(const std::filesystem::path& path, int height, int width,
                    const std::uint8_t* data) {
    write_png_internal(path, height, width, 3, data);
}

Image image_from_png(const PngBuffer& png) {
    std::vector<float> data(png.data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<float>(png.data[i]) / 255.0f;
    }
    return Image(png.height, png.width, png.channels, std::move(data));
}

void write_image_png(const std::filesystem::path& path, const Image& image) {
    std::vector<std::uint8_t> bytes(image.data().size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = static_cast<std::uint8_t>(image.data()[i] * 255.0f + 0.5f);
    }
    write_png_internal(path, image.height(), image.width(), image.channels(), bytes.data());
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> bytes(mask.data().size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data()[i] ? 255 : 0;
    write_png_gray8(path, mask.height(), mask.width(), bytes.data());
}

BinaryMask mask_from_png(const PngBuffer& png) {
    if (png.channels != 1) {
        throw std::runtime_error("mask_from_png: expected a single-channel gray PNG");
    }
    std::vector<std::uint8_t> data(png.data.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = png.data[i] ? 1 : 0;
    return BinaryMask(png.height, png.width, std::move(data));
}

}  // namespace iclseg
