#pragma once

// Shared builders for test inputs.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "iclseg/core.hpp"
#include "iclseg/rng.hpp"

namespace testutil {

inline iclseg::Image random_image(iclseg::Rng& rng, int h, int w, int c) {
    std::vector<float> data(static_cast<std::size_t>(h) * w * c);
    for (auto& v : data) v = static_cast<float>(rng.next_double());
    return iclseg::Image(h, w, c, std::move(data));
}

inline iclseg::Image constant_image(int h, int w, int c, float value) {
    return iclseg::Image(h, w, c, std::vector<float>(static_cast<std::size_t>(h) * w * c, value));
}

inline iclseg::BinaryMask random_mask(iclseg::Rng& rng, int h, int w) {
    std::vector<std::uint8_t> data(static_cast<std::size_t>(h) * w);
    for (auto& v : data) v = rng.next_u64() & 1;
    return iclseg::BinaryMask(h, w, std::move(data));
}

/// Unique scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("iclseg_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testutil
