#pragma once

// Internal little-endian byte helpers shared by the binary store writers.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace iclseg::binio {

inline void append_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void append_f32le(std::string& out, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    append_u32le(out, u);
}

inline std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float read_f32le(const unsigned char* p) {
    const std::uint32_t u = read_u32le(p);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

/// Writes via a temp file in the same directory, then renames over the
/// target, so partially written outputs are never observed.
void atomic_write_bytes(const std::filesystem::path& path, const std::string& bytes);

}  // namespace iclseg::binio
