#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "h2s/errors.hpp"

namespace h2s {

// Little-endian primitives for the binary file formats. Written
// byte-by-byte so the formats do not depend on host endianness.

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw IoError("write failed");
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) throw IoError("unexpected end of file");
}

inline void write_u16(std::ostream& os, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    write_bytes(os, b, 2);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(os, b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(os, b, 8);
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(os, u);
}

inline void write_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    write_u64(os, u);
}

inline std::uint16_t read_u16(std::istream& is) {
    unsigned char b[2];
    read_bytes(is, b, 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    read_bytes(is, b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    read_bytes(is, b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline float read_f32(std::istream& is) {
    const std::uint32_t u = read_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

inline double read_f64(std::istream& is) {
    const std::uint64_t u = read_u64(is);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

inline void write_f32_array(std::ostream& os, const float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) write_f32(os, p[i]);
}

inline void read_f32_array(std::istream& is, float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] = read_f32(is);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    f.seekg(0, std::ios::end);
    const auto size = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    if (size > 0) read_bytes(f, bytes.data(), bytes.size());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const void* p, std::size_t n) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    write_bytes(f, p, n);
}

// Verifies an 8-byte magic string at the current stream position.
inline void expect_magic(std::istream& is, const char magic[8], const std::string& what) {
    char got[8];
    try {
        read_bytes(is, got, 8);
    } catch (const IoError&) {
        throw BadMagic("missing magic in " + what);
    }
    if (std::memcmp(got, magic, 8) != 0) throw BadMagic("bad magic in " + what);
}

}  // namespace h2s
