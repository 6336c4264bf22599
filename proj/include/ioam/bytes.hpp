#pragma once

#include <cstdint>
#include <cstring>
#include <span>

// Big-endian (network order) field access helpers.

namespace ioam {

inline uint16_t read_u16(std::span<const uint8_t> b, std::size_t off) {
    return static_cast<uint16_t>((b[off] << 8) | b[off + 1]);
}

inline uint32_t read_u32(std::span<const uint8_t> b, std::size_t off) {
    return (static_cast<uint32_t>(b[off]) << 24) |
           (static_cast<uint32_t>(b[off + 1]) << 16) |
           (static_cast<uint32_t>(b[off + 2]) << 8) |
           static_cast<uint32_t>(b[off + 3]);
}

inline uint64_t read_u64(std::span<const uint8_t> b, std::size_t off) {
    return (static_cast<uint64_t>(read_u32(b, off)) << 32) |
           read_u32(b, off + 4);
}

inline void write_u16(std::span<uint8_t> b, std::size_t off, uint16_t v) {
    b[off] = static_cast<uint8_t>(v >> 8);
    b[off + 1] = static_cast<uint8_t>(v);
}

inline void write_u32(std::span<uint8_t> b, std::size_t off, uint32_t v) {
    b[off] = static_cast<uint8_t>(v >> 24);
    b[off + 1] = static_cast<uint8_t>(v >> 16);
    b[off + 2] = static_cast<uint8_t>(v >> 8);
    b[off + 3] = static_cast<uint8_t>(v);
}

inline void write_u64(std::span<uint8_t> b, std::size_t off, uint64_t v) {
    write_u32(b, off, static_cast<uint32_t>(v >> 32));
    write_u32(b, off + 4, static_cast<uint32_t>(v));
}

}  // namespace ioam
