#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "memgan/error.hpp"

// Little-endian binary primitives. Bytes are assembled explicitly, so the
// encoding is host-endianness independent and doubles round-trip bit-exactly.

namespace memgan::detail {

inline void write_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out.write(b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out.write(b, 8);
}

inline void write_f64(std::ostream& out, double v) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint8_t read_u8(std::istream& in) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) fail(ErrorCode::truncated_file, "unexpected end of stream");
    return static_cast<std::uint8_t>(c);
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) fail(ErrorCode::truncated_file, "unexpected end of stream");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) fail(ErrorCode::truncated_file, "unexpected end of stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline double read_f64(std::istream& in) {
    return std::bit_cast<double>(read_u64(in));
}

inline void write_magic(std::ostream& out, const char (&magic)[9]) {
    out.write(magic, 8);
}

inline void expect_magic(std::istream& in, const char (&magic)[9], const std::string& what) {
    char got[8];
    in.read(got, 8);
    if (!in) fail(ErrorCode::truncated_file, what + ": truncated header");
    for (int i = 0; i < 8; ++i) {
        if (got[i] != magic[i]) fail(ErrorCode::bad_magic, what + ": bad magic");
    }
}

}  // namespace memgan::detail
