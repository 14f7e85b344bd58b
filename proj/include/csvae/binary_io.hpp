#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include "csvae/error.hpp"

namespace csvae::binary {

// Little-endian encode/decode independent of host byte order.

template <typename UInt>
void write_uint(std::ostream& out, UInt value) {
    static_assert(std::is_unsigned_v<UInt>);
    std::array<char, sizeof(UInt)> bytes{};
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
    out.write(bytes.data(), bytes.size());
}

inline void write_f32(std::ostream& out, float value) { write_uint(out, std::bit_cast<std::uint32_t>(value)); }
inline void write_f64(std::ostream& out, double value) { write_uint(out, std::bit_cast<std::uint64_t>(value)); }

inline void write_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

template <typename UInt>
UInt read_uint(std::istream& in, const std::string& what) {
    static_assert(std::is_unsigned_v<UInt>);
    std::array<unsigned char, sizeof(UInt)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw DataError(what + ": truncated payload");
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) value |= static_cast<UInt>(bytes[i]) << (8 * i);
    return value;
}

inline float read_f32(std::istream& in, const std::string& what) {
    return std::bit_cast<float>(read_uint<std::uint32_t>(in, what));
}
inline double read_f64(std::istream& in, const std::string& what) {
    return std::bit_cast<double>(read_uint<std::uint64_t>(in, what));
}

inline void expect_magic(std::istream& in, std::string_view magic, const std::string& what) {
    std::string got(magic.size(), '\0');
    in.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic)
        throw DataError(what + ": bad magic bytes (expected \"" + std::string(magic) + "\")");
}

}  // namespace csvae::binary
