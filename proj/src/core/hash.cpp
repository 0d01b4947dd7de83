#include "noboxlab/core/hash.hpp"

#include <array>

namespace noboxlab {

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::string fnv1a64_hex(const void* data, std::size_t n) {
    return to_hex(fnv1a64(data, n));
}

std::string fnv1a64_hex(const std::string& s) {
    return fnv1a64_hex(s.data(), s.size());
}

std::string fnv1a64_hex(const std::vector<std::uint8_t>& bytes) {
    return fnv1a64_hex(bytes.data(), bytes.size());
}

}
