#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace noboxlab {

// FNV-1a, 64-bit. Used for content hashes, config hashes and checkpoint
// digests; the algorithm name is recorded wherever a hash is persisted.
inline constexpr const char* kHashAlgorithm = "fnv1a64";

std::uint64_t fnv1a64(const void* data, std::size_t n,
                      std::uint64_t seed = 0xcbf29ce484222325ull);

std::string fnv1a64_hex(const void* data, std::size_t n);
std::string fnv1a64_hex(const std::string& s);
std::string fnv1a64_hex(const std::vector<std::uint8_t>& bytes);

std::string to_hex(std::uint64_t v);

}
