#pragma once

// Node identifiers, their derivation from integer seeds, and the XOR metric.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eclipse {

inline constexpr int kIdBits = 256;
inline constexpr std::size_t kIdBytes = kIdBits / 8;

using IdBytes = std::array<std::uint8_t, kIdBytes>;

/// 256-bit big-endian unsigned value. Byte order makes lexicographic
/// comparison equal to numeric comparison.
struct Bits256 {
  IdBytes bytes{};

  friend constexpr auto operator<=>(const Bits256&, const Bits256&) = default;

  constexpr bool is_zero() const {
    return std::all_of(bytes.begin(), bytes.end(), [](auto b) { return b == 0; });
  }

  /// Position of the highest set bit plus one; 0 for the zero value.
  constexpr int bit_length() const {
    for (std::size_t i = 0; i < kIdBytes; ++i) {
      if (bytes[i] != 0) {
        return static_cast<int>((kIdBytes - i) * 8) - std::countl_zero(bytes[i]);
      }
    }
    return 0;
  }

  /// Bit `i` counted from the most significant end (bit 0 is the MSB).
  constexpr bool bit(int i) const {
    return (bytes[static_cast<std::size_t>(i / 8)] >> (7 - i % 8)) & 1U;
  }

  constexpr void set_bit(int i, bool value) {
    auto& b = bytes[static_cast<std::size_t>(i / 8)];
    const auto mask = static_cast<std::uint8_t>(1U << (7 - i % 8));
    b = value ? static_cast<std::uint8_t>(b | mask) : static_cast<std::uint8_t>(b & ~mask);
  }

  /// Top `n` bits (n <= 32) as an integer.
  constexpr std::uint32_t prefix(int n) const {
    std::uint32_t v = (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
                      (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
    return n == 0 ? 0 : v >> (32 - n);
  }
};

struct NodeId : Bits256 {
  friend constexpr auto operator<=>(const NodeId&, const NodeId&) = default;
};

/// XOR distance between two identifiers, as an unsigned 256-bit integer.
struct Distance : Bits256 {
  friend constexpr auto operator<=>(const Distance&, const Distance&) = default;
};

class PrivateSeed {
 public:
  explicit PrivateSeed(std::uint64_t value) : value_(value) {
    if (value == 0) throw std::invalid_argument("private seed must be nonzero");
  }
  std::uint64_t value() const { return value_; }
  friend auto operator<=>(const PrivateSeed&, const PrivateSeed&) = default;

 private:
  std::uint64_t value_;
};

/// Canonical stand-in public key: version tag 0x01 followed by the seed as
/// 8 big-endian bytes.
inline std::array<std::uint8_t, 9> encode_public_key(PrivateSeed seed) {
  std::array<std::uint8_t, 9> out{};
  out[0] = 0x01;
  for (int i = 0; i < 8; ++i) {
    out[static_cast<std::size_t>(8 - i)] = static_cast<std::uint8_t>(seed.value() >> (8 * i));
  }
  return out;
}

inline NodeId derive_node_id(PrivateSeed seed) {
  const auto key = encode_public_key(seed);
  NodeId id;
  unsigned int len = 0;
  if (EVP_Digest(key.data(), key.size(), id.bytes.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != kIdBytes) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  return id;
}

inline Distance xor_distance(const NodeId& a, const NodeId& b) {
  Distance d;
  for (std::size_t i = 0; i < kIdBytes; ++i) d.bytes[i] = a.bytes[i] ^ b.bytes[i];
  return d;
}

/// Number of leading bits on which `a` and `b` agree; 256 iff equal.
inline int common_prefix_len(const NodeId& a, const NodeId& b) {
  for (std::size_t i = 0; i < kIdBytes; ++i) {
    const auto x = static_cast<std::uint8_t>(a.bytes[i] ^ b.bytes[i]);
    if (x != 0) return static_cast<int>(i * 8) + std::countl_zero(x);
  }
  return kIdBits;
}

inline std::string to_hex(const Bits256& v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(2 * kIdBytes);
  for (auto b : v.bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

inline NodeId node_id_from_hex(std::string_view hex) {
  if (hex.size() != 2 * kIdBytes) throw std::invalid_argument("node id hex must be 64 digits");
  auto nibble = [](char c) -> std::uint8_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw std::invalid_argument("invalid hex digit in node id");
  };
  NodeId id;
  for (std::size_t i = 0; i < kIdBytes; ++i) {
    id.bytes[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
  }
  return id;
}

/// Uniformly random identifier; test and simulation helper, not a derived id.
template <class Rng>
NodeId random_node_id(Rng& rng) {
  NodeId id;
  for (std::size_t i = 0; i < kIdBytes; i += 8) {
    const std::uint64_t w = rng();
    for (std::size_t j = 0; j < 8; ++j) id.bytes[i + j] = static_cast<std::uint8_t>(w >> (8 * j));
  }
  return id;
}

/// Random identifier sharing exactly `cpl` leading bits with `base` (cpl < 256).
template <class Rng>
NodeId random_id_at_prefix(const NodeId& base, int cpl, Rng& rng) {
  NodeId id = random_node_id(rng);
  for (int i = 0; i < cpl; ++i) id.set_bit(i, base.bit(i));
  id.set_bit(cpl, !base.bit(cpl));
  return id;
}

struct NodeIdHash {
  std::size_t operator()(const NodeId& id) const noexcept {
    // Fold all four words; ids near a common target share long prefixes.
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (std::size_t w = 0; w < 4; ++w) {
      std::uint64_t v = 0;
      for (std::size_t i = 0; i < 8; ++i) v = (v << 8) | id.bytes[w * 8 + i];
      h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return static_cast<std::size_t>(h);
  }
};

}  // namespace eclipse
