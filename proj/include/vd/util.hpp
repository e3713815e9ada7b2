#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace vd {

using Digest = std::array<std::uint8_t, 32>;

std::string to_hex(std::span<const std::uint8_t> bytes);
std::string to_hex(const Digest& d);

Digest sha256(std::string_view data);

/// Incremental SHA-256; feed() may be called any number of times before finish().
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& feed(std::string_view data);
  Digest finish();

 private:
  void* ctx_;
};

std::uint64_t fnv1a64(std::string_view data);

/// Fresh random 128-bit identifier as 32 lowercase hex characters.
std::string random_id128();

/// Deterministic 128-bit identifier derived from a digest and a local key.
std::string derived_id128(std::string_view digest_hex, std::string_view key);

bool is_id128(std::string_view s);

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t splitmix64_mix(std::uint64_t x);

/// xoshiro256** seeded through splitmix64. The stream is part of the
/// reproducibility contract for partition and sampling, so it must never change.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);

  std::uint64_t next();
  /// Unbiased integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform double in [0, 1) from the top 53 bits.
  double unit();

 private:
  std::array<std::uint64_t, 4> s_;
};

/// Seed for per-object randomness: stable under object reordering.
std::uint64_t object_seed(std::uint64_t dataset_seed, std::string_view object_id);

/// Microseconds since the Unix epoch, UTC.
std::int64_t now_micros();

/// Shortest decimal text that parses back to exactly `v`; always carries a
/// '.' or exponent so it is never mistaken for an integer.
std::string format_double(double v);

}  // namespace vd
