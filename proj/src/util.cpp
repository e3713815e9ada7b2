#include "vd/util.hpp"

#include "vd/error.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

namespace vd {

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateColumn: return "DUPLICATE_COLUMN";
    case ErrorCode::RaggedRow: return "RAGGED_ROW";
    case ErrorCode::ParseError: return "PARSE_ERROR";
    case ErrorCode::SyntaxError: return "SYNTAX_ERROR";
    case ErrorCode::MissingField: return "MISSING_FIELD";
    case ErrorCode::UnknownField: return "UNKNOWN_FIELD";
    case ErrorCode::BadVersion: return "BAD_VERSION";
    case ErrorCode::UnknownDataset: return "UNKNOWN_DATASET";
    case ErrorCode::UnknownTransform: return "UNKNOWN_TRANSFORM";
    case ErrorCode::ParamError: return "PARAM_ERROR";
    case ErrorCode::ArityMismatch: return "ARITY_MISMATCH";
    case ErrorCode::UnreadableSource: return "UNREADABLE_SOURCE";
    case ErrorCode::EmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::ValidationStale: return "VALIDATION_STALE";
    case ErrorCode::CycleDetected: return "CYCLE_DETECTED";
    case ErrorCode::HasDependents: return "HAS_DEPENDENTS";
    case ErrorCode::NotFound: return "NOT_FOUND";
    case ErrorCode::StatsUnavailable: return "STATS_UNAVAILABLE";
    case ErrorCode::SourceChanged: return "SOURCE_CHANGED";
    case ErrorCode::NoCommonColumns: return "NO_COMMON_COLUMNS";
    case ErrorCode::MissingKey: return "MISSING_KEY";
    case ErrorCode::UnpairedObject: return "UNPAIRED_OBJECT";
    case ErrorCode::UnknownColumn: return "UNKNOWN_COLUMN";
    case ErrorCode::UnknownLabelKey: return "UNKNOWN_LABEL_KEY";
    case ErrorCode::NonNumericColumn: return "NON_NUMERIC_COLUMN";
    case ErrorCode::PluginCrashed: return "PLUGIN_CRASHED";
    case ErrorCode::ProtocolViolation: return "PROTOCOL_VIOLATION";
    case ErrorCode::Timeout: return "TIMEOUT";
    case ErrorCode::DuplicateTransform: return "DUPLICATE_TRANSFORM";
    case ErrorCode::TransformFailed: return "TRANSFORM_FAILED";
    case ErrorCode::BrokenLineage: return "BROKEN_LINEAGE";
    case ErrorCode::CacheCorrupt: return "CACHE_CORRUPT";
    case ErrorCode::Unauthorized: return "UNAUTHORIZED";
    case ErrorCode::Forbidden: return "FORBIDDEN";
    case ErrorCode::BadRequest: return "BAD_REQUEST";
    case ErrorCode::Internal: return "INTERNAL";
  }
  return "INTERNAL";
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::string to_hex(const Digest& d) { return to_hex(std::span<const std::uint8_t>(d)); }

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 init failed");
  }
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

Sha256& Sha256::feed(std::string_view data) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size());
  return *this;
}

Digest Sha256::finish() {
  Digest out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.data(), &len);
  return out;
}

Digest sha256(std::string_view data) { return Sha256().feed(data).finish(); }

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string random_id128() {
  static thread_local std::random_device rd;
  std::array<std::uint8_t, 16> bytes{};
  for (std::size_t i = 0; i < bytes.size(); i += 4) {
    auto v = rd();
    for (std::size_t k = 0; k < 4; ++k) bytes[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
  }
  return to_hex(bytes);
}

std::string derived_id128(std::string_view digest_hex, std::string_view key) {
  Sha256 h;
  h.feed("object-id\n").feed(digest_hex).feed("\n").feed(key);
  auto d = h.finish();
  return to_hex(std::span<const std::uint8_t>(d.data(), 16));
}

bool is_id128(std::string_view s) {
  if (s.size() != 32) return false;
  for (char c : s) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t splitmix64_mix(std::uint64_t x) { return splitmix64(x); }

Xoshiro256::Xoshiro256(std::uint64_t seed) {
  std::uint64_t st = seed;
  for (auto& w : s_) w = splitmix64(st);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t Xoshiro256::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

std::uint64_t Xoshiro256::below(std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t r = next();
    if (r >= threshold) return r % bound;
  }
}

double Xoshiro256::unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t object_seed(std::uint64_t dataset_seed, std::string_view object_id) {
  return splitmix64_mix(dataset_seed ^ fnv1a64(object_id));
}

std::int64_t now_micros() {
  using namespace std::chrono;
  return duration_cast<microseconds>(system_clock::now().time_since_epoch()).count();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

}  // namespace vd
