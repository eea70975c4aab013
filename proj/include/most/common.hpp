#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace most {

using Bytes = std::uint64_t;
using SimTime = double;  // simulated microseconds

inline constexpr Bytes kKiB = 1024;
inline constexpr Bytes kMiB = 1024 * kKiB;
inline constexpr Bytes kGiB = 1024 * kMiB;

inline constexpr Bytes kSubpageSize = 4 * kKiB;
inline constexpr Bytes kSegmentSize = 2 * kMiB;
inline constexpr std::uint32_t kSubpagesPerSegment = kSegmentSize / kSubpageSize;

inline constexpr SimTime kUsPerSecond = 1e6;

// Index 0 is always the performance device, 1 the capacity device.
enum class Tier : std::uint8_t { Performance = 0, Capacity = 1 };

inline constexpr std::size_t tier_index(Tier t) { return static_cast<std::size_t>(t); }
inline constexpr Tier other(Tier t) {
  return t == Tier::Performance ? Tier::Capacity : Tier::Performance;
}
inline const char* tier_name(Tier t) {
  return t == Tier::Performance ? "performance" : "capacity";
}

enum class OpKind : std::uint8_t { Read, Write };

enum class ErrorKind {
  Address,     // out-of-range offset / lba
  Alignment,   // not a positive subpage multiple
  Contract,    // caller broke a precondition (e.g. time regression)
  Class,       // operation not valid for the segment's placement class
  OutOfSpace,
  Parse,
  Config,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Address: return "address error";
    case ErrorKind::Alignment: return "alignment error";
    case ErrorKind::Contract: return "contract violation";
    case ErrorKind::Class: return "class error";
    case ErrorKind::OutOfSpace: return "out of space";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Config: return "config error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Small deterministic generator. std::mt19937_64 is portable; the standard
// distributions are not, so uniform draws are derived by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // [0, n)
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    // Lemire's multiply-shift; bias is negligible for our n.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  Rng r(base ^ (stream * 0xD1B54A32D192ED03ULL));
  r.next();
  return r.next();
}

}  // namespace most
