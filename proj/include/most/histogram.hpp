#pragma once

// Log-bucketed latency histogram: 1 us to 10 s, 10 buckets per decade.
// Percentiles report the upper edge of the bucket holding the rank.

#include <array>
#include <cmath>
#include <cstdint>

namespace most {

class LatencyHistogram {
 public:
  static constexpr int kPerDecade = 10;
  static constexpr int kDecades = 7;  // 1e0 .. 1e7 us
  static constexpr int kBuckets = kPerDecade * kDecades;

  // Bucket k covers [10^(k/10), 10^((k+1)/10)); values below 1 us land in
  // bucket 0, values above 10 s in the last one.
  static int bucket_of(double us) {
    if (!(us > 1)) return 0;
    int k = int(std::floor(std::log10(us) * kPerDecade));
    if (k >= kBuckets) return kBuckets - 1;
    // log10 rounding can misplace exact edges by one.
    if (k + 1 < kBuckets && us >= upper_edge(k)) ++k;
    if (k > 0 && us < upper_edge(k - 1)) --k;
    return k;
  }
  static double upper_edge(int k) { return std::pow(10.0, double(k + 1) / kPerDecade); }
  static double lower_edge(int k) { return k == 0 ? 0.0 : std::pow(10.0, double(k) / kPerDecade); }

  void add(double us) {
    ++counts_[bucket_of(us)];
    ++total_;
  }
  void merge(const LatencyHistogram& o) {
    for (int k = 0; k < kBuckets; ++k) counts_[k] += o.counts_[k];
    total_ += o.total_;
  }
  void reset() {
    counts_.fill(0);
    total_ = 0;
  }
  std::uint64_t count() const { return total_; }
  std::uint64_t bucket_count(int k) const { return counts_[k]; }

  // q in (0, 1]; 0 when empty.
  double percentile(double q) const {
    if (total_ == 0) return 0;
    auto rank = std::uint64_t(std::ceil(q * double(total_)));
    if (rank == 0) rank = 1;
    std::uint64_t acc = 0;
    for (int k = 0; k < kBuckets; ++k) {
      acc += counts_[k];
      if (acc >= rank) return upper_edge(k);
    }
    return upper_edge(kBuckets - 1);
  }

 private:
  std::array<std::uint64_t, kBuckets> counts_{};
  std::uint64_t total_ = 0;
};

}  // namespace most
