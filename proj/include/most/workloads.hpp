#pragma once

// Seeded workload generators, phase schedules and the text trace format.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "most/common.hpp"

namespace most {

enum class Distribution : std::uint8_t { Uniform, Hotset, Zipfian, ReadLatest, Sequential };

inline const char* distribution_name(Distribution d) {
  switch (d) {
    case Distribution::Uniform: return "uniform";
    case Distribution::Hotset: return "hotset";
    case Distribution::Zipfian: return "zipfian";
    case Distribution::ReadLatest: return "read_latest";
    case Distribution::Sequential: return "sequential";
  }
  return "?";
}

inline Distribution parse_distribution(const std::string& s) {
  for (auto d : {Distribution::Uniform, Distribution::Hotset, Distribution::Zipfian,
                 Distribution::ReadLatest, Distribution::Sequential})
    if (s == distribution_name(d)) return d;
  throw Error(ErrorKind::Config, "unknown distribution '" + s + "'");
}

struct Phase {
  double start_s = 0;
  std::size_t workers = 0;
};

struct WorkloadSpec {
  Distribution distribution = Distribution::Hotset;
  double hot_fraction = 0.2;
  double hot_probability = 0.9;
  double zipf_theta = 0.8;
  double hot_new_fraction = 0.2;
  double recent_window_fraction = 0.05;  // read-latest window, share of working-set items
  double read_ratio = 1.0;
  Bytes access_size = 16 * kKiB;
  Bytes working_set = 0;
  std::vector<Phase> phases;
  std::uint64_t seed = 1;
  double think_time_us = 0;

  std::uint64_t items() const { return working_set / access_size; }

  void validate(Bytes logical_capacity) const {
    auto prob = [](double p, const char* k) {
      if (!(p >= 0 && p <= 1)) throw Error(ErrorKind::Config, std::string(k) + " must be in [0,1]");
    };
    prob(hot_fraction, "workload.hot_fraction");
    prob(hot_probability, "workload.hot_probability");
    prob(hot_new_fraction, "workload.hot_new_fraction");
    prob(recent_window_fraction, "workload.recent_window_fraction");
    prob(read_ratio, "workload.read_ratio");
    if (access_size == 0 || access_size % kSubpageSize || kSegmentSize % access_size)
      throw Error(ErrorKind::Config, "workload.access_size must be a subpage multiple dividing the segment size");
    if (working_set < access_size) throw Error(ErrorKind::Config, "workload.working_set too small");
    if (working_set > logical_capacity) throw Error(ErrorKind::Config, "workload.working_set exceeds the logical space");
    if (!(zipf_theta > 0)) throw Error(ErrorKind::Config, "workload.zipf_theta must be > 0");
    if (think_time_us < 0) throw Error(ErrorKind::Config, "workload.think_time_us must be >= 0");
    for (std::size_t i = 1; i < phases.size(); ++i)
      if (phases[i].start_s < phases[i - 1].start_s)
        throw Error(ErrorKind::Config, "workload.phases must be time-sorted");
  }
};

struct Op {
  OpKind kind = OpKind::Read;
  Bytes lba = 0;
  Bytes length = 0;
  bool operator==(const Op&) const = default;
};

// Rank-frequency table for Zipfian draws; rank r has weight 1/(r+1)^theta.
class ZipfTable {
 public:
  ZipfTable(std::uint64_t n, double theta) : cdf_(n) {
    double acc = 0;
    for (std::uint64_t r = 0; r < n; ++r) {
      acc += 1.0 / std::pow(double(r + 1), theta);
      cdf_[r] = acc;
    }
    for (auto& c : cdf_) c /= acc;
  }
  std::uint64_t draw(Rng& rng) const {
    double u = rng.uniform();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::uint64_t>(it - cdf_.begin(), cdf_.size() - 1);
  }
  std::uint64_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

// One independent op stream. Item i covers [i*access_size, (i+1)*access_size).
class Generator {
 public:
  Generator(const WorkloadSpec& spec, std::uint64_t stream,
            std::shared_ptr<const ZipfTable> zipf = nullptr)
      : spec_(spec), rng_(mix_seed(spec.seed, stream)), items_(spec.items()), zipf_(std::move(zipf)) {
    if (spec_.distribution == Distribution::Zipfian && !zipf_)
      zipf_ = std::make_shared<ZipfTable>(items_, spec_.zipf_theta);
    hot_items_ = std::max<std::uint64_t>(1, std::uint64_t(double(items_) * spec_.hot_fraction));
    hot_items_ = std::min(hot_items_, items_);
    window_ = std::max<std::uint64_t>(1, std::uint64_t(double(items_) * spec_.recent_window_fraction));
    if (spec_.distribution == Distribution::Sequential) cursor_ = rng_.below(items_);
  }

  Op next() {
    Op op;
    op.kind = rng_.bernoulli(spec_.read_ratio) ? OpKind::Read : OpKind::Write;
    op.length = spec_.access_size;
    op.lba = item(op.kind) * spec_.access_size;
    return op;
  }

  Rng& rng() { return rng_; }

 private:
  std::uint64_t item(OpKind kind) {
    switch (spec_.distribution) {
      case Distribution::Uniform: return rng_.below(items_);
      case Distribution::Hotset: {
        if (hot_items_ == items_ || rng_.bernoulli(spec_.hot_probability)) return rng_.below(hot_items_);
        return hot_items_ + rng_.below(items_ - hot_items_);
      }
      case Distribution::Zipfian: return zipf_->draw(rng_);
      case Distribution::Sequential: {
        auto i = cursor_;
        cursor_ = (cursor_ + 1) % items_;
        return i;
      }
      case Distribution::ReadLatest: {
        if (kind == OpKind::Write) {
          auto i = rng_.below(items_);
          recent_.push_back(i);
          if (recent_.size() > window_) recent_.pop_front();
          return i;
        }
        if (!recent_.empty() && rng_.bernoulli(spec_.hot_probability)) {
          auto newest = std::max<std::uint64_t>(1, std::uint64_t(double(recent_.size()) * spec_.hot_new_fraction));
          return recent_[recent_.size() - 1 - rng_.below(newest)];
        }
        return rng_.below(items_);
      }
    }
    return 0;
  }

  WorkloadSpec spec_;
  Rng rng_;
  std::uint64_t items_;
  std::shared_ptr<const ZipfTable> zipf_;
  std::uint64_t hot_items_ = 0;
  std::uint64_t window_ = 0;
  std::uint64_t cursor_ = 0;
  std::deque<std::uint64_t> recent_;
};

// Step function; zero before the first phase.
inline std::size_t phase_workers(const std::vector<Phase>& phases, double now_s) {
  std::size_t w = 0;
  for (const auto& p : phases) {
    if (p.start_s > now_s) break;
    w = p.workers;
  }
  return w;
}

// Integral of the worker count over [t0, t1), in worker-seconds.
inline double worker_seconds(const std::vector<Phase>& phases, double t0, double t1) {
  double total = 0;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    double a = std::max(t0, phases[i].start_s);
    double b = i + 1 < phases.size() ? std::min(t1, phases[i + 1].start_s) : t1;
    if (b > a) total += (b - a) * double(phases[i].workers);
  }
  return total;
}

// Burst schedule: `base` workers with `burst` workers for `burst_s` at the
// start of every `period_s`, beginning at `first_s`.
inline std::vector<Phase> burst_schedule(std::size_t base, std::size_t burst, double first_s,
                                         double period_s, double burst_s, double until_s) {
  std::vector<Phase> out{{0, base}};
  for (double t = first_s; t < until_s; t += period_s) {
    out.push_back({t, burst});
    out.push_back({t + burst_s, base});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trace format: `<timestamp_us> <R|W> <lba_bytes> <len_bytes>` per line.

struct TraceRecord {
  std::uint64_t timestamp_us = 0;
  Op op;
  bool operator==(const TraceRecord&) const = default;
};

inline std::vector<TraceRecord> parse_trace(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::Parse, "trace line " + std::to_string(lineno) + ": " + why);
  };
  auto number = [&](const std::string& tok, const char* what) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) fail(std::string("bad ") + what + " '" + tok + "'");
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string ts, kind, lba, len, extra;
    if (!(ls >> ts >> kind >> lba >> len)) fail("expected 4 fields");
    if (ls >> extra) fail("trailing field '" + extra + "'");
    TraceRecord r;
    r.timestamp_us = number(ts, "timestamp");
    if (kind == "R")
      r.op.kind = OpKind::Read;
    else if (kind == "W")
      r.op.kind = OpKind::Write;
    else
      fail("op must be R or W, got '" + kind + "'");
    r.op.lba = number(lba, "lba");
    r.op.length = number(len, "length");
    if (r.op.length == 0) fail("zero length");
    if (!out.empty() && r.timestamp_us < out.back().timestamp_us) fail("timestamp out of order");
    out.push_back(r);
  }
  return out;
}

inline void write_trace(std::ostream& out, const std::vector<TraceRecord>& recs) {
  for (const auto& r : recs)
    out << r.timestamp_us << ' ' << (r.op.kind == OpKind::Read ? 'R' : 'W') << ' ' << r.op.lba << ' '
        << r.op.length << '\n';
}

// FNV-1a over (kind, lba, length) of each op.
template <class Range>
std::uint64_t sequence_hash(const Range& ops) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  for (const auto& o : ops) {
    const Op& op = [&]() -> const Op& {
      if constexpr (std::is_same_v<std::decay_t<decltype(o)>, TraceRecord>)
        return o.op;
      else
        return o;
    }();
    mix(op.kind == OpKind::Read ? 0 : 1);
    mix(op.lba);
    mix(op.length);
  }
  return h;
}

// `count` ops from stream 0, spaced `spacing_us` apart.
inline std::vector<TraceRecord> generate_trace(const WorkloadSpec& spec, std::size_t count,
                                               std::uint64_t spacing_us) {
  Generator g(spec, 0);
  std::vector<TraceRecord> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = {i * spacing_us, g.next()};
  return out;
}

}  // namespace most
