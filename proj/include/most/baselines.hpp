#pragma once

// Comparison policies: striping, hotness tiering, fixed-ratio bandwidth
// tiering, latency-driven migration tiering and non-hierarchical caching.
// All of them read the same per-segment hotness counters as MOST.

#include <span>
#include <vector>

#include "most/addrspace.hpp"
#include "most/mostcore.hpp"
#include "most/optimizer.hpp"
#include "most/policy.hpp"

namespace most {

// Swap margin so counter noise does not trigger migrations.
inline bool clearly_hotter(double candidate, double victim) {
  return candidate > victim + std::max(2.0, victim / 4);
}

// ---------------------------------------------------------------------------
// Striping

class StripingPolicy : public Policy {
 public:
  explicit StripingPolicy(Bytes stripe_unit = kSegmentSize) : stripe_unit_(stripe_unit) {
    if (stripe_unit_ != kSegmentSize)
      throw Error(ErrorKind::Config, "striping.stripe_unit_bytes must equal the segment size");
  }

  static Tier on_access(Bytes lba, Bytes stripe_unit = kSegmentSize) {
    return (lba / stripe_unit) % 2 == 0 ? Tier::Performance : Tier::Capacity;
  }

  std::string name() const override { return "striping"; }

  void populate(AddressSpace& space, std::uint64_t count) override {
    for (std::uint64_t i = 0; i < count; ++i)
      if (!space.place(i, on_access(i * kSegmentSize, stripe_unit_)))
        throw Error(ErrorKind::OutOfSpace, "striped working set exceeds twice the smaller device");
  }

  Tier allocation_tier(AddressSpace&, std::uint64_t seg, Rng&) override {
    return on_access(seg * kSegmentSize, stripe_unit_);
  }

  Routed route_read(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng&) override {
    const auto& s = space.segment(seg);
    return route_whole(space, s, r, s.home());
  }
  Routed route_write(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng& rng,
                     std::vector<BackgroundCopy>&) override {
    return route_read(space, seg, r, rng);
  }
  void tick(AddressSpace&, const TickInput&, std::vector<BackgroundCopy>&) override {}

 private:
  Bytes stripe_unit_;
};

// ---------------------------------------------------------------------------
// Hotness tiering (HeMem-style)

class HememPolicy : public Policy {
 public:
  explicit HememPolicy(Bytes budget_per_tick = 64 * kMiB, unsigned hot_threshold = 8)
      : budget_(budget_per_tick), hot_threshold_(hot_threshold) {}

  std::string name() const override { return "hemem"; }

  Routed route_read(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng&) override {
    const auto& s = space.segment(seg);
    return route_whole(space, s, r, s.home());
  }
  Routed route_write(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng& rng,
                     std::vector<BackgroundCopy>&) override {
    return route_read(space, seg, r, rng);
  }

  // Promote hot capacity-resident segments; when the performance device is
  // full, swap out its coldest segment if that one is cold.
  void tick(AddressSpace& space, const TickInput&, std::vector<BackgroundCopy>& out) override {
    Bytes used = 0;
    auto hot = hottest_first(space, [&](const SegmentMeta& s) {
      return s.placement == PlacementClass::TieredCap && s.hotness() >= hot_threshold_;
    });
    auto cold = coldest_first(space, [](const SegmentMeta& s) {
      return s.placement == PlacementClass::TieredPerf;
    });
    std::size_t ci = 0;
    for (auto id : hot) {
      if (used + kSegmentSize > budget_) break;
      if (space.free_segments(Tier::Performance) == 0) {
        if (ci >= cold.size() || used + 2 * kSegmentSize > budget_) break;
        auto victim = cold[ci];
        unsigned hv = space.segment(victim).hotness();
        if (hv >= hot_threshold_ || !clearly_hotter(space.segment(id).hotness(), hv)) break;
        auto c = migrate_segment(space, victim, Tier::Capacity);
        if (!c) break;
        out.push_back(*c);
        used += c->length;
        ++ci;
      }
      if (auto c = migrate_segment(space, id, Tier::Performance)) {
        out.push_back(*c);
        used += c->length;
      }
    }
  }

 private:
  Bytes budget_;
  unsigned hot_threshold_;
};

// ---------------------------------------------------------------------------
// Access-share targeting shared by the fixed-ratio and latency-driven tiering

inline double segment_weight(const SegmentMeta& s, bool reads_only) {
  return reads_only ? double(s.read_counter) : double(s.hotness());
}

inline double perf_access_share(const AddressSpace& space, bool reads_only) {
  double perf = 0, total = 0;
  for (const auto& s : space.segments()) {
    if (!s.allocated()) continue;
    double w = segment_weight(s, reads_only);
    total += w;
    if (s.home() == Tier::Performance) perf += w;
  }
  return total > 0 ? perf / total : 1.0;
}

// Pure placement: hottest-first onto the performance tier while its expected
// access share stays at or below `target`, skipping items that overshoot.
inline std::vector<bool> share_partition(std::span<const double> weights, std::size_t perf_slots,
                                         double target) {
  std::vector<std::size_t> order(weights.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return weights[a] > weights[b]; });
  double total = 0;
  for (double w : weights) total += w;
  std::vector<bool> on_perf(weights.size(), false);
  double acc = 0;
  std::size_t used = 0;
  const double limit = target * total * (1 + 1e-12);
  for (auto i : order) {
    if (used == perf_slots) break;
    if (acc + weights[i] <= limit) {
      on_perf[i] = true;
      acc += weights[i];
      ++used;
    }
  }
  return on_perf;
}

// Move segments so the performance tier's share of recent accesses
// approaches `target`. Returns bytes copied.
inline Bytes rebalance_share(AddressSpace& space, double target, Bytes budget, bool reads_only,
                             std::vector<BackgroundCopy>& out, double hot_threshold = 8,
                             double tolerance = 0.01) {
  double perf = 0, total = 0;
  for (const auto& s : space.segments()) {
    if (!s.allocated()) continue;
    double w = segment_weight(s, reads_only);
    total += w;
    if (s.home() == Tier::Performance) perf += w;
  }
  if (total <= 0) return 0;
  double share = perf / total;
  Bytes used = 0;
  auto emit = [&](std::optional<BackgroundCopy> c) {
    if (!c) return false;
    out.push_back(*c);
    used += c->length;
    return true;
  };

  if (share > target + tolerance) {
    double excess = (share - target) * total;
    auto ids = hottest_first(space, [](const SegmentMeta& s) {
      return s.placement == PlacementClass::TieredPerf;
    });
    for (auto id : ids) {
      if (used + kSegmentSize > budget || excess <= 0) break;
      double w = segment_weight(space.segment(id), reads_only);
      if (w <= 0) break;
      if (w > excess) continue;
      if (!emit(migrate_segment(space, id, Tier::Capacity))) break;
      excess -= w;
    }
  } else if (share < target - tolerance) {
    double deficit = (target - share) * total;
    auto hot = hottest_first(space, [](const SegmentMeta& s) {
      return s.placement == PlacementClass::TieredCap;
    });
    auto cold = coldest_first(space, [](const SegmentMeta& s) {
      return s.placement == PlacementClass::TieredPerf;
    });
    std::size_t ci = 0;
    for (auto id : hot) {
      if (used + kSegmentSize > budget || deficit <= 0) break;
      double w = segment_weight(space.segment(id), reads_only);
      if (w < hot_threshold || w <= 0) break;
      double gain = w;
      if (space.free_segments(Tier::Performance) == 0) {
        if (ci >= cold.size() || used + 2 * kSegmentSize > budget) break;
        double wc = segment_weight(space.segment(cold[ci]), reads_only);
        if (!clearly_hotter(w, wc)) break;
        gain = w - wc;
        if (!emit(migrate_segment(space, cold[ci++], Tier::Capacity))) break;
      }
      if (!emit(migrate_segment(space, id, Tier::Performance))) break;
      deficit -= gain;
    }
  }
  return used;
}

// ---------------------------------------------------------------------------
// Fixed bandwidth ratio (BATMAN-style)

class BatmanPolicy : public Policy {
 public:
  BatmanPolicy(double ratio, Bytes budget_per_tick = 64 * kMiB) : ratio_(ratio), budget_(budget_per_tick) {
    if (!(ratio_ >= 0 && ratio_ <= 1)) throw Error(ErrorKind::Config, "batman.ratio must be in [0,1]");
  }

  // Ratio matching the read bandwidths of the two devices at one access size.
  static double bandwidth_ratio(double perf_bw, double cap_bw) { return perf_bw / (perf_bw + cap_bw); }

  static std::vector<bool> place(std::span<const double> weights, std::size_t perf_slots, double ratio) {
    return share_partition(weights, perf_slots, ratio);
  }

  std::string name() const override { return "batman"; }
  double ratio() const { return ratio_; }

  Routed route_read(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng&) override {
    const auto& s = space.segment(seg);
    return route_whole(space, s, r, s.home());
  }
  Routed route_write(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng& rng,
                     std::vector<BackgroundCopy>&) override {
    return route_read(space, seg, r, rng);
  }
  void tick(AddressSpace& space, const TickInput&, std::vector<BackgroundCopy>& out) override {
    rebalance_share(space, ratio_, budget_, false, out);
  }
  double offload_ratio() const override { return 1 - ratio_; }

 private:
  double ratio_;
  Bytes budget_;
};

// ---------------------------------------------------------------------------
// Latency-driven migration tiering (Colloid family)

enum class ColloidVariant { Base, Plus, PlusPlus };

struct ColloidConfig {
  ColloidVariant variant = ColloidVariant::Base;
  double theta = 0.05;
  double ewma_alpha = 0.3;
  double step = 0.02;
  Bytes migration_limit_bytes_s = 320 * kMiB;

  static ColloidConfig for_variant(ColloidVariant v) {
    ColloidConfig c;
    c.variant = v;
    if (v == ColloidVariant::PlusPlus) {
      c.theta = 0.2;
      c.ewma_alpha = 0.01;
    }
    return c;
  }
};

class ColloidPolicy : public Policy {
 public:
  explicit ColloidPolicy(ColloidConfig cfg = {}, double tick_s = 0.2) : cfg_(cfg), tick_s_(tick_s) {}

  std::string name() const override {
    switch (cfg_.variant) {
      case ColloidVariant::Base: return "colloid";
      case ColloidVariant::Plus: return "colloid+";
      case ColloidVariant::PlusPlus: return "colloid++";
    }
    return "colloid";
  }

  Routed route_read(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng&) override {
    const auto& s = space.segment(seg);
    return route_whole(space, s, r, s.home());
  }
  Routed route_write(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng& rng,
                     std::vector<BackgroundCopy>&) override {
    return route_read(space, seg, r, rng);
  }

  // Adjust the target performance share from smoothed latencies, then
  // migrate toward it under the rate limit.
  void tick(AddressSpace& space, const TickInput& in, std::vector<BackgroundCopy>& out) override {
    bool reads_only = cfg_.variant == ColloidVariant::Base;
    const auto& lat = reads_only ? in.read_latency : in.latency;
    lp_ = ewma(lp_, lat[0], cfg_.ewma_alpha);
    lc_ = ewma(lc_, lat[1], cfg_.ewma_alpha);
    if (!target_) target_ = perf_access_share(space, reads_only);
    if (lp_ && lc_) {
      if (*lp_ > (1 + cfg_.theta) * *lc_)
        target_ = std::max(0.0, *target_ - cfg_.step);
      else if (*lp_ < (1 - cfg_.theta) * *lc_)
        target_ = std::min(1.0, *target_ + cfg_.step);
    }
    auto budget = static_cast<Bytes>(double(cfg_.migration_limit_bytes_s) * tick_s_);
    // Any unused allowance carries over so small limits still move whole segments.
    allowance_ += budget;
    Bytes used = rebalance_share(space, *target_, allowance_, reads_only, out);
    allowance_ -= std::min(allowance_, used);
    allowance_ = std::min(allowance_, std::max<Bytes>(budget, 2 * kSegmentSize));
  }

  double offload_ratio() const override { return target_ ? 1 - *target_ : 0; }
  std::optional<double> target_share() const { return target_; }
  const ColloidConfig& config() const { return cfg_; }

 private:
  ColloidConfig cfg_;
  double tick_s_;
  std::optional<double> lp_, lc_, target_;
  Bytes allowance_ = 0;
};

// ---------------------------------------------------------------------------
// Non-hierarchical caching (Orthus-style). The capacity device holds every
// segment; cached segments carry a second copy on the performance device and
// are represented as MIRRORED, with dirty cache subpages as INVALID_ON_CAP.

struct NhcConfig {
  double theta = 0.05;
  double ewma_alpha = 0.3;
  double ratio_step = 0.02;
  Bytes admission_budget_bytes = 64 * kMiB;
  unsigned hot_threshold = 8;
};

class NhcPolicy : public Policy {
 public:
  explicit NhcPolicy(NhcConfig cfg = {}) : cfg_(cfg) {}

  std::string name() const override { return "nhc"; }
  bool single_copy() const override { return false; }
  double offload_ratio() const override { return ratio_; }
  void set_offload_ratio(double r) { ratio_ = r; }

  // Backing copies on capacity; the cache starts filled in address order.
  void populate(AddressSpace& space, std::uint64_t count) override {
    for (std::uint64_t i = 0; i < count; ++i)
      if (!space.place(i, Tier::Capacity))
        throw Error(ErrorKind::OutOfSpace, "working set exceeds the capacity device");
    for (std::uint64_t i = 0; i < count && space.free_segments(Tier::Performance) > 0; ++i)
      admit(space, i, nullptr);
  }

  Tier allocation_tier(AddressSpace&, std::uint64_t, Rng&) override { return Tier::Capacity; }

  Routed route_read(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng& rng) override {
    // Dirty cache subpages (INVALID_ON_CAP) pin reads to the cache copy.
    return most::route_read(space, seg, r, ratio_, rng);
  }

  // Write-back on hits, write-around on misses.
  Routed route_write(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng&,
                     std::vector<BackgroundCopy>&) override {
    auto& s = space.segment(seg);
    if (!s.mirrored()) return route_whole(space, s, r, s.home());
    space.apply_write(seg, r, Tier::Performance);
    return route_whole(space, s, r, Tier::Performance);
  }

  void tick(AddressSpace& space, const TickInput& in, std::vector<BackgroundCopy>& out) override {
    lp_ = ewma(lp_, in.read_latency[0], cfg_.ewma_alpha);
    lc_ = ewma(lc_, in.read_latency[1], cfg_.ewma_alpha);
    if (lp_ && lc_) {
      if (*lp_ > (1 + cfg_.theta) * *lc_)
        ratio_ = std::min(1.0, ratio_ + cfg_.ratio_step);
      else if (*lp_ < (1 - cfg_.theta) * *lc_)
        ratio_ = std::max(0.0, ratio_ - cfg_.ratio_step);
    }
    // Admit hot uncached segments, evicting colder cached ones.
    Bytes used = 0;
    auto misses = hottest_first(space, [&](const SegmentMeta& s) {
      return s.placement == PlacementClass::TieredCap && s.hotness() >= cfg_.hot_threshold;
    });
    auto cached = coldest_first(space, [](const SegmentMeta& s) { return s.mirrored(); });
    std::size_t ci = 0;
    for (auto id : misses) {
      if (used + kSegmentSize > cfg_.admission_budget_bytes) break;
      if (space.free_segments(Tier::Performance) == 0) {
        if (ci >= cached.size()) break;
        auto victim = cached[ci];
        if (!clearly_hotter(space.segment(id).hotness(), space.segment(victim).hotness())) break;
        used += evict(space, victim, out);
        ++ci;
      }
      used += admit(space, id, &out);
    }
  }

 private:
  // Write back dirty cache subpages, then drop the cache copy.
  Bytes evict(AddressSpace& space, std::uint64_t id, std::vector<BackgroundCopy>& out) {
    auto& s = space.segment(id);
    SubpageBitmap dirty = *s.invalid & ~*s.location;
    std::size_t before = out.size();
    copy_runs(out, CopyKind::Clean, s, dirty, Tier::Performance);
    Bytes used = 0;
    for (auto i = before; i < out.size(); ++i) used += out[i].length;
    for (std::uint32_t i = 0; i < kSubpagesPerSegment; ++i)
      if (dirty[i]) space.set_state(s, i, SubpageState::Clean);
    space.demote(id, Tier::Capacity);
    return used;
  }

  Bytes admit(AddressSpace& space, std::uint64_t id, std::vector<BackgroundCopy>* out) {
    auto& s = space.segment(id);
    auto src = s.addr[tier_index(Tier::Capacity)];
    if (!space.mirror(id)) return 0;
    if (out) out->push_back(segment_copy(CopyKind::Mirror, Tier::Capacity, src, s.addr[tier_index(Tier::Performance)]));
    return kSegmentSize;
  }

  NhcConfig cfg_;
  double ratio_ = 0;
  std::optional<double> lp_, lc_;
};

}  // namespace most
