#pragma once

// Mirror-optimized tiering: probabilistic routing over a small mirrored
// class, latency-driven offload ratio, gated migration, reclamation of
// mirror copies and selective cleaning of half-valid mirrored segments.

#include <span>
#include <vector>

#include "most/addrspace.hpp"
#include "most/optimizer.hpp"
#include "most/policy.hpp"

namespace most {

struct MostConfig {
  OptimizerConfig optimizer;
  double watermark_fraction = 0.025;
  Bytes migration_budget_bytes = 64 * kMiB;  // per tuning interval
  double clean_threshold = 8.0;              // reads per write
  bool subpages_enabled = true;
};

inline Tier draw_tier(double offload_ratio, Rng& rng) {
  return rng.bernoulli(offload_ratio) ? Tier::Capacity : Tier::Performance;
}

// Reads to clean mirrored subpages go to capacity with probability
// `offload_ratio`; subpages with a single valid copy are pinned to it. A
// range mixing both becomes at most one request per tier.
inline Routed route_read(const AddressSpace& space, std::uint64_t seg, SubpageRange r,
                         double offload_ratio, Rng& rng) {
  const auto& s = space.segment(seg);
  if (!s.mirrored()) return route_whole(space, s, r, s.home());
  Tier preferred = draw_tier(offload_ratio, rng);
  if (s.invalid_count() == 0) return route_whole(space, s, r, preferred);

  std::uint64_t cap_mask = 0;
  std::array<std::uint32_t, 2> lo{kSubpagesPerSegment, kSubpagesPerSegment}, hi{0, 0};
  for (std::uint32_t i = 0; i < r.count; ++i) {
    std::uint32_t sp = r.first + i;
    Tier t = preferred;
    switch (s.state(sp)) {
      case SubpageState::Clean: break;
      case SubpageState::InvalidOnPerf: t = Tier::Capacity; break;
      case SubpageState::InvalidOnCap: t = Tier::Performance; break;
    }
    if (t == Tier::Capacity) cap_mask |= std::uint64_t{1} << i;
    auto k = tier_index(t);
    lo[k] = std::min(lo[k], sp);
    hi[k] = std::max(hi[k], sp + 1);
  }
  Routed out;
  for (Tier t : {Tier::Performance, Tier::Capacity}) {
    auto k = tier_index(t);
    if (lo[k] < hi[k])
      out.add({t, space.physical_offset(s, t, lo[k]), Bytes(hi[k] - lo[k]) * kSubpageSize});
  }
  out.capacity_mask = cap_mask;
  return out;
}

// Full-subpage writes. With subpage tracking a mirrored write may land on
// either copy. Without it, the first write to a clean segment invalidates
// the whole other copy and later writes are pinned to the surviving one.
inline Routed route_write(AddressSpace& space, std::uint64_t seg, SubpageRange r, double offload_ratio,
                          Rng& rng, bool subpages_enabled = true) {
  auto& s = space.segment(seg);
  if (!s.mirrored()) return route_whole(space, s, r, s.home());
  if (subpages_enabled) {
    Tier t = draw_tier(offload_ratio, rng);
    space.apply_write(seg, r, t);
    return route_whole(space, s, r, t);
  }
  Tier t;
  if (s.invalid_count() == 0)
    t = draw_tier(offload_ratio, rng);
  else
    t = AddressSpace::fully_valid_on(s, Tier::Performance) ? Tier::Performance : Tier::Capacity;
  space.apply_write(seg, {0, kSubpagesPerSegment}, t);
  return route_whole(space, s, r, t);
}

// First write of a segment: capacity with probability `offload_ratio`,
// falling back to the other tier when the chosen one is full.
inline Tier allocate_block(AddressSpace& space, std::uint64_t seg, double offload_ratio, Rng& rng) {
  Tier t = draw_tier(offload_ratio, rng);
  if (space.place(seg, t)) return t;
  if (space.place(seg, other(t))) return other(t);
  throw Error(ErrorKind::OutOfSpace, "both devices are full");
}

struct ReclaimResult {
  std::uint64_t segment = 0;
  Tier kept = Tier::Performance;
  Bytes patched_bytes = 0;
};

// Drop one copy of a mirrored segment. Keeps the performance copy when it is
// fully valid, else the capacity copy, patching the capacity copy first if
// some subpages are only valid on performance.
inline ReclaimResult reclaim_segment(AddressSpace& space, std::uint64_t id,
                                     std::vector<BackgroundCopy>& out) {
  auto& s = space.segment(id);
  ReclaimResult res{id, Tier::Performance, 0};
  if (AddressSpace::fully_valid_on(s, Tier::Performance)) {
    space.demote(id, Tier::Performance);
    return res;
  }
  res.kept = Tier::Capacity;
  if (!AddressSpace::fully_valid_on(s, Tier::Capacity)) {
    SubpageBitmap perf_only = *s.invalid & ~*s.location;
    std::size_t before = out.size();
    copy_runs(out, CopyKind::Clean, s, perf_only, Tier::Performance);
    for (auto i = before; i < out.size(); ++i) res.patched_bytes += out[i].length;
    for (std::uint32_t i = 0; i < kSubpagesPerSegment; ++i)
      if (perf_only[i]) space.set_state(s, i, SubpageState::Clean);
  }
  space.demote(id, Tier::Capacity);
  return res;
}

// Reclaim the coldest mirrored segment; empty when nothing is mirrored.
inline std::optional<ReclaimResult> reclaim(AddressSpace& space, std::vector<BackgroundCopy>& out) {
  if (space.mirrored_segments() == 0) return std::nullopt;
  auto ids = coldest_first(space, [](const SegmentMeta& s) { return s.mirrored(); });
  return reclaim_segment(space, ids.front(), out);
}

inline double rewrite_distance(const SegmentMeta& s) {
  return double(s.rewrite_read_counter) / double(std::max<std::uint64_t>(s.rewrite_counter, 1));
}

// Copy valid subpages over their stale twins for mirrored segments whose
// rewrite distance reaches `threshold`, least-written first. Returns the
// number of subpages cleaned.
inline std::size_t cleaner_tick(AddressSpace& space, double threshold, Bytes budget,
                                std::vector<BackgroundCopy>& out,
                                std::vector<std::pair<std::uint64_t, std::size_t>>* log = nullptr) {
  std::vector<std::uint64_t> ids;
  for (const auto& s : space.segments())
    if (s.mirrored() && s.invalid_count() > 0 && rewrite_distance(s) >= threshold) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end(), [&](auto a, auto b) {
    auto wa = space.segment(a).write_counter, wb = space.segment(b).write_counter;
    return wa != wb ? wa < wb : a < b;
  });
  std::size_t cleaned = 0;
  Bytes used = 0;
  for (auto id : ids) {
    auto& s = space.segment(id);
    SubpageBitmap stale_on_perf = *s.invalid & *s.location;
    SubpageBitmap stale_on_cap = *s.invalid & ~*s.location;
    // Trim to the remaining budget, lowest subpages first.
    Bytes left = budget > used ? budget - used : 0;
    std::size_t allowed = left / kSubpageSize;
    if (allowed == 0) break;
    for (std::uint32_t i = 0; i < kSubpagesPerSegment; ++i) {
      if (!(*s.invalid)[i]) continue;
      if (allowed == 0) {
        stale_on_perf.reset(i);
        stale_on_cap.reset(i);
        continue;
      }
      --allowed;
    }
    copy_runs(out, CopyKind::Clean, s, stale_on_perf, Tier::Capacity);
    copy_runs(out, CopyKind::Clean, s, stale_on_cap, Tier::Performance);
    std::size_t n = stale_on_perf.count() + stale_on_cap.count();
    for (std::uint32_t i = 0; i < kSubpagesPerSegment; ++i)
      if (stale_on_perf[i] || stale_on_cap[i]) space.set_state(s, i, SubpageState::Clean);
    cleaned += n;
    used += n * kSubpageSize;
    if (log && n) log->emplace_back(id, n);
  }
  return cleaned;
}

inline void hotness_decay_tick(AddressSpace& space, std::uint64_t epoch) { space.decay(epoch); }

struct MigrateOutcome {
  Bytes bytes = 0;
  bool reclaim_requested = false;
  bool swapped = false;
};

// Background movement permitted by the current gate.
inline MigrateOutcome migrate_tick(AddressSpace& space, const OptimizerState& state,
                                   std::span<const MirrorAction> actions, Bytes budget,
                                   bool subpages_enabled, std::vector<BackgroundCopy>& out) {
  MigrateOutcome res;
  auto spend = [&](const BackgroundCopy& c) {
    out.push_back(c);
    res.bytes += c.length;
  };
  const auto& cfg = state.config;
  auto mirror_room = [&] {
    return MirrorStats{space.mirrored_segments() * kSegmentSize, space.total_capacity()}.below_max(
        cfg.mirrored_max_fraction);
  };
  auto wants = [&](MirrorAction a) {
    return std::find(actions.begin(), actions.end(), a) != actions.end();
  };
  auto mirror_one = [&](std::uint64_t id) {
    auto& s = space.segment(id);
    auto src = s.addr[tier_index(Tier::Performance)];
    if (!space.mirror(id)) return false;
    spend(segment_copy(CopyKind::Mirror, Tier::Performance, src, s.addr[tier_index(Tier::Capacity)]));
    return true;
  };
  // Without subpage tracking a half-valid mirrored segment can only be
  // repaired by copying the whole stale side.
  auto resync = [&](Tier stale, CopyKind kind) {
    auto ids = hottest_first(space, [&](const SegmentMeta& s) {
      return s.mirrored() && !AddressSpace::fully_valid_on(s, stale);
    });
    for (auto id : ids) {
      if (res.bytes + kSegmentSize > budget) break;
      auto& s = space.segment(id);
      SubpageBitmap mask = stale == Tier::Performance ? (*s.invalid & *s.location)
                                                      : (*s.invalid & ~*s.location);
      std::size_t before = out.size();
      copy_runs(out, kind, s, mask, other(stale));
      for (auto i = before; i < out.size(); ++i) res.bytes += out[i].length;
      for (std::uint32_t i = 0; i < kSubpagesPerSegment; ++i)
        if (mask[i]) space.set_state(s, i, SubpageState::Clean);
    }
  };

  switch (state.gate) {
    case MigrationGate::Stopped: return res;

    case MigrationGate::ToPerformanceOnly: {
      if (!subpages_enabled) resync(Tier::Performance, CopyKind::MigrateToPerf);
      auto ids = hottest_first(space, [](const SegmentMeta& s) {
        return s.placement == PlacementClass::TieredCap && s.hotness() > 0;
      });
      for (auto id : ids) {
        if (res.bytes + kSegmentSize > budget || space.free_segments(Tier::Performance) == 0) break;
        if (auto c = migrate_segment(space, id, Tier::Performance)) spend(*c);
      }
      return res;
    }

    case MigrationGate::ToCapacityOnly: {
      if (!subpages_enabled) resync(Tier::Capacity, CopyKind::MigrateToCap);
      if (wants(MirrorAction::EnlargeMirror)) {
        auto ids = hottest_first(space, [](const SegmentMeta& s) {
          return s.placement == PlacementClass::TieredPerf && s.hotness() > 0;
        });
        for (auto id : ids) {
          if (res.bytes + kSegmentSize > budget || !mirror_room()) break;
          if (!mirror_one(id)) {
            res.reclaim_requested = true;
            break;
          }
        }
      }
      if (wants(MirrorAction::ImproveMirrorHotness)) {
        auto hot = hottest_first(space, [](const SegmentMeta& s) {
          return s.placement == PlacementClass::TieredPerf;
        });
        auto cold = coldest_first(space, [](const SegmentMeta& s) { return s.mirrored(); });
        if (!hot.empty() && !cold.empty() && res.bytes + 2 * kSegmentSize <= budget &&
            space.segment(hot.front()).hotness() > space.segment(cold.front()).hotness()) {
          std::size_t before = out.size();
          reclaim_segment(space, cold.front(), out);
          for (auto i = before; i < out.size(); ++i) res.bytes += out[i].length;
          if (space.segment(hot.front()).placement == PlacementClass::TieredPerf && mirror_one(hot.front()))
            res.swapped = true;
          else
            res.reclaim_requested = true;
        }
        // Mirror class is full: shed the coldest tiered data off the
        // performance device with what is left of the budget.
        auto demote = coldest_first(space, [](const SegmentMeta& s) {
          return s.placement == PlacementClass::TieredPerf;
        });
        for (auto id : demote) {
          if (res.bytes + kSegmentSize > budget) break;
          if (auto c = migrate_segment(space, id, Tier::Capacity))
            spend(*c);
          else
            break;
        }
      }
      return res;
    }
  }
  return res;
}

class MostPolicy : public Policy {
 public:
  explicit MostPolicy(MostConfig cfg = {}) : cfg_(cfg) {
    cfg_.optimizer.validate();
    state_.config = cfg_.optimizer;
  }

  std::string name() const override { return "most"; }

  Routed route_read(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng& rng) override {
    return most::route_read(space, seg, r, state_.offload_ratio, rng);
  }

  Routed route_write(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng& rng,
                     std::vector<BackgroundCopy>&) override {
    return most::route_write(space, seg, r, state_.offload_ratio, rng, cfg_.subpages_enabled);
  }

  Tier allocation_tier(AddressSpace& space, std::uint64_t, Rng& rng) override {
    Tier t = draw_tier(state_.offload_ratio, rng);
    return space.free_segments(t) > 0 ? t : other(t);
  }

  void tick(AddressSpace& space, const TickInput& in, std::vector<BackgroundCopy>& out) override {
    MirrorStats ms{space.mirrored_segments() * kSegmentSize, space.total_capacity()};
    auto step = optimizer_step(in.latency[0], in.latency[1], state_, ms);
    state_ = step.state;
    last_actions_ = step.actions;
    auto mig = migrate_tick(space, state_, last_actions_, cfg_.migration_budget_bytes,
                            cfg_.subpages_enabled, out);
    Bytes reclaim_budget = cfg_.migration_budget_bytes;
    while ((space.below_watermark() || mig.reclaim_requested) && reclaim_budget > 0) {
      std::size_t before = out.size();
      auto r = reclaim(space, out);
      if (!r) {
        ++reclaim_misses_;
        break;
      }
      for (auto i = before; i < out.size(); ++i) reclaim_budget -= std::min(reclaim_budget, out[i].length);
      mig.reclaim_requested = false;
      if (reclaim_budget == 0) break;
    }
    if (stale_seen_.size() < space.segment_count()) stale_seen_.resize(space.segment_count(), 0);
    for (const auto& s : space.segments())
      if (s.mirrored() && s.invalid_count() > 0) stale_seen_[s.id] = 1;
    clean_log_.clear();
    cleaner_tick(space, cfg_.clean_threshold, cfg_.migration_budget_bytes, out, &clean_log_);
    if (cleaned_.size() < space.segment_count()) cleaned_.resize(space.segment_count(), 0);
    for (auto [id, n] : clean_log_) cleaned_[id] += n;
  }

  double offload_ratio() const override { return state_.offload_ratio; }
  bool single_copy() const override { return false; }

  const OptimizerState& state() const { return state_; }
  OptimizerState& mutable_state() { return state_; }
  const std::vector<MirrorAction>& last_actions() const { return last_actions_; }
  const MostConfig& config() const { return cfg_; }
  std::uint64_t reclaim_misses() const { return reclaim_misses_; }
  // Subpages cleaned so far, per segment.
  const std::vector<std::uint64_t>& cleaned_subpages() const { return cleaned_; }
  // Segments that were ever mirrored with a stale subpage at a cleaner pass.
  const std::vector<std::uint8_t>& stale_seen() const { return stale_seen_; }

 private:
  MostConfig cfg_;
  OptimizerState state_;
  std::vector<MirrorAction> last_actions_;
  std::uint64_t reclaim_misses_ = 0;
  std::vector<std::pair<std::uint64_t, std::size_t>> clean_log_;
  std::vector<std::uint64_t> cleaned_;
  std::vector<std::uint8_t> stale_seen_;
};

}  // namespace most
