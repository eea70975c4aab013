#pragma once

// Seam between the simulator and placement/routing policies.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "most/addrspace.hpp"
#include "most/common.hpp"

namespace most {

// One device request produced by routing a foreground access.
struct IoPart {
  Tier tier = Tier::Performance;
  Bytes offset = 0;  // physical byte offset on the device
  Bytes length = 0;
};

// At most one part per tier. Bit i of `capacity_mask` is set when subpage
// (first + i) of the accessed range is served by the capacity part.
struct Routed {
  std::array<IoPart, 2> parts{};
  std::uint8_t count = 0;
  std::uint64_t capacity_mask = 0;

  void add(IoPart p) { parts[count++] = p; }
  Tier tier() const { return parts[0].tier; }
};

inline constexpr std::uint32_t kMaxAccessSubpages = 64;

inline Routed route_whole(const AddressSpace& space, const SegmentMeta& s, SubpageRange r, Tier t) {
  Routed out;
  out.add({t, space.physical_offset(s, t, r.first), Bytes(r.count) * kSubpageSize});
  if (t == Tier::Capacity)
    out.capacity_mask = r.count >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << r.count) - 1);
  return out;
}

enum class CopyKind : std::uint8_t { MigrateToPerf, MigrateToCap, Mirror, Clean };

inline const char* copy_kind_name(CopyKind k) {
  switch (k) {
    case CopyKind::MigrateToPerf: return "migrate_to_perf";
    case CopyKind::MigrateToCap: return "migrate_to_cap";
    case CopyKind::Mirror: return "mirror";
    case CopyKind::Clean: return "clean";
  }
  return "?";
}

// Background data movement: read `length` bytes from one tier, then write
// them to the other.
struct BackgroundCopy {
  CopyKind kind = CopyKind::MigrateToCap;
  Tier from = Tier::Performance;
  Tier to = Tier::Capacity;
  Bytes src_offset = 0;
  Bytes dst_offset = 0;
  Bytes length = 0;
};

inline BackgroundCopy segment_copy(CopyKind kind, Tier from, std::uint64_t src_addr,
                                   std::uint64_t dst_addr) {
  return {kind, from, other(from), src_addr * kSegmentSize, dst_addr * kSegmentSize, kSegmentSize};
}

// Contiguous runs of subpages in `mask` become one copy each.
inline void copy_runs(std::vector<BackgroundCopy>& out, CopyKind kind, const SegmentMeta& s,
                      const SubpageBitmap& mask, Tier from) {
  Tier to = other(from);
  const Bytes src_base = s.addr[tier_index(from)] * kSegmentSize;
  const Bytes dst_base = s.addr[tier_index(to)] * kSegmentSize;
  std::uint32_t i = 0;
  while (i < kSubpagesPerSegment) {
    if (!mask[i]) {
      ++i;
      continue;
    }
    std::uint32_t j = i;
    while (j < kSubpagesPerSegment && mask[j]) ++j;
    out.push_back({kind, from, to, src_base + Bytes(i) * kSubpageSize,
                   dst_base + Bytes(i) * kSubpageSize, Bytes(j - i) * kSubpageSize});
    i = j;
  }
}

struct TickInput {
  double now_s = 0;
  std::uint64_t epoch = 0;
  // Interval averages of foreground end-to-end latency; empty when the
  // device completed no foreground request in the interval.
  std::array<std::optional<double>, 2> latency{};
  std::array<std::optional<double>, 2> read_latency{};
};

class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string name() const = 0;

  // Initial placement of segments [0, count).
  virtual void populate(AddressSpace& space, std::uint64_t count) {
    for (std::uint64_t i = 0; i < count; ++i)
      if (!space.place(i, Tier::Performance) && !space.place(i, Tier::Capacity))
        throw Error(ErrorKind::OutOfSpace, "working set does not fit");
  }

  virtual Routed route_read(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng& rng) = 0;
  virtual Routed route_write(AddressSpace& space, std::uint64_t seg, SubpageRange r, Rng& rng,
                             std::vector<BackgroundCopy>& side) = 0;

  // Tier for a segment written for the first time.
  virtual Tier allocation_tier(AddressSpace& space, std::uint64_t /*seg*/, Rng&) {
    return space.free_segments(Tier::Performance) > 0 ? Tier::Performance : Tier::Capacity;
  }

  virtual void tick(AddressSpace& space, const TickInput& in, std::vector<BackgroundCopy>& out) = 0;

  // Routing ratio reported in metrics (0 for policies without one).
  virtual double offload_ratio() const { return 0; }

  // Policies that never keep two copies of a block.
  virtual bool single_copy() const { return true; }
};

// Allocated segment ids ordered by hotness, ties broken by id.
template <class Pred>
std::vector<std::uint64_t> hottest_first(const AddressSpace& space, Pred pred) {
  std::vector<std::uint64_t> ids;
  for (const auto& s : space.segments())
    if (s.allocated() && pred(s)) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end(), [&](auto a, auto b) {
    unsigned ha = space.segment(a).hotness(), hb = space.segment(b).hotness();
    return ha != hb ? ha > hb : a < b;
  });
  return ids;
}

template <class Pred>
std::vector<std::uint64_t> coldest_first(const AddressSpace& space, Pred pred) {
  std::vector<std::uint64_t> ids;
  for (const auto& s : space.segments())
    if (s.allocated() && pred(s)) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end(), [&](auto a, auto b) {
    unsigned ha = space.segment(a).hotness(), hb = space.segment(b).hotness();
    return ha != hb ? ha < hb : a < b;
  });
  return ids;
}

// Move a tiered segment and describe the data copy. Empty when the
// destination has no free segment.
inline std::optional<BackgroundCopy> migrate_segment(AddressSpace& space, std::uint64_t id, Tier to) {
  auto& s = space.segment(id);
  Tier from = s.home();
  auto src = s.addr[tier_index(from)];
  if (!space.move(id, to)) return std::nullopt;
  return segment_copy(to == Tier::Performance ? CopyKind::MigrateToPerf : CopyKind::MigrateToCap,
                      from, src, s.addr[tier_index(to)]);
}

}  // namespace most
