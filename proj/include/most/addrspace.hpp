#pragma once

// Logical address space carved into fixed-size segments spread over the two
// devices, plus the per-subpage validity state of mirrored segments.

#include <array>
#include <bitset>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "most/common.hpp"

namespace most {

enum class PlacementClass : std::uint8_t { TieredPerf, TieredCap, Mirrored };

inline const char* placement_name(PlacementClass c) {
  switch (c) {
    case PlacementClass::TieredPerf: return "TIERED_PERF";
    case PlacementClass::TieredCap: return "TIERED_CAP";
    case PlacementClass::Mirrored: return "MIRRORED";
  }
  return "?";
}

inline PlacementClass tiered_class(Tier t) {
  return t == Tier::Performance ? PlacementClass::TieredPerf : PlacementClass::TieredCap;
}

enum class SubpageState : std::uint8_t { Clean, InvalidOnPerf, InvalidOnCap };

inline const char* subpage_state_name(SubpageState s) {
  switch (s) {
    case SubpageState::Clean: return "CLEAN";
    case SubpageState::InvalidOnPerf: return "INVALID_ON_PERF";
    case SubpageState::InvalidOnCap: return "INVALID_ON_CAP";
  }
  return "?";
}

// Pure transition rule for a full-subpage write landing on `target`.
inline SubpageState after_write(SubpageState, Tier target) {
  return target == Tier::Performance ? SubpageState::InvalidOnCap : SubpageState::InvalidOnPerf;
}

struct TierSet {
  bool performance = false;
  bool capacity = false;

  bool contains(Tier t) const { return t == Tier::Performance ? performance : capacity; }
  bool operator==(const TierSet&) const = default;
};

using SubpageBitmap = std::bitset<kSubpagesPerSegment>;

inline constexpr std::uint64_t kNoAddress = ~std::uint64_t{0};

struct SegmentMeta {
  std::uint64_t id = 0;
  std::array<std::uint64_t, 2> addr{kNoAddress, kNoAddress};  // physical segment index per tier
  // Allocated only while the segment is MIRRORED.
  std::unique_ptr<SubpageBitmap> invalid;
  std::unique_ptr<SubpageBitmap> location;  // bit set => capacity copy holds the valid data
  std::uint64_t clock = 0;
  std::uint8_t read_counter = 0;
  std::uint8_t write_counter = 0;
  std::uint64_t rewrite_read_counter = 0;
  std::uint64_t rewrite_counter = 0;
  std::uint8_t flags = 0;
  PlacementClass placement = PlacementClass::TieredPerf;

  bool allocated() const { return addr[0] != kNoAddress || addr[1] != kNoAddress; }
  bool mirrored() const { return placement == PlacementClass::Mirrored; }
  bool has_copy(Tier t) const { return addr[tier_index(t)] != kNoAddress; }
  unsigned hotness() const { return unsigned(read_counter) + unsigned(write_counter); }

  SubpageState state(std::uint32_t subpage) const {
    if (!invalid || !(*invalid)[subpage]) return SubpageState::Clean;
    return (*location)[subpage] ? SubpageState::InvalidOnPerf : SubpageState::InvalidOnCap;
  }

  std::size_t invalid_count() const { return invalid ? invalid->count() : 0; }

  // Tier of the single copy of a tiered segment.
  Tier home() const {
    return placement == PlacementClass::TieredCap ? Tier::Capacity : Tier::Performance;
  }
};

// Field sizes of the in-memory per-segment record (bitmaps counted as
// pointers, plus an 8-byte shared lock).
namespace footprint {
inline constexpr std::array<std::pair<const char*, Bytes>, 12> kFields{{
    {"id", 8},
    {"addr[2]", 16},
    {"invalid*", 8},
    {"location*", 8},
    {"clock", 8},
    {"read_counter", 1},
    {"write_counter", 1},
    {"rewrite_read_counter", 8},
    {"rewrite_counter", 8},
    {"flags", 1},
    {"storage_class", 1},
    {"shared_mutex", 8},
}};

inline constexpr Bytes per_segment() {
  Bytes total = 0;
  for (const auto& f : kFields) total += f.second;
  return total;
}

inline constexpr Bytes kBitmapBytes = kSubpagesPerSegment / 8;
}  // namespace footprint

// Base record for every segment plus two bitmaps per mirrored segment.
inline Bytes metadata_footprint(Bytes total_capacity, double mirrored_fraction) {
  if (total_capacity % kSegmentSize != 0)
    throw Error(ErrorKind::Alignment, "capacity must be a multiple of the segment size");
  Bytes segments = total_capacity / kSegmentSize;
  auto mirrored = static_cast<Bytes>(double(segments) * mirrored_fraction);
  return segments * footprint::per_segment() + mirrored * 2 * footprint::kBitmapBytes;
}

struct Resolved {
  std::uint64_t segment = 0;
  std::uint32_t subpage = 0;
  bool operator==(const Resolved&) const = default;
};

struct SubpageRange {
  std::uint32_t first = 0;
  std::uint32_t count = 1;
  std::uint32_t end() const { return first + count; }
};

class AddressSpace {
 public:
  AddressSpace(Bytes perf_capacity, Bytes cap_capacity, Bytes logical_capacity,
               double watermark_fraction = 0.025)
      : watermark_(watermark_fraction) {
    if (perf_capacity % kSegmentSize || cap_capacity % kSegmentSize ||
        logical_capacity % kSegmentSize)
      throw Error(ErrorKind::Alignment, "capacities must be multiples of the segment size");
    device_segments_ = {perf_capacity / kSegmentSize, cap_capacity / kSegmentSize};
    for (std::size_t t = 0; t < 2; ++t) {
      auto& fl = free_[t];
      fl.reserve(device_segments_[t]);
      // Stack; lowest addresses are handed out first.
      for (std::uint64_t a = device_segments_[t]; a-- > 0;) fl.push_back(a);
    }
    segments_.resize(logical_capacity / kSegmentSize);
    for (std::uint64_t i = 0; i < segments_.size(); ++i) segments_[i].id = i;
  }

  std::size_t segment_count() const { return segments_.size(); }
  Bytes logical_capacity() const { return segments_.size() * kSegmentSize; }
  std::uint64_t device_segments(Tier t) const { return device_segments_[tier_index(t)]; }
  std::uint64_t free_segments(Tier t) const { return free_[tier_index(t)].size(); }
  std::uint64_t allocated_segments(Tier t) const { return device_segments(t) - free_segments(t); }
  std::uint64_t total_segments() const { return device_segments_[0] + device_segments_[1]; }
  Bytes total_capacity() const { return total_segments() * kSegmentSize; }
  double watermark() const { return watermark_; }
  std::uint64_t mirrored_segments() const { return mirrored_; }

  double free_fraction() const {
    return double(free_segments(Tier::Performance) + free_segments(Tier::Capacity)) /
           double(total_segments());
  }
  bool below_watermark() const { return free_fraction() < watermark_; }

  SegmentMeta& segment(std::uint64_t id) { return segments_.at(id); }
  const SegmentMeta& segment(std::uint64_t id) const { return segments_.at(id); }
  std::vector<SegmentMeta>& segments() { return segments_; }
  const std::vector<SegmentMeta>& segments() const { return segments_; }

  Resolved resolve(Bytes lba) const {
    if (lba % kSubpageSize != 0) throw Error(ErrorKind::Alignment, "lba not subpage aligned");
    if (lba >= logical_capacity()) throw Error(ErrorKind::Address, "lba beyond logical space");
    return {lba / kSegmentSize, static_cast<std::uint32_t>((lba % kSegmentSize) / kSubpageSize)};
  }

  std::optional<std::uint64_t> allocate_segment(Tier t) {
    auto& fl = free_[tier_index(t)];
    if (fl.empty()) return std::nullopt;
    auto a = fl.back();
    fl.pop_back();
    return a;
  }

  void free_segment(Tier t, std::uint64_t addr) {
    if (addr >= device_segments(t)) throw Error(ErrorKind::Address, "freeing unknown segment");
    free_[tier_index(t)].push_back(addr);
  }

  // Byte offset of a subpage on the device that holds copy `t`.
  Bytes physical_offset(const SegmentMeta& s, Tier t, std::uint32_t subpage = 0) const {
    auto a = s.addr[tier_index(t)];
    if (a == kNoAddress) throw Error(ErrorKind::Address, "segment has no copy on that tier");
    return a * kSegmentSize + Bytes(subpage) * kSubpageSize;
  }

  // First placement of a logical segment as a single tiered copy.
  bool place(std::uint64_t id, Tier t) {
    auto& s = segment(id);
    if (s.allocated()) throw Error(ErrorKind::Contract, "segment already placed");
    auto a = allocate_segment(t);
    if (!a) return false;
    s.addr[tier_index(t)] = *a;
    s.placement = tiered_class(t);
    return true;
  }

  // Tiered -> tiered move. Returns false when the destination is full.
  bool move(std::uint64_t id, Tier to) {
    auto& s = segment(id);
    if (s.mirrored() || !s.allocated()) throw Error(ErrorKind::Class, "move needs a tiered segment");
    Tier from = s.home();
    if (from == to) return true;
    auto a = allocate_segment(to);
    if (!a) return false;
    free_segment(from, s.addr[tier_index(from)]);
    s.addr[tier_index(from)] = kNoAddress;
    s.addr[tier_index(to)] = *a;
    s.placement = tiered_class(to);
    return true;
  }

  // Add a second copy of a tiered segment; the segment becomes MIRRORED and clean.
  bool mirror(std::uint64_t id) {
    auto& s = segment(id);
    if (s.mirrored() || !s.allocated()) throw Error(ErrorKind::Class, "mirror needs a tiered segment");
    Tier to = other(s.home());
    auto a = allocate_segment(to);
    if (!a) return false;
    s.addr[tier_index(to)] = *a;
    s.placement = PlacementClass::Mirrored;
    s.invalid = std::make_unique<SubpageBitmap>();
    s.location = std::make_unique<SubpageBitmap>();
    ++mirrored_;
    return true;
  }

  // Drop one copy of a mirrored segment. The surviving copy must be fully valid.
  void demote(std::uint64_t id, Tier keep) {
    auto& s = segment(id);
    if (!s.mirrored()) throw Error(ErrorKind::Class, "demote needs a mirrored segment");
    if (!fully_valid_on(s, keep))
      throw Error(ErrorKind::Contract, "discarding the only valid copy of a subpage");
    Tier drop = other(keep);
    free_segment(drop, s.addr[tier_index(drop)]);
    s.addr[tier_index(drop)] = kNoAddress;
    s.placement = tiered_class(keep);
    s.invalid.reset();
    s.location.reset();
    --mirrored_;
  }

  // Full-subpage write to one copy of a mirrored segment.
  void apply_write(std::uint64_t id, SubpageRange r, Tier target) {
    auto& s = segment(id);
    if (!s.mirrored()) throw Error(ErrorKind::Class, "apply_write on a tiered segment");
    check_range(r);
    for (auto i = r.first; i < r.end(); ++i) set_state(s, i, after_write(s.state(i), target));
  }

  void set_state(SegmentMeta& s, std::uint32_t subpage, SubpageState st) {
    if (!s.mirrored()) throw Error(ErrorKind::Class, "subpage state on a tiered segment");
    switch (st) {
      case SubpageState::Clean:
        s.invalid->reset(subpage);
        s.location->reset(subpage);
        break;
      case SubpageState::InvalidOnPerf:
        s.invalid->set(subpage);
        s.location->set(subpage);
        break;
      case SubpageState::InvalidOnCap:
        s.invalid->set(subpage);
        s.location->reset(subpage);
        break;
    }
  }

  void mark_clean(std::uint64_t id, SubpageRange r) {
    auto& s = segment(id);
    check_range(r);
    for (auto i = r.first; i < r.end(); ++i) set_state(s, i, SubpageState::Clean);
  }

  TierSet valid_devices(std::uint64_t id, std::uint32_t subpage) const {
    const auto& s = segment(id);
    if (!s.allocated()) return {};
    if (!s.mirrored()) return s.home() == Tier::Performance ? TierSet{true, false} : TierSet{false, true};
    switch (s.state(subpage)) {
      case SubpageState::Clean: return {true, true};
      case SubpageState::InvalidOnPerf: return {false, true};
      case SubpageState::InvalidOnCap: return {true, false};
    }
    return {};
  }

  // Tiers valid for every subpage of the range.
  TierSet valid_devices(std::uint64_t id, SubpageRange r) const {
    TierSet out{true, true};
    for (auto i = r.first; i < r.end(); ++i) {
      auto v = valid_devices(id, i);
      out.performance = out.performance && v.performance;
      out.capacity = out.capacity && v.capacity;
    }
    return out;
  }

  static bool fully_valid_on(const SegmentMeta& s, Tier t) {
    if (!s.mirrored()) return s.allocated() && s.home() == t;
    // Valid on t unless invalid with the valid copy on the other tier.
    auto stale_here = t == Tier::Performance ? (*s.invalid & *s.location)
                                             : (*s.invalid & ~*s.location);
    return stale_here.none();
  }

  // Saturating hotness counters plus the unbounded rewrite statistics.
  static void record_access(SegmentMeta& s, OpKind op) {
    if (op == OpKind::Read) {
      if (s.read_counter < 255) ++s.read_counter;
      ++s.rewrite_read_counter;
    } else {
      if (s.write_counter < 255) ++s.write_counter;
      ++s.rewrite_counter;
    }
  }

  // Halve the hotness counters of every segment whose clock predates `epoch`.
  void decay(std::uint64_t epoch) {
    for (auto& s : segments_) {
      if (s.clock < epoch) {
        s.read_counter >>= 1;
        s.write_counter >>= 1;
        s.clock = epoch;
      }
    }
  }

  // Per-device accounting: free + referenced == device segments, and no
  // physical segment referenced twice.
  bool check_accounting() const {
    for (std::size_t t = 0; t < 2; ++t) {
      std::vector<char> used(device_segments_[t], 0);
      for (auto a : free_[t]) {
        if (a >= used.size() || used[a]) return false;
        used[a] = 1;
      }
      for (const auto& s : segments_) {
        auto a = s.addr[t];
        if (a == kNoAddress) continue;
        if (a >= used.size() || used[a]) return false;
        used[a] = 1;
      }
      for (char u : used)
        if (!u) return false;
    }
    std::uint64_t m = 0;
    for (const auto& s : segments_) {
      if (s.mirrored()) {
        ++m;
        if (!s.has_copy(Tier::Performance) || !s.has_copy(Tier::Capacity) || !s.invalid) return false;
      } else if (s.allocated()) {
        if (s.has_copy(Tier::Performance) == s.has_copy(Tier::Capacity)) return false;
        if (s.invalid) return false;
      }
    }
    return m == mirrored_;
  }

 private:
  static void check_range(SubpageRange r) {
    if (r.count == 0 || r.end() > kSubpagesPerSegment)
      throw Error(ErrorKind::Alignment, "subpage range outside the segment");
  }

  std::array<std::uint64_t, 2> device_segments_{};
  std::array<std::vector<std::uint64_t>, 2> free_;
  std::vector<SegmentMeta> segments_;
  std::uint64_t mirrored_ = 0;
  double watermark_;
};

}  // namespace most
