#pragma once

// Discrete-event loop tying two simulated devices, an address space and a
// placement policy to a closed-loop (worker) or open-loop (trace) op source.

#include <bit>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <queue>
#include <vector>

#include "most/addrspace.hpp"
#include "most/devsim.hpp"
#include "most/histogram.hpp"
#include "most/policy.hpp"
#include "most/workloads.hpp"

namespace most {

struct SimConfig {
  DeviceSpec perf = presets::optane();
  DeviceSpec cap = presets::nvme_pcie3();
  Bytes logical_capacity = 0;  // 0: whole hierarchy
  double watermark_fraction = 0.025;
  double tick_s = 0.2;
  double metrics_interval_s = 1.0;
  std::size_t copy_concurrency = 32;
  bool check_reads = true;
  // Access size used for the idle-latency fallback of a device that served
  // no foreground request during a tick.
  Bytes nominal_access = 4 * kKiB;
  std::uint64_t seed = 1;
};

struct IntervalStats {
  double time_s = 0;  // end of the interval
  double throughput_bps = 0;
  double p50_us = 0, p99_us = 0, p999_us = 0;
  double offload_ratio = 0;
  // Cumulative bytes written by completed background copies.
  Bytes mig_to_perf_bytes = 0, mig_to_cap_bytes = 0, mirror_bytes = 0, clean_bytes = 0;
  std::array<double, 2> util{};
  std::array<std::size_t, 2> queue_depth{};
  std::array<std::optional<double>, 2> fg_latency_us{};
  std::array<std::uint64_t, 2> mirrored_read_subpages{};  // this interval
  Bytes read_bytes = 0, write_bytes = 0;                   // this interval
  std::array<Bytes, 2> device_read_bytes{}, device_write_bytes{};  // this interval, all traffic
  std::size_t workers = 0;
  std::uint64_t mirrored_segments = 0;
};

struct SimTotals {
  std::uint64_t ops = 0;
  Bytes fg_read_bytes = 0;
  std::array<Bytes, 2> fg_written{};    // per device, completed
  std::array<Bytes, 4> copy_written{};  // per CopyKind, completed
  std::array<Bytes, 2> copy_written_to{};
  std::uint64_t read_checks = 0;
};

// Closed-loop op supplier. Returning nothing stops the worker.
class OpSource {
 public:
  virtual ~OpSource() = default;
  virtual std::optional<Op> next(std::size_t worker, double now_s) = 0;
  virtual std::size_t workers(double now_s) const = 0;
  virtual std::vector<double> change_times() const { return {}; }
  virtual double think_time_us() const { return 0; }
};

class WorkloadSource : public OpSource {
 public:
  explicit WorkloadSource(WorkloadSpec spec) : spec_(std::move(spec)) {
    if (spec_.distribution == Distribution::Zipfian)
      zipf_ = std::make_shared<ZipfTable>(spec_.items(), spec_.zipf_theta);
  }
  std::optional<Op> next(std::size_t worker, double) override {
    while (gens_.size() <= worker) gens_.emplace_back(spec_, gens_.size(), zipf_);
    return gens_[worker].next();
  }
  std::size_t workers(double now_s) const override { return phase_workers(spec_.phases, now_s); }
  std::vector<double> change_times() const override {
    std::vector<double> out;
    for (const auto& p : spec_.phases) out.push_back(p.start_s);
    return out;
  }
  double think_time_us() const override { return spec_.think_time_us; }
  const WorkloadSpec& spec() const { return spec_; }

 private:
  WorkloadSpec spec_;
  std::shared_ptr<const ZipfTable> zipf_;
  std::vector<Generator> gens_;
};

// Trace records consumed in order by a fixed pool of workers.
class TraceSource : public OpSource {
 public:
  TraceSource(const std::vector<TraceRecord>& recs, std::size_t workers) : recs_(recs), workers_(workers) {}
  std::optional<Op> next(std::size_t, double) override {
    if (pos_ >= recs_.size()) return std::nullopt;
    return recs_[pos_++].op;
  }
  std::size_t workers(double) const override { return workers_; }

 private:
  const std::vector<TraceRecord>& recs_;
  std::size_t workers_;
  std::size_t pos_ = 0;
};

class Simulator {
 public:
  using IntervalHook = std::function<void(const IntervalStats&)>;
  using TickHook = std::function<void(Simulator&, double now_s)>;

  Simulator(SimConfig cfg, std::unique_ptr<Policy> policy)
      : cfg_(std::move(cfg)),
        devices_{Device(cfg_.perf, 0), Device(cfg_.cap, 1)},
        space_(cfg_.perf.capacity, cfg_.cap.capacity,
               cfg_.logical_capacity ? cfg_.logical_capacity : cfg_.perf.capacity + cfg_.cap.capacity,
               cfg_.watermark_fraction),
        policy_(std::move(policy)),
        rng_(mix_seed(cfg_.seed, 0x5eedull)) {
    if (!(cfg_.tick_s > 0) || !(cfg_.metrics_interval_s > 0))
      throw Error(ErrorKind::Config, "tick and metrics intervals must be > 0");
    if (cfg_.copy_concurrency == 0) throw Error(ErrorKind::Config, "copy concurrency must be > 0");
    for (Tier t : {Tier::Performance, Tier::Capacity})
      nominal_[tier_index(t)] = device(t).spec().service_time_us(OpKind::Read, cfg_.nominal_access);
  }

  AddressSpace& space() { return space_; }
  const AddressSpace& space() const { return space_; }
  Policy& policy() { return *policy_; }
  Device& device(Tier t) { return devices_[tier_index(t)]; }
  const Device& device(Tier t) const { return devices_[tier_index(t)]; }
  const SimConfig& config() const { return cfg_; }
  const std::vector<IntervalStats>& intervals() const { return intervals_; }
  const SimTotals& totals() const { return totals_; }
  const LatencyHistogram& run_histogram() const { return run_hist_; }
  double now_s() const { return now_ / kUsPerSecond; }

  void on_interval(IntervalHook h) { interval_hook_ = std::move(h); }
  void on_tick(TickHook h) { tick_hook_ = std::move(h); }

  void populate(std::uint64_t segments) {
    if (segments > space_.segment_count()) throw Error(ErrorKind::Config, "working set exceeds the logical space");
    policy_->populate(space_, segments);
  }

  // Closed loop for `duration_s` simulated seconds from the current time,
  // then drain outstanding requests and copies.
  void run(OpSource& src, double duration_s) {
    source_ = &src;
    begin(duration_s);
    for (double t : src.change_times())
      if (t * kUsPerSecond >= now_ && t * kUsPerSecond < end_) push(t * kUsPerSecond, TimerKind::Phase, 0);
    push(now_, TimerKind::Phase, 0);
    loop();
    source_ = nullptr;
  }

  // Open loop: each record is issued at its timestamp (relative to now).
  void replay(const std::vector<TraceRecord>& recs) {
    trace_ = &recs;
    double base = now_;
    double last = recs.empty() ? 0 : double(recs.back().timestamp_us);
    begin(last / kUsPerSecond + cfg_.metrics_interval_s);
    trace_base_ = base;
    if (!recs.empty()) push(base + double(recs[0].timestamp_us), TimerKind::Arrival, 0);
    loop();
    trace_ = nullptr;
  }

  // Device writes equal foreground writes plus completed copies, per device.
  bool accounting_closed() const {
    for (std::size_t d = 0; d < 2; ++d)
      if (devices_[d].counters().bytes_written != totals_.fg_written[d] + totals_.copy_written_to[d])
        return false;
    return space_.check_accounting();
  }

  std::size_t queued_copies() const { return copy_queue_.size(); }

 private:
  enum class TimerKind : std::uint8_t { Issue, Control, Metrics, Phase, Arrival };
  struct Timer {
    double t;
    std::uint64_t seq;
    TimerKind kind;
    std::uint64_t arg;
    bool operator>(const Timer& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };
  struct OpSlot {
    double start = 0;
    Bytes bytes = 0;
    std::uint32_t pending = 0;
    std::size_t worker = kNoWorker;
  };
  struct CopySlot {
    BackgroundCopy copy;
    bool writing = false;
  };
  static constexpr std::size_t kNoWorker = std::numeric_limits<std::size_t>::max();
  static constexpr std::uint64_t kCopyTag = std::uint64_t{1} << 63;

  void push(double t, TimerKind k, std::uint64_t arg) { timers_.push({t, timer_seq_++, k, arg}); }

  void begin(double duration_s) {
    start_ = now_;
    end_ = now_ + duration_s * kUsPerSecond;
    last_metrics_ = now_;
    next_metrics_ = now_ + cfg_.metrics_interval_s * kUsPerSecond;
    push(now_ + cfg_.tick_s * kUsPerSecond, TimerKind::Control, 0);
    push(next_metrics_, TimerKind::Metrics, 0);
    for (auto& d : devices_) d.sample();
    snapshot_counters();
  }

  void loop() {
    while (true) {
      double td = std::numeric_limits<double>::infinity();
      for (auto& d : devices_)
        if (auto n = d.next_completion()) td = std::min(td, *n);
      double tt = timers_.empty() ? std::numeric_limits<double>::infinity() : timers_.top().t;
      if (td == std::numeric_limits<double>::infinity() && tt == std::numeric_limits<double>::infinity()) break;
      if (tt <= td) {
        Timer tm = timers_.top();
        timers_.pop();
        now_ = std::max(now_, tm.t);
        fire(tm);
      } else {
        now_ = std::max(now_, td);
        done_.clear();
        for (auto& d : devices_) d.advance_into(now_, done_);
        for (const auto& c : done_) complete(c);
      }
    }
  }

  void fire(const Timer& tm) {
    switch (tm.kind) {
      case TimerKind::Issue: issue(tm.arg); break;
      case TimerKind::Phase: {
        if (now_ >= end_) break;
        std::size_t w = source_->workers(now_s());
        if (running_.size() < w) running_.resize(w, false);
        for (std::size_t i = 0; i < w; ++i)
          if (!running_[i]) {
            running_[i] = true;
            issue(i);
          }
        break;
      }
      case TimerKind::Control: control_tick(); break;
      case TimerKind::Metrics: metrics_tick(); break;
      case TimerKind::Arrival: {
        const auto& recs = *trace_;
        submit_op(recs[tm.arg].op, kNoWorker);
        if (tm.arg + 1 < recs.size())
          push(trace_base_ + double(recs[tm.arg + 1].timestamp_us), TimerKind::Arrival, tm.arg + 1);
        break;
      }
    }
  }

  void issue(std::size_t worker) {
    if (now_ >= end_ || worker >= source_->workers(now_s())) {
      running_[worker] = false;
      return;
    }
    auto op = source_->next(worker, now_s());
    if (!op) {
      running_[worker] = false;
      return;
    }
    submit_op(*op, worker);
  }

  std::uint32_t alloc_slot(Bytes bytes, std::size_t worker) {
    std::uint32_t id;
    if (!free_slots_.empty()) {
      id = free_slots_.back();
      free_slots_.pop_back();
    } else {
      id = std::uint32_t(slots_.size());
      slots_.emplace_back();
    }
    slots_[id] = {now_, bytes, 0, worker};
    return id;
  }

  void submit_op(const Op& op, std::size_t worker) {
    if (op.length == 0 || op.length % kSubpageSize || op.lba % kSubpageSize)
      throw Error(ErrorKind::Alignment, "op not subpage aligned");
    if (op.lba + op.length > space_.logical_capacity())
      throw Error(ErrorKind::Address, "op beyond logical space");
    auto slot = alloc_slot(op.length, worker);
    Bytes lba = op.lba, left = op.length;
    while (left > 0) {
      Resolved r = space_.resolve(lba);
      std::uint32_t n = std::min<std::uint64_t>(
          {left / kSubpageSize, kSubpagesPerSegment - r.subpage, kMaxAccessSubpages});
      SubpageRange range{r.subpage, n};
      auto& s = space_.segment(r.segment);
      if (!s.allocated()) {
        Tier t = policy_->allocation_tier(space_, r.segment, rng_);
        if (!space_.place(r.segment, t) && !space_.place(r.segment, other(t)))
          throw Error(ErrorKind::OutOfSpace, "both devices are full");
      }
      AddressSpace::record_access(s, op.kind);
      Routed rt;
      if (op.kind == OpKind::Read) {
        bool mirrored = s.mirrored();
        rt = policy_->route_read(space_, r.segment, range, rng_);
        if (cfg_.check_reads) check_read(r.segment, range, rt);
        if (mirrored) {
          auto cap = std::uint64_t(std::popcount(rt.capacity_mask));
          mirrored_reads_[1] += cap;
          mirrored_reads_[0] += n - cap;
        }
      } else {
        side_.clear();
        rt = policy_->route_write(space_, r.segment, range, rng_, side_);
        for (const auto& c : side_) copy_queue_.push_back(c);
      }
      for (std::uint8_t i = 0; i < rt.count; ++i) {
        const auto& p = rt.parts[i];
        IoRequest req{std::uint32_t(tier_index(p.tier)), op.kind, p.offset, p.length, now_, true};
        devices_[tier_index(p.tier)].submit(req, now_, slot);
        ++slots_[slot].pending;
      }
      lba += Bytes(n) * kSubpageSize;
      left -= Bytes(n) * kSubpageSize;
    }
    if (!copy_queue_.empty()) pump_copies();
  }

  void check_read(std::uint64_t seg, SubpageRange r, const Routed& rt) {
    const auto& s = space_.segment(seg);
    for (std::uint32_t i = 0; i < r.count; ++i) {
      Tier t = (rt.capacity_mask >> i) & 1 ? Tier::Capacity : Tier::Performance;
      if (!space_.valid_devices(seg, r.first + i).contains(t))
        throw Error(ErrorKind::Contract, "read routed to a device without a valid copy");
      Bytes off = space_.physical_offset(s, t, r.first + i);
      bool covered = false;
      for (std::uint8_t k = 0; k < rt.count; ++k) {
        const auto& p = rt.parts[k];
        if (p.tier == t && off >= p.offset && off + kSubpageSize <= p.offset + p.length) covered = true;
      }
      if (!covered) throw Error(ErrorKind::Contract, "routed request does not cover the subpage");
    }
    ++totals_.read_checks;
  }

  void complete(const Completion& c) {
    if (c.tag & kCopyTag) {
      copy_done(std::size_t(c.tag & ~kCopyTag));
      return;
    }
    auto& slot = slots_[c.tag];
    if (c.request.op == OpKind::Write)
      totals_.fg_written[c.request.device] += c.request.length;
    else
      totals_.fg_read_bytes += c.request.length;
    if (c.request.op == OpKind::Read)
      interval_read_ += c.request.length;
    else
      interval_write_ += c.request.length;
    if (--slot.pending > 0) return;
    double lat = now_ - slot.start;
    hist_.add(lat);
    run_hist_.add(lat);
    interval_bytes_ += slot.bytes;
    ++totals_.ops;
    std::size_t w = slot.worker;
    free_slots_.push_back(std::uint32_t(c.tag));
    if (w != kNoWorker) {
      double think = source_->think_time_us();
      if (think > 0)
        push(now_ + think, TimerKind::Issue, w);
      else
        issue(w);
    }
  }

  void pump_copies() {
    while (active_copies_ < cfg_.copy_concurrency && !copy_queue_.empty()) {
      std::size_t id;
      if (!free_copy_slots_.empty()) {
        id = free_copy_slots_.back();
        free_copy_slots_.pop_back();
      } else {
        id = copy_slots_.size();
        copy_slots_.emplace_back();
      }
      copy_slots_[id] = {copy_queue_.front(), false};
      copy_queue_.pop_front();
      ++active_copies_;
      const auto& cp = copy_slots_[id].copy;
      IoRequest req{std::uint32_t(tier_index(cp.from)), OpKind::Read, cp.src_offset, cp.length, now_, false};
      devices_[tier_index(cp.from)].submit(req, now_, kCopyTag | id);
    }
  }

  void copy_done(std::size_t id) {
    auto& cs = copy_slots_[id];
    if (!cs.writing) {
      cs.writing = true;
      const auto& cp = cs.copy;
      IoRequest req{std::uint32_t(tier_index(cp.to)), OpKind::Write, cp.dst_offset, cp.length, now_, false};
      devices_[tier_index(cp.to)].submit(req, now_, kCopyTag | id);
      return;
    }
    totals_.copy_written[static_cast<std::size_t>(cs.copy.kind)] += cs.copy.length;
    totals_.copy_written_to[tier_index(cs.copy.to)] += cs.copy.length;
    --active_copies_;
    free_copy_slots_.push_back(id);
    pump_copies();
  }

  void control_tick() {
    if (now_ >= end_) return;
    TickInput in;
    in.now_s = now_s();
    in.epoch = epoch_;
    for (std::size_t d = 0; d < 2; ++d) {
      auto s = devices_[d].sample();
      in.latency[d] = s.avg_latency_us ? s.avg_latency_us : std::optional<double>(nominal_[d]);
      in.read_latency[d] = s.avg_read_latency_us ? s.avg_read_latency_us : std::optional<double>(nominal_[d]);
      last_latency_[d] = s.avg_latency_us;
    }
    ticks_out_.clear();
    policy_->tick(space_, in, ticks_out_);
    for (const auto& c : ticks_out_) copy_queue_.push_back(c);
    ++epoch_;
    space_.decay(epoch_);
    if (tick_hook_) tick_hook_(*this, now_s());
    pump_copies();
    double next = now_ + cfg_.tick_s * kUsPerSecond;
    if (next < end_) push(next, TimerKind::Control, 0);
  }

  void snapshot_counters() {
    for (std::size_t d = 0; d < 2; ++d) last_counters_[d] = devices_[d].counters();
  }

  void metrics_tick() {
    IntervalStats st;
    double span = now_ - last_metrics_;
    st.time_s = now_s();
    st.throughput_bps = span > 0 ? double(interval_bytes_) / (span / kUsPerSecond) : 0;
    st.p50_us = hist_.percentile(0.50);
    st.p99_us = hist_.percentile(0.99);
    st.p999_us = hist_.percentile(0.999);
    st.offload_ratio = policy_->offload_ratio();
    st.mig_to_perf_bytes = totals_.copy_written[0];
    st.mig_to_cap_bytes = totals_.copy_written[1];
    st.mirror_bytes = totals_.copy_written[2];
    st.clean_bytes = totals_.copy_written[3];
    for (std::size_t d = 0; d < 2; ++d) {
      const auto& c = devices_[d].counters();
      const auto& l = last_counters_[d];
      double cap = span * double(devices_[d].spec().parallelism);
      st.util[d] = cap > 0 ? std::min(1.0, (c.busy_us - l.busy_us) / cap) : 0;
      st.queue_depth[d] = devices_[d].in_flight();
      st.device_read_bytes[d] = c.bytes_read - l.bytes_read;
      st.device_write_bytes[d] = c.bytes_written - l.bytes_written;
      auto fg = c.fg_ops - l.fg_ops;
      if (fg > 0) st.fg_latency_us[d] = (c.latency_sum - l.latency_sum) / double(fg);
    }
    st.mirrored_read_subpages = mirrored_reads_;
    st.read_bytes = interval_read_;
    st.write_bytes = interval_write_;
    st.workers = source_ ? source_->workers(std::max(0.0, now_s() - 1e-9)) : 0;
    st.mirrored_segments = space_.mirrored_segments();
    intervals_.push_back(st);
    if (interval_hook_) interval_hook_(st);

    snapshot_counters();
    hist_.reset();
    interval_bytes_ = interval_read_ = interval_write_ = 0;
    mirrored_reads_ = {0, 0};
    last_metrics_ = now_;
    next_metrics_ = now_ + cfg_.metrics_interval_s * kUsPerSecond;
    if (next_metrics_ <= end_ + 1e-6) push(next_metrics_, TimerKind::Metrics, 0);
  }

  SimConfig cfg_;
  std::array<Device, 2> devices_;
  AddressSpace space_;
  std::unique_ptr<Policy> policy_;
  Rng rng_;
  std::array<double, 2> nominal_{};

  OpSource* source_ = nullptr;
  const std::vector<TraceRecord>* trace_ = nullptr;
  double trace_base_ = 0;
  std::vector<bool> running_;

  double now_ = 0, start_ = 0, end_ = 0, last_metrics_ = 0, next_metrics_ = 0;
  std::priority_queue<Timer, std::vector<Timer>, std::greater<>> timers_;
  std::uint64_t timer_seq_ = 0;
  std::uint64_t epoch_ = 0;
  std::vector<Completion> done_;

  std::vector<OpSlot> slots_;
  std::vector<std::uint32_t> free_slots_;
  std::vector<BackgroundCopy> side_, ticks_out_;
  std::deque<BackgroundCopy> copy_queue_;
  std::vector<CopySlot> copy_slots_;
  std::vector<std::size_t> free_copy_slots_;
  std::size_t active_copies_ = 0;

  LatencyHistogram hist_, run_hist_;
  Bytes interval_bytes_ = 0, interval_read_ = 0, interval_write_ = 0;
  std::array<std::uint64_t, 2> mirrored_reads_{};
  std::array<DeviceCounters, 2> last_counters_{};
  std::array<std::optional<double>, 2> last_latency_{};
  std::vector<IntervalStats> intervals_;
  SimTotals totals_;
  IntervalHook interval_hook_;
  TickHook tick_hook_;
};

}  // namespace most
