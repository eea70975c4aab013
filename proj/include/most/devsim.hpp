#pragma once

// Discrete-event model of a block device: `parallelism` FIFO servers whose
// service time depends on op and access size, with optional periodic
// background-activity windows that inflate service times.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "most/common.hpp"

namespace most {

struct SpikeSpec {
  double period_s = 0;
  double duration_s = 0;
  double latency_multiplier = 1;
};

// Table-style anchors at 4 KiB and 16 KiB. Bandwidths are whole-device
// figures (bytes/s) at saturation.
struct AccessProfile {
  double latency_4k_us = 0;
  double latency_16k_us = 0;
  double bandwidth_4k = 0;
  double bandwidth_16k = 0;
};

struct DeviceSpec {
  std::string name;
  AccessProfile read;
  AccessProfile write;
  std::uint32_t parallelism = 1;
  std::optional<SpikeSpec> spike;
  Bytes capacity = 0;

  void validate() const {
    auto check_profile = [&](const AccessProfile& p, const char* what) {
      if (!(p.latency_4k_us > 0 && p.latency_16k_us > 0))
        throw Error(ErrorKind::Config, name + ": " + what + " latencies must be > 0");
      if (!(p.bandwidth_4k > 0 && p.bandwidth_16k > 0))
        throw Error(ErrorKind::Config, name + ": " + what + " bandwidths must be > 0");
      // Each anchor's occupancy p*s/B must leave room for a transfer term.
      if (parallelism * double(4 * kKiB) / p.bandwidth_4k * kUsPerSecond < p.latency_4k_us ||
          parallelism * double(16 * kKiB) / p.bandwidth_16k * kUsPerSecond < p.latency_16k_us)
        throw Error(ErrorKind::Config,
                    name + ": " + what + " parallelism too low for the latency/bandwidth anchors");
    };
    if (parallelism < 1) throw Error(ErrorKind::Config, name + ": parallelism must be >= 1");
    check_profile(read, "read");
    check_profile(write, "write");
    if (capacity == 0 || capacity % kSegmentSize != 0)
      throw Error(ErrorKind::Config, name + ": capacity must be a positive multiple of 2MiB");
    if (spike) {
      if (spike->latency_multiplier < 1)
        throw Error(ErrorKind::Config, name + ": spike multiplier must be >= 1");
      if (!(spike->period_s > 0) || spike->duration_s < 0 || spike->duration_s > spike->period_s)
        throw Error(ErrorKind::Config, name + ": bad spike period/duration");
    }
  }

  // Base (fixed) latency at an access size; linear between anchors.
  double base_latency_us(OpKind op, Bytes length) const {
    const auto& p = profile(op);
    if (length <= 4 * kKiB) return p.latency_4k_us;
    if (length >= 16 * kKiB) return p.latency_16k_us;
    double f = double(length - 4 * kKiB) / double(12 * kKiB);
    return p.latency_4k_us + f * (p.latency_16k_us - p.latency_4k_us);
  }

  double bandwidth(OpKind op, Bytes length) const {
    const auto& p = profile(op);
    if (length <= 4 * kKiB) return p.bandwidth_4k;
    if (length >= 16 * kKiB) return p.bandwidth_16k;
    double f = double(length - 4 * kKiB) / double(12 * kKiB);
    return p.bandwidth_4k + f * (p.bandwidth_16k - p.bandwidth_4k);
  }

  // Per-server streaming rate, calibrated so that
  //   parallelism * s / (base(s) + s / rate(s)) == bandwidth(s).
  // Beyond 16 KiB the 16 KiB rate is reused.
  double per_server_bandwidth(OpKind op, Bytes length) const {
    Bytes s = std::clamp<Bytes>(length, 4 * kKiB, 16 * kKiB);
    double occupancy_us = parallelism * double(s) / bandwidth(op, s) * kUsPerSecond;
    double transfer_us = std::max(occupancy_us - base_latency_us(op, s), 1e-6);
    return double(s) / transfer_us * kUsPerSecond;
  }

  // Nominal (spike-free) service time of one request.
  double service_time_us(OpKind op, Bytes length) const {
    return base_latency_us(op, length) +
           double(length) / per_server_bandwidth(op, length) * kUsPerSecond;
  }

  // Closed-loop saturation rate for a single request size.
  double saturation_bandwidth(OpKind op, Bytes length) const {
    return parallelism * double(length) / service_time_us(op, length) * kUsPerSecond;
  }

  bool in_spike(SimTime t) const {
    if (!spike || spike->duration_s <= 0) return false;
    double period_us = spike->period_s * kUsPerSecond;
    double phase = std::fmod(t, period_us);
    return phase < spike->duration_s * kUsPerSecond;
  }

  const AccessProfile& profile(OpKind op) const { return op == OpKind::Read ? read : write; }
};

namespace presets {

// Fill a preset from read latency (4K/16K) and read/write bandwidths in
// GB/s. Parallelism is the smallest server count that reproduces every read
// anchor; write base latency is capped below the write occupancy so the
// write anchors stay reachable with the same servers.
inline DeviceSpec from_table(std::string name, double lat4, double lat16, double rd4, double rd16,
                             double wr4, double wr16, Bytes capacity) {
  constexpr double GB = 1e9;
  DeviceSpec d;
  d.name = std::move(name);
  d.capacity = capacity;
  d.read = {lat4, lat16, rd4 * GB, rd16 * GB};
  double need = std::max(rd4 * GB * lat4 / kUsPerSecond / double(4 * kKiB),
                         rd16 * GB * lat16 / kUsPerSecond / double(16 * kKiB));
  d.parallelism = static_cast<std::uint32_t>(std::floor(need)) + 1;
  auto write_base = [&](double lat, double bw, Bytes s) {
    double occ = d.parallelism * double(s) / (bw * GB) * kUsPerSecond;
    return occ > lat ? lat : 0.9 * occ;
  };
  d.write = {write_base(lat4, wr4, 4 * kKiB), write_base(lat16, wr16, 16 * kKiB), wr4 * GB,
             wr16 * GB};
  return d;
}

inline DeviceSpec optane(Bytes capacity = 4 * kGiB) {
  return from_table("optane", 11, 18, 2.2, 2.4, 2.2, 2.2, capacity);
}
inline DeviceSpec nvme_pcie4(Bytes capacity = 8 * kGiB) {
  return from_table("nvme-pcie4", 66, 86, 1.5, 3.3, 1.9, 2.3, capacity);
}
inline DeviceSpec nvme_pcie3(Bytes capacity = 8 * kGiB) {
  return from_table("nvme-pcie3", 82, 90, 1.0, 1.6, 1.5, 1.6, capacity);
}
inline DeviceSpec nvme_rdma(Bytes capacity = 8 * kGiB) {
  return from_table("nvme-rdma", 88, 114, 1.2, 2.7, 1.7, 2.3, capacity);
}
inline DeviceSpec sata(Bytes capacity = 8 * kGiB) {
  return from_table("sata", 104, 146, 0.38, 0.5, 0.38, 0.5, capacity);
}
// PCIe 3.0 flash with periodic garbage-collection stalls.
inline DeviceSpec flash_gc(Bytes capacity = 8 * kGiB) {
  auto d = nvme_pcie3(capacity);
  d.name = "flash-gc";
  d.spike = SpikeSpec{10.0, 0.5, 8.0};
  return d;
}

inline DeviceSpec by_name(const std::string& name, Bytes capacity) {
  if (name == "optane") return optane(capacity);
  if (name == "nvme-pcie4") return nvme_pcie4(capacity);
  if (name == "nvme-pcie3" || name == "nvme") return nvme_pcie3(capacity);
  if (name == "nvme-rdma") return nvme_rdma(capacity);
  if (name == "sata") return sata(capacity);
  if (name == "flash-gc") return flash_gc(capacity);
  throw Error(ErrorKind::Config, "unknown device preset '" + name + "'");
}

}  // namespace presets

struct IoRequest {
  std::uint32_t device = 0;
  OpKind op = OpKind::Read;
  Bytes offset = 0;
  Bytes length = 0;
  SimTime issue_time = 0;
  // Background copies (migration, mirroring, cleaning) are served like any
  // other request but are left out of the latency signal.
  bool foreground = true;
};

struct DeviceCounters {
  std::uint64_t ops_completed = 0;
  Bytes bytes_read = 0;
  Bytes bytes_written = 0;
  double latency_sum = 0;  // foreground requests only, microseconds
  std::uint64_t fg_ops = 0;
  std::uint64_t fg_read_ops = 0;
  double fg_read_latency_sum = 0;
  double busy_us = 0;  // summed service time of completed requests
};

struct CounterSample {
  std::optional<double> avg_latency_us;       // none when no foreground op completed
  std::optional<double> avg_read_latency_us;  // foreground reads only
  Bytes bytes_moved = 0;
  std::uint64_t ops = 0;
  double busy_us = 0;
};

struct Completion {
  SimTime time = 0;
  std::uint64_t tag = 0;
  IoRequest request;
  double latency_us = 0;
};

class Device {
 public:
  explicit Device(DeviceSpec spec, std::uint32_t id = 0) : spec_(std::move(spec)), id_(id) {
    spec_.validate();
    server_free_.assign(spec_.parallelism, 0.0);
  }

  const DeviceSpec& spec() const { return spec_; }
  std::uint32_t id() const { return id_; }

  // Enqueue a request and return its completion time. Requests must arrive in
  // non-decreasing time order; FIFO order then coincides with picking the
  // earliest-free server.
  SimTime submit(const IoRequest& req, SimTime now, std::uint64_t tag = 0) {
    if (now < now_) throw Error(ErrorKind::Contract, "submit time went backwards");
    if (req.length == 0 || req.length % kSubpageSize != 0 || req.offset % kSubpageSize != 0)
      throw Error(ErrorKind::Alignment, "request not subpage aligned");
    if (req.offset + req.length > spec_.capacity || req.offset + req.length < req.offset)
      throw Error(ErrorKind::Address, "request beyond device capacity");
    now_ = now;

    auto server = std::min_element(server_free_.begin(), server_free_.end());
    SimTime start = std::max(now, *server);
    double service = spec_.service_time_us(req.op, req.length);
    if (spec_.in_spike(start)) service *= spec_.spike->latency_multiplier;
    SimTime done = start + service;
    *server = done;

    Pending p;
    p.c.time = done;
    p.c.tag = tag;
    p.c.request = req;
    p.c.request.issue_time = now;
    p.c.latency_us = done - now;
    p.service = service;
    p.seq = seq_++;
    pending_.push(p);
    return done;
  }

  std::optional<SimTime> next_completion() const {
    if (pending_.empty()) return std::nullopt;
    return pending_.top().c.time;
  }

  std::size_t in_flight() const { return pending_.size(); }

  // Fire every completion with time <= now, in (time, submission) order.
  void advance_into(SimTime now, std::vector<Completion>& out) {
    if (now < now_) throw Error(ErrorKind::Contract, "advance time went backwards");
    now_ = now;
    while (!pending_.empty() && pending_.top().c.time <= now) {
      const Pending& p = pending_.top();
      account(p);
      out.push_back(p.c);
      pending_.pop();
    }
  }

  std::vector<Completion> advance(SimTime now) {
    std::vector<Completion> out;
    advance_into(now, out);
    return out;
  }

  const DeviceCounters& counters() const { return counters_; }

  // Deltas since the previous sample.
  CounterSample sample() {
    CounterSample s;
    const auto& c = counters_;
    std::uint64_t fg = c.fg_ops - last_.fg_ops;
    if (fg > 0) s.avg_latency_us = (c.latency_sum - last_.latency_sum) / double(fg);
    std::uint64_t fr = c.fg_read_ops - last_.fg_read_ops;
    if (fr > 0) s.avg_read_latency_us = (c.fg_read_latency_sum - last_.fg_read_latency_sum) / double(fr);
    s.bytes_moved = (c.bytes_read - last_.bytes_read) + (c.bytes_written - last_.bytes_written);
    s.ops = c.ops_completed - last_.ops_completed;
    s.busy_us = c.busy_us - last_.busy_us;
    last_ = c;
    return s;
  }

  SimTime now() const { return now_; }

 private:
  struct Pending {
    Completion c;
    double service = 0;
    std::uint64_t seq = 0;
    bool operator>(const Pending& o) const {
      return c.time != o.c.time ? c.time > o.c.time : seq > o.seq;
    }
  };

  void account(const Pending& p) {
    auto& c = counters_;
    c.ops_completed++;
    if (p.c.request.op == OpKind::Read)
      c.bytes_read += p.c.request.length;
    else
      c.bytes_written += p.c.request.length;
    c.busy_us += p.service;
    if (p.c.request.foreground) {
      c.fg_ops++;
      c.latency_sum += p.c.latency_us;
      if (p.c.request.op == OpKind::Read) {
        c.fg_read_ops++;
        c.fg_read_latency_sum += p.c.latency_us;
      }
    }
  }

  DeviceSpec spec_;
  std::uint32_t id_;
  std::vector<SimTime> server_free_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pending_;
  std::uint64_t seq_ = 0;
  SimTime now_ = 0;
  DeviceCounters counters_;
  DeviceCounters last_;
};

}  // namespace most
