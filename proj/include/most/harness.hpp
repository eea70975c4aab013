#pragma once

// Experiment runner, convergence and endurance arithmetic, calibration,
// parameter sweeps and CSV output.

#include <cstdio>
#include <future>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "most/config.hpp"
#include "most/simulator.hpp"

namespace most {

inline constexpr double kSecondsPerDay = 86400.0;

inline double dwpd(double bytes_written, double capacity_bytes, double duration_s) {
  if (!(capacity_bytes > 0) || !(duration_s > 0)) throw Error(ErrorKind::Contract, "capacity and duration must be > 0");
  return bytes_written / (duration_s / kSecondsPerDay) / capacity_bytes;
}

inline double lifespan_days(double rated_dwpd, double rated_days, double actual_dwpd) {
  if (!(actual_dwpd > 0)) throw Error(ErrorKind::Contract, "actual DWPD must be > 0");
  return rated_dwpd * rated_days / actual_dwpd;
}

// Time from `change_s` to the first sample that starts `run` consecutive
// samples within `band` of `target`. Empty when the series never settles.
inline std::optional<double> detect_convergence(std::span<const double> times, std::span<const double> values,
                                                double change_s, double target, double band = 0.05,
                                                std::size_t run = 5) {
  const double tol = band * std::abs(target);
  std::size_t streak = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] <= change_s) continue;
    if (std::abs(values[i] - target) <= tol) {
      if (++streak == run) return times[i - run + 1] - change_s;
    } else {
      streak = 0;
    }
  }
  return std::nullopt;
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) return 0;
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// Mean over the final third of the samples with time in (from, to].
inline double steady_mean(std::span<const double> times, std::span<const double> values, double from, double to) {
  std::vector<double> w;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] > from && times[i] <= to + 1e-9) w.push_back(values[i]);
  if (w.empty()) return 0;
  std::size_t skip = w.size() - std::max<std::size_t>(1, w.size() / 3);
  return mean_of(std::span<const double>(w).subspan(skip));
}

struct Convergence {
  double change_s = 0;
  double target_bps = 0;
  std::optional<double> seconds;
};

struct RunResult {
  std::string policy;
  double intensity = 1;
  std::size_t workers_1x = 0;
  std::vector<IntervalStats> intervals;
  SimTotals totals;
  std::array<Bytes, 2> device_bytes_written{};
  double steady_throughput_bps = 0;
  double steady_p99_us = 0;
  std::vector<Convergence> convergence;
  bool accounting_closed = false;

  std::vector<double> times() const {
    std::vector<double> t;
    for (const auto& s : intervals) t.push_back(s.time_s);
    return t;
  }
  std::vector<double> throughput() const {
    std::vector<double> v;
    for (const auto& s : intervals) v.push_back(s.throughput_bps);
    return v;
  }
  Bytes policy_copy_bytes() const {
    return totals.copy_written[0] + totals.copy_written[1] + totals.copy_written[2] + totals.copy_written[3];
  }
};

inline void summarize(RunResult& r, const std::vector<Phase>& phases, double duration_s) {
  auto t = r.times();
  auto v = r.throughput();
  r.steady_throughput_bps = steady_mean(t, v, 0, duration_s);
  std::vector<double> p99;
  for (const auto& s : r.intervals) p99.push_back(s.p99_us);
  r.steady_p99_us = steady_mean(t, p99, 0, duration_s);
  for (std::size_t i = 1; i < phases.size(); ++i) {
    if (phases[i].start_s >= duration_s || phases[i].workers == phases[i - 1].workers) continue;
    double until = i + 1 < phases.size() ? std::min(duration_s, phases[i + 1].start_s) : duration_s;
    Convergence c;
    c.change_s = phases[i].start_s;
    c.target_bps = steady_mean(t, v, c.change_s, until);
    std::vector<double> ts, vs;
    for (std::size_t k = 0; k < t.size(); ++k)
      if (t[k] <= until + 1e-9) {
        ts.push_back(t[k]);
        vs.push_back(v[k]);
      }
    c.seconds = detect_convergence(ts, vs, c.change_s, c.target_bps);
    r.convergence.push_back(c);
  }
}

inline Bytes working_set_segments(const WorkloadSpec& w) { return (w.working_set + kSegmentSize - 1) / kSegmentSize; }

inline std::unique_ptr<Simulator> make_simulator(const ExperimentConfig& cfg) {
  cfg.validate();
  auto sim = std::make_unique<Simulator>(cfg.sim_config(), make_policy(cfg));
  sim->populate(working_set_segments(cfg.workload));
  return sim;
}

inline RunResult collect(const Simulator& sim, const ExperimentConfig& cfg, const std::vector<Phase>& phases,
                         std::size_t workers_1x) {
  RunResult r;
  r.policy = cfg.policy;
  r.intensity = cfg.intensity;
  r.workers_1x = workers_1x;
  r.intervals = sim.intervals();
  r.totals = sim.totals();
  for (Tier t : {Tier::Performance, Tier::Capacity})
    r.device_bytes_written[tier_index(t)] = sim.device(t).counters().bytes_written;
  r.accounting_closed = sim.accounting_closed();
  summarize(r, phases, cfg.duration_s);
  return r;
}

// Run with an explicit worker schedule (absolute simulated seconds).
inline RunResult run_schedule(const ExperimentConfig& cfg, std::vector<Phase> phases, std::size_t workers_1x = 0) {
  auto sim = make_simulator(cfg);
  WorkloadSpec w = cfg.workload;
  w.phases = phases;
  WorkloadSource src(w);
  sim->run(src, cfg.duration_s);
  return collect(*sim, cfg, phases, workers_1x);
}

// Performance-device utilization under hotness tiering at a constant
// worker count, averaged over the second half of a short run.
inline double perf_utilization(const ExperimentConfig& base, std::size_t workers, double probe_s = 4.0) {
  ExperimentConfig c = base;
  c.policy = "hemem";
  c.duration_s = probe_s;
  c.metrics_interval_s = std::min(0.5, probe_s / 4);
  auto r = run_schedule(c, {{0, workers}});
  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : r.intervals)
    if (s.time_s > probe_s / 2) {
      sum += s.util[0];
      ++n;
    }
  return n ? sum / double(n) : 0;
}

// Smallest worker count driving the performance device to `target`
// utilization: doubling, then bisection.
inline std::size_t calibrate(const ExperimentConfig& cfg, double target = 0.95, std::size_t max_workers = 4096) {
  std::size_t hi = 1;
  while (perf_utilization(cfg, hi) < target) {
    if (hi >= max_workers) throw Error(ErrorKind::Config, "calibration did not saturate the performance device");
    hi *= 2;
  }
  std::size_t lo = hi / 2;  // lo fails (or is 0), hi passes
  while (hi - lo > 1) {
    std::size_t mid = lo + (hi - lo) / 2;
    if (perf_utilization(cfg, mid) >= target)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

inline RunResult run_experiment(const ExperimentConfig& cfg, std::optional<std::size_t> workers_1x = {}) {
  std::size_t w1 = workers_1x.value_or(cfg.base_workers);
  if (w1 == 0 && cfg.needs_calibration()) w1 = calibrate(cfg);
  return run_schedule(cfg, cfg.worker_phases(w1), w1);
}

// ---------------------------------------------------------------------------
// CSV

inline const char* kCsvHeader =
    "time_s,policy,intensity,throughput_mbps,p50_us,p99_us,p999_us,offload_ratio,mig_to_perf_bytes,"
    "mig_to_cap_bytes,mirror_bytes,clean_bytes,dev0_util,dev1_util";

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline void write_csv_row(std::ostream& os, const std::string& policy, double intensity, const IntervalStats& s) {
  os << fmt("%.3f", s.time_s) << ',' << policy << ',' << fmt("%.3f", intensity) << ','
     << fmt("%.3f", s.throughput_bps / 1e6) << ',' << fmt("%.1f", s.p50_us) << ',' << fmt("%.1f", s.p99_us) << ','
     << fmt("%.1f", s.p999_us) << ',' << fmt("%.4f", s.offload_ratio) << ',' << s.mig_to_perf_bytes << ','
     << s.mig_to_cap_bytes << ',' << s.mirror_bytes << ',' << s.clean_bytes << ',' << fmt("%.4f", s.util[0])
     << ',' << fmt("%.4f", s.util[1]) << '\n';
}

inline void write_csv(std::ostream& os, const RunResult& r, bool header = true) {
  if (header) os << kCsvHeader << '\n';
  for (const auto& s : r.intervals) write_csv_row(os, r.policy, r.intensity, s);
}

inline void write_summary(std::ostream& os, const RunResult& r) {
  os << "policy=" << r.policy << " intensity=" << fmt("%.3f", r.intensity) << " workers_1x=" << r.workers_1x
     << " steady_throughput_mbps=" << fmt("%.3f", r.steady_throughput_bps / 1e6)
     << " steady_p99_us=" << fmt("%.1f", r.steady_p99_us) << " mig_to_perf_bytes=" << r.totals.copy_written[0]
     << " mig_to_cap_bytes=" << r.totals.copy_written[1] << " mirror_bytes=" << r.totals.copy_written[2]
     << " clean_bytes=" << r.totals.copy_written[3] << " accounting_closed=" << (r.accounting_closed ? 1 : 0)
     << '\n';
  for (const auto& c : r.convergence)
    os << "convergence change_s=" << fmt("%.3f", c.change_s) << " target_mbps=" << fmt("%.3f", c.target_bps / 1e6)
       << " seconds=" << (c.seconds ? fmt("%.3f", *c.seconds) : std::string("none")) << '\n';
}

// ---------------------------------------------------------------------------
// Sweeps

struct Sweep {
  std::string key;
  std::vector<std::string> values;
};

// "policy=most,colloid++"
inline Sweep parse_sweep(const std::string& s) {
  auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::Config, "sweep '" + s + "' needs key=v1,v2");
  Sweep out{trim(s.substr(0, eq)), {}};
  std::stringstream ss(s.substr(eq + 1));
  std::string v;
  while (std::getline(ss, v, ','))
    if (!trim(v).empty()) out.values.push_back(trim(v));
  if (out.values.empty()) throw Error(ErrorKind::Config, "sweep '" + s + "' has no values");
  return out;
}

struct ComparePoint {
  std::vector<std::pair<std::string, std::string>> assignment;
  RunResult result;
};

// Cartesian product of the sweeps over a base config. The 1.0x worker
// count is calibrated once per distinct assignment of keys other than
// policy and intensity. Independent runs execute in parallel.
inline std::vector<ComparePoint> compare(const ConfigMap& base, const std::vector<Sweep>& sweeps,
                                         std::size_t threads = std::thread::hardware_concurrency()) {
  std::vector<std::vector<std::pair<std::string, std::string>>> points{{}};
  for (const auto& sw : sweeps) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& p : points)
      for (const auto& v : sw.values) {
        auto q = p;
        q.emplace_back(sw.key, v);
        next.push_back(q);
      }
    points = std::move(next);
  }
  std::vector<ExperimentConfig> cfgs;
  std::map<std::string, std::size_t> calibrated;
  std::vector<std::size_t> w1s;
  for (const auto& p : points) {
    ConfigMap m = base;
    std::string cal_key;
    for (const auto& [k, v] : p) {
      m[k] = v;
      if (k != "policy" && k != "intensity") cal_key += k + "=" + v + ";";
    }
    cfgs.push_back(build_config(m));
    auto& c = cfgs.back();
    std::size_t w1 = c.base_workers;
    if (w1 == 0 && c.needs_calibration()) {
      auto it = calibrated.find(cal_key);
      if (it == calibrated.end()) it = calibrated.emplace(cal_key, calibrate(c)).first;
      w1 = it->second;
    }
    w1s.push_back(w1);
  }
  std::vector<ComparePoint> out(points.size());
  threads = std::max<std::size_t>(1, threads);
  for (std::size_t start = 0; start < points.size(); start += threads) {
    std::vector<std::future<RunResult>> fs;
    for (std::size_t i = start; i < std::min(points.size(), start + threads); ++i)
      fs.push_back(std::async(std::launch::async, [&, i] { return run_experiment(cfgs[i], w1s[i]); }));
    for (std::size_t i = start; i < std::min(points.size(), start + threads); ++i) {
      out[i].assignment = points[i];
      out[i].result = fs[i - start].get();
    }
  }
  return out;
}

inline void write_compare_summary(std::ostream& os, const std::vector<ComparePoint>& pts) {
  if (pts.empty()) return;
  for (const auto& [k, v] : pts[0].assignment) os << k << ',';
  os << "workers_1x,steady_throughput_mbps,steady_p99_us,mig_to_perf_bytes,mig_to_cap_bytes,mirror_bytes,"
        "clean_bytes\n";
  for (const auto& p : pts) {
    for (const auto& [k, v] : p.assignment) os << v << ',';
    const auto& r = p.result;
    os << r.workers_1x << ',' << fmt("%.3f", r.steady_throughput_bps / 1e6) << ',' << fmt("%.1f", r.steady_p99_us)
       << ',' << r.totals.copy_written[0] << ',' << r.totals.copy_written[1] << ',' << r.totals.copy_written[2]
       << ',' << r.totals.copy_written[3] << '\n';
  }
}

// One row per (policy, intensity, metric).
inline void write_compare_long(std::ostream& os, const std::vector<ComparePoint>& pts) {
  os << "policy,intensity,metric,value\n";
  for (const auto& p : pts) {
    const auto& r = p.result;
    auto row = [&](const char* metric, const std::string& v) {
      os << r.policy << ',' << fmt("%.3f", r.intensity) << ',' << metric << ',' << v << '\n';
    };
    row("workers_1x", std::to_string(r.workers_1x));
    row("steady_throughput_mbps", fmt("%.3f", r.steady_throughput_bps / 1e6));
    row("steady_p99_us", fmt("%.1f", r.steady_p99_us));
    row("mig_to_perf_bytes", std::to_string(r.totals.copy_written[0]));
    row("mig_to_cap_bytes", std::to_string(r.totals.copy_written[1]));
    row("mirror_bytes", std::to_string(r.totals.copy_written[2]));
    row("clean_bytes", std::to_string(r.totals.copy_written[3]));
  }
}

}  // namespace most
