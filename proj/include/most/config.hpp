#pragma once

// Experiment configuration: `key = value` lines, `#` comments. Unknown keys
// are rejected. Sizes accept K/M/G/T suffixes (binary).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <cstring>

#include "most/baselines.hpp"
#include "most/devsim.hpp"
#include "most/mostcore.hpp"
#include "most/simulator.hpp"
#include "most/workloads.hpp"

namespace most {

using ConfigMap = std::map<std::string, std::string>;

inline std::string trim(std::string s) {
  auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Parse, "config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw Error(ErrorKind::Parse, "config line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second)
      throw Error(ErrorKind::Parse, "config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return out;
}

inline ConfigMap load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::Config, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

inline double parse_number(const std::string& key, const std::string& v) {
  char* end = nullptr;
  double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d))
    throw Error(ErrorKind::Config, key + ": expected a number, got '" + v + "'");
  return d;
}

inline Bytes parse_size(const std::string& key, std::string v) {
  Bytes mult = 1;
  for (const char* suffix : {"iB", "B"})
    if (v.size() > std::strlen(suffix) && v.ends_with(suffix) && std::isalpha(v[v.size() - std::strlen(suffix) - 1]))
      v.erase(v.size() - std::strlen(suffix));
  if (!v.empty()) {
    switch (std::toupper(v.back())) {
      case 'K': mult = kKiB; break;
      case 'M': mult = kMiB; break;
      case 'G': mult = kGiB; break;
      case 'T': mult = 1024 * kGiB; break;
      default: break;
    }
    if (mult != 1) v.pop_back();
  }
  double d = parse_number(key, v);
  if (d < 0) throw Error(ErrorKind::Config, key + ": size must be >= 0");
  return static_cast<Bytes>(std::llround(d * double(mult)));
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorKind::Config, key + ": expected a boolean, got '" + v + "'");
}

enum class PhaseUnit : std::uint8_t { Workers, Intensity };

struct PhaseSpec {
  double start_s = 0;
  double level = 0;  // workers or intensity multiple, per PhaseUnit
};

// "0:1.0,30:2.0"
inline std::vector<PhaseSpec> parse_phases(const std::string& key, const std::string& v) {
  std::vector<PhaseSpec> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    auto c = item.find(':');
    if (c == std::string::npos) throw Error(ErrorKind::Config, key + ": phase '" + item + "' needs start:level");
    PhaseSpec p{parse_number(key, trim(item.substr(0, c))), parse_number(key, trim(item.substr(c + 1)))};
    if (p.start_s < 0 || p.level < 0) throw Error(ErrorKind::Config, key + ": negative phase value");
    if (!out.empty() && p.start_s < out.back().start_s)
      throw Error(ErrorKind::Config, key + ": phases must be time-sorted");
    out.push_back(p);
  }
  return out;
}

inline const std::vector<std::string>& policy_names() {
  static const std::vector<std::string> names{"most",   "striping",  "hemem",     "batman",
                                              "colloid", "colloid+", "colloid++", "nhc"};
  return names;
}

struct DeviceConfig {
  std::string preset;
  Bytes capacity = 0;
  std::optional<SpikeSpec> spike;

  DeviceSpec build() const {
    auto d = presets::by_name(preset, capacity);
    if (spike) d.spike = spike;
    d.validate();
    return d;
  }
};

struct ExperimentConfig {
  DeviceConfig perf{"optane", 4 * kGiB, {}};
  DeviceConfig cap{"nvme-pcie3", 8 * kGiB, {}};
  std::string policy = "most";
  MostConfig most;
  Bytes stripe_unit = kSegmentSize;
  Bytes hemem_budget = 64 * kMiB;
  std::size_t hemem_hot_threshold = 8;
  std::optional<double> batman_ratio;  // empty: read-bandwidth ratio at the access size
  Bytes batman_budget = 64 * kMiB;
  std::optional<double> colloid_theta, colloid_alpha;
  double colloid_step = 0.02;
  Bytes colloid_limit = 320 * kMiB;
  NhcConfig nhc;

  WorkloadSpec workload;
  std::vector<PhaseSpec> phases;
  PhaseUnit phase_unit = PhaseUnit::Intensity;
  double intensity = 1.0;
  std::size_t base_workers = 0;  // workers at intensity 1.0; 0 = calibrate

  double duration_s = 30;
  double metrics_interval_s = 1.0;
  Bytes logical_capacity = 0;  // 0: hierarchy minus the mirror reserve
  std::size_t copy_concurrency = 32;
  bool check_reads = true;
  std::uint64_t seed = 1;
  std::string output;
  bool replay_closed = false;
  std::size_t replay_workers = 32;

  double tick_s() const { return most.optimizer.tuning_interval_s; }

  Bytes resolved_logical() const {
    if (logical_capacity) return logical_capacity;
    Bytes total = perf.capacity + cap.capacity;
    auto reserve = Bytes(double(total) * most.optimizer.mirrored_max_fraction);
    return (total - reserve) / kSegmentSize * kSegmentSize;
  }

  // Worker schedule for a given 1.0x worker count.
  std::vector<Phase> worker_phases(std::size_t workers_1x) const {
    std::vector<PhaseSpec> ps = phases.empty() ? std::vector<PhaseSpec>{{0, 1.0}} : phases;
    std::vector<Phase> out;
    for (const auto& p : ps) {
      if (phase_unit == PhaseUnit::Workers)
        out.push_back({p.start_s, std::size_t(std::llround(p.level))});
      else
        out.push_back({p.start_s, std::size_t(std::llround(p.level * intensity * double(workers_1x)))});
    }
    return out;
  }

  bool needs_calibration() const { return phase_unit == PhaseUnit::Intensity && base_workers == 0; }

  SimConfig sim_config() const {
    SimConfig s;
    s.perf = perf.build();
    s.cap = cap.build();
    s.logical_capacity = resolved_logical();
    s.watermark_fraction = most.watermark_fraction;
    s.tick_s = tick_s();
    s.metrics_interval_s = metrics_interval_s;
    s.copy_concurrency = copy_concurrency;
    s.check_reads = check_reads;
    s.nominal_access = workload.access_size;
    s.seed = seed;
    return s;
  }

  void validate() const {
    most.optimizer.validate();
    if (std::find(policy_names().begin(), policy_names().end(), policy) == policy_names().end())
      throw Error(ErrorKind::Config, "policy: unknown policy '" + policy + "'");
    if (!(duration_s > 0)) throw Error(ErrorKind::Config, "duration_s must be > 0");
    if (!(metrics_interval_s > 0) || metrics_interval_s > duration_s)
      throw Error(ErrorKind::Config, "metrics_interval_s must be in (0, duration_s]");
    if (!(intensity >= 0)) throw Error(ErrorKind::Config, "intensity must be >= 0");
    if (!(most.watermark_fraction >= 0 && most.watermark_fraction < 1))
      throw Error(ErrorKind::Config, "watermark_fraction must be in [0,1)");
    if (copy_concurrency == 0) throw Error(ErrorKind::Config, "sim.copy_concurrency must be > 0");
    perf.build();
    cap.build();
    if (resolved_logical() > perf.capacity + cap.capacity)
      throw Error(ErrorKind::Config, "logical_capacity exceeds the two devices");
    workload.validate(resolved_logical());
    if (policy == "nhc" && workload.working_set > cap.capacity)
      throw Error(ErrorKind::Config, "workload.working_set exceeds the capacity device (nhc keeps every block there)");
  }
};

inline ExperimentConfig build_config(const ConfigMap& m) {
  ExperimentConfig c;
  c.workload.working_set = 7 * kGiB;
  c.workload.think_time_us = 1000;
  static const std::set<std::string> known{
      "policy", "intensity", "seed", "duration_s", "metrics_interval_s", "output", "logical_capacity",
      "perf.preset", "perf.capacity", "perf.spike_period_s", "perf.spike_duration_s", "perf.spike_multiplier",
      "cap.preset", "cap.capacity", "cap.spike_period_s", "cap.spike_duration_s", "cap.spike_multiplier",
      "sim.copy_concurrency", "sim.check_reads",
      "theta", "ratio_step", "tuning_interval_ms", "ewma_alpha", "offload_ratio_max", "mirrored_max_fraction",
      "watermark_fraction", "migration_budget_bytes", "clean_threshold", "subpages_enabled",
      "striping.stripe_unit_bytes", "hemem.migration_budget_bytes", "hemem.hot_threshold", "batman.ratio",
      "batman.migration_budget_bytes", "colloid.migration_limit_bytes_s", "colloid.theta",
      "colloid.ewma_alpha", "colloid.step", "nhc.theta", "nhc.ewma_alpha", "nhc.ratio_step",
      "nhc.admission_budget_bytes",
      "workload.distribution", "workload.hot_fraction", "workload.hot_probability", "workload.zipf_theta",
      "workload.hot_new_fraction", "workload.recent_window_fraction", "workload.read_ratio",
      "workload.access_size", "workload.working_set", "workload.phases", "workload.phase_unit",
      "workload.think_time_us", "workload.base_workers", "replay.mode", "replay.workers"};
  for (const auto& [k, v] : m)
    if (!known.count(k)) throw Error(ErrorKind::Config, "unknown key '" + k + "'");

  auto get = [&](const char* k) -> const std::string* {
    auto it = m.find(k);
    return it == m.end() ? nullptr : &it->second;
  };
  auto num = [&](const char* k, double& dst) {
    if (auto v = get(k)) dst = parse_number(k, *v);
  };
  auto size = [&](const char* k, Bytes& dst) {
    if (auto v = get(k)) dst = parse_size(k, *v);
  };
  auto count = [&](const char* k, std::size_t& dst) {
    if (auto v = get(k)) {
      double d = parse_number(k, *v);
      if (d < 0 || d != std::floor(d)) throw Error(ErrorKind::Config, std::string(k) + ": expected a count");
      dst = std::size_t(d);
    }
  };
  auto device = [&](const std::string& p, DeviceConfig& d) {
    if (auto v = get((p + ".preset").c_str())) d.preset = *v;
    size((p + ".capacity").c_str(), d.capacity);
    auto period = get((p + ".spike_period_s").c_str());
    auto dur = get((p + ".spike_duration_s").c_str());
    auto mult = get((p + ".spike_multiplier").c_str());
    if (period || dur || mult) {
      if (!(period && dur && mult))
        throw Error(ErrorKind::Config, p + ".spike_*: period, duration and multiplier go together");
      d.spike = SpikeSpec{parse_number(p + ".spike_period_s", *period),
                          parse_number(p + ".spike_duration_s", *dur),
                          parse_number(p + ".spike_multiplier", *mult)};
    }
  };

  if (auto v = get("policy")) c.policy = *v;
  num("intensity", c.intensity);
  if (auto v = get("seed")) c.seed = std::uint64_t(parse_number("seed", *v));
  num("duration_s", c.duration_s);
  num("metrics_interval_s", c.metrics_interval_s);
  if (auto v = get("output")) c.output = *v;
  size("logical_capacity", c.logical_capacity);
  device("perf", c.perf);
  device("cap", c.cap);
  count("sim.copy_concurrency", c.copy_concurrency);
  if (auto v = get("sim.check_reads")) c.check_reads = parse_bool("sim.check_reads", *v);

  auto& o = c.most.optimizer;
  num("theta", o.theta);
  num("ratio_step", o.ratio_step);
  if (auto v = get("tuning_interval_ms")) o.tuning_interval_s = parse_number("tuning_interval_ms", *v) / 1000.0;
  num("ewma_alpha", o.ewma_alpha);
  num("offload_ratio_max", o.offload_ratio_max);
  num("mirrored_max_fraction", o.mirrored_max_fraction);
  num("watermark_fraction", c.most.watermark_fraction);
  size("migration_budget_bytes", c.most.migration_budget_bytes);
  num("clean_threshold", c.most.clean_threshold);
  if (auto v = get("subpages_enabled")) c.most.subpages_enabled = parse_bool("subpages_enabled", *v);

  size("striping.stripe_unit_bytes", c.stripe_unit);
  size("hemem.migration_budget_bytes", c.hemem_budget);
  count("hemem.hot_threshold", c.hemem_hot_threshold);
  if (auto v = get("batman.ratio")) c.batman_ratio = parse_number("batman.ratio", *v);
  size("batman.migration_budget_bytes", c.batman_budget);
  size("colloid.migration_limit_bytes_s", c.colloid_limit);
  if (auto v = get("colloid.theta")) c.colloid_theta = parse_number("colloid.theta", *v);
  if (auto v = get("colloid.ewma_alpha")) c.colloid_alpha = parse_number("colloid.ewma_alpha", *v);
  num("colloid.step", c.colloid_step);
  num("nhc.theta", c.nhc.theta);
  num("nhc.ewma_alpha", c.nhc.ewma_alpha);
  num("nhc.ratio_step", c.nhc.ratio_step);
  size("nhc.admission_budget_bytes", c.nhc.admission_budget_bytes);

  auto& w = c.workload;
  if (auto v = get("workload.distribution")) w.distribution = parse_distribution(*v);
  num("workload.hot_fraction", w.hot_fraction);
  num("workload.hot_probability", w.hot_probability);
  num("workload.zipf_theta", w.zipf_theta);
  num("workload.hot_new_fraction", w.hot_new_fraction);
  num("workload.recent_window_fraction", w.recent_window_fraction);
  num("workload.read_ratio", w.read_ratio);
  size("workload.access_size", w.access_size);
  size("workload.working_set", w.working_set);
  num("workload.think_time_us", w.think_time_us);
  count("workload.base_workers", c.base_workers);
  if (auto v = get("workload.phases")) c.phases = parse_phases("workload.phases", *v);
  if (auto v = get("workload.phase_unit")) {
    if (*v == "workers")
      c.phase_unit = PhaseUnit::Workers;
    else if (*v == "intensity")
      c.phase_unit = PhaseUnit::Intensity;
    else
      throw Error(ErrorKind::Config, "workload.phase_unit: expected workers or intensity");
  }
  if (auto v = get("replay.mode")) {
    if (*v != "open" && *v != "closed") throw Error(ErrorKind::Config, "replay.mode: expected open or closed");
    c.replay_closed = *v == "closed";
  }
  count("replay.workers", c.replay_workers);
  w.seed = c.seed;
  c.validate();
  return c;
}

inline std::unique_ptr<Policy> make_policy(const ExperimentConfig& c) {
  const double tick = c.tick_s();
  if (c.policy == "most") return std::make_unique<MostPolicy>(c.most);
  if (c.policy == "striping") return std::make_unique<StripingPolicy>(c.stripe_unit);
  if (c.policy == "hemem") return std::make_unique<HememPolicy>(c.hemem_budget, unsigned(c.hemem_hot_threshold));
  if (c.policy == "batman") {
    double r = c.batman_ratio.value_or(BatmanPolicy::bandwidth_ratio(
        c.perf.build().bandwidth(OpKind::Read, c.workload.access_size),
        c.cap.build().bandwidth(OpKind::Read, c.workload.access_size)));
    return std::make_unique<BatmanPolicy>(r, c.batman_budget);
  }
  if (c.policy.starts_with("colloid")) {
    auto v = c.policy == "colloid++" ? ColloidVariant::PlusPlus
             : c.policy == "colloid+" ? ColloidVariant::Plus
                                      : ColloidVariant::Base;
    auto cc = ColloidConfig::for_variant(v);
    if (c.colloid_theta) cc.theta = *c.colloid_theta;
    if (c.colloid_alpha) cc.ewma_alpha = *c.colloid_alpha;
    cc.step = c.colloid_step;
    cc.migration_limit_bytes_s = c.colloid_limit;
    return std::make_unique<ColloidPolicy>(cc, tick);
  }
  if (c.policy == "nhc") return std::make_unique<NhcPolicy>(c.nhc);
  throw Error(ErrorKind::Config, "policy: unknown policy '" + c.policy + "'");
}

}  // namespace most
