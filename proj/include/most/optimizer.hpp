#pragma once

// Latency-equalizing feedback controller for the offload ratio. One call per
// tuning interval; the function is pure so it can be tested against an
// independently written decision table.

#include <algorithm>
#include <optional>
#include <vector>

#include "most/common.hpp"

namespace most {

enum class MigrationGate : std::uint8_t { ToCapacityOnly, ToPerformanceOnly, Stopped };

inline const char* gate_name(MigrationGate g) {
  switch (g) {
    case MigrationGate::ToCapacityOnly: return "TO_CAPACITY_ONLY";
    case MigrationGate::ToPerformanceOnly: return "TO_PERFORMANCE_ONLY";
    case MigrationGate::Stopped: return "STOPPED";
  }
  return "?";
}

enum class MirrorAction : std::uint8_t { EnlargeMirror, ImproveMirrorHotness };

struct OptimizerConfig {
  double theta = 0.05;
  double ratio_step = 0.02;
  double tuning_interval_s = 0.2;
  double ewma_alpha = 0.3;
  double offload_ratio_max = 1.0;
  double mirrored_max_fraction = 0.20;

  void validate() const {
    if (!(theta > 0 && theta < 1)) throw Error(ErrorKind::Config, "theta must be in (0,1)");
    if (!(ratio_step > 0 && ratio_step < 1)) throw Error(ErrorKind::Config, "ratio_step must be in (0,1)");
    if (!(tuning_interval_s > 0)) throw Error(ErrorKind::Config, "tuning_interval_ms must be > 0");
    if (!(ewma_alpha > 0 && ewma_alpha <= 1)) throw Error(ErrorKind::Config, "ewma_alpha must be in (0,1]");
    if (!(offload_ratio_max >= 0 && offload_ratio_max <= 1))
      throw Error(ErrorKind::Config, "offload_ratio_max must be in [0,1]");
    if (!(mirrored_max_fraction >= 0 && mirrored_max_fraction < 1))
      throw Error(ErrorKind::Config, "mirrored_max_fraction must be in [0,1)");
  }
};

struct OptimizerState {
  OptimizerConfig config;
  double offload_ratio = 0;
  std::optional<double> latency_perf;  // smoothed, microseconds
  std::optional<double> latency_cap;
  MigrationGate gate = MigrationGate::Stopped;
};

struct MirrorStats {
  Bytes mirrored_bytes = 0;  // bytes of second copies
  Bytes total_capacity = 0;

  bool below_max(double max_fraction) const {
    return double(mirrored_bytes + kSegmentSize) <= max_fraction * double(total_capacity);
  }
};

struct StepResult {
  OptimizerState state;
  std::vector<MirrorAction> actions;
};

inline std::optional<double> ewma(std::optional<double> prev, std::optional<double> sample,
                                  double alpha) {
  if (!sample) return prev;
  if (!prev) return sample;
  return alpha * *sample + (1 - alpha) * *prev;
}

inline StepResult optimizer_step(std::optional<double> perf_sample, std::optional<double> cap_sample,
                                 const OptimizerState& in, const MirrorStats& mirror) {
  StepResult r{in, {}};
  auto& s = r.state;
  const auto& c = s.config;
  s.offload_ratio = std::clamp(s.offload_ratio, 0.0, c.offload_ratio_max);
  s.latency_perf = ewma(s.latency_perf, perf_sample, c.ewma_alpha);
  s.latency_cap = ewma(s.latency_cap, cap_sample, c.ewma_alpha);
  if (!s.latency_perf || !s.latency_cap) {
    s.gate = MigrationGate::Stopped;
    return r;
  }
  const double lp = *s.latency_perf;
  const double lc = *s.latency_cap;
  constexpr double eps = 1e-9;

  if (lp > (1 + c.theta) * lc) {
    if (s.offload_ratio >= c.offload_ratio_max - eps) {
      s.offload_ratio = c.offload_ratio_max;
      r.actions.push_back(mirror.below_max(c.mirrored_max_fraction) ? MirrorAction::EnlargeMirror
                                                                     : MirrorAction::ImproveMirrorHotness);
      s.gate = MigrationGate::ToCapacityOnly;
    } else {
      s.offload_ratio = std::min(s.offload_ratio + c.ratio_step, c.offload_ratio_max);
      if (s.offload_ratio > c.offload_ratio_max - eps) s.offload_ratio = c.offload_ratio_max;
      s.gate = MigrationGate::Stopped;
    }
  } else if (lp < (1 - c.theta) * lc) {
    if (s.offload_ratio <= eps) {
      s.offload_ratio = 0;
      s.gate = MigrationGate::ToPerformanceOnly;
    } else {
      s.offload_ratio = std::max(s.offload_ratio - c.ratio_step, 0.0);
      if (s.offload_ratio < eps) s.offload_ratio = 0;
      s.gate = MigrationGate::Stopped;
    }
  } else {
    s.gate = MigrationGate::Stopped;
  }
  return r;
}

}  // namespace most
