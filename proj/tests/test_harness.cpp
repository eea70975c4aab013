#include <gtest/gtest.h>

#include <sstream>

#include "most/harness.hpp"

using namespace most;

namespace {

std::optional<double> brute_convergence(const std::vector<double>& t, const std::vector<double>& v, double change,
                                        double target, double band, std::size_t run) {
  for (std::size_t i = 0; i + run <= t.size(); ++i) {
    if (t[i] <= change) continue;
    bool ok = true;
    for (std::size_t j = i; j < i + run; ++j) ok &= std::abs(v[j] - target) <= band * std::abs(target);
    if (ok) return t[i] - change;
  }
  return std::nullopt;
}

ConfigMap quick(const std::string& policy) {
  auto m = load_config_file(std::string(MOST_SOURCE_DIR) + "/configs/quick.cfg");
  m["policy"] = policy;
  m["duration_s"] = "1";
  return m;
}

std::size_t count_lines(const std::string& s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Harness, StepConvergesInOneInterval) {
  std::vector<double> t, v;
  for (int i = 1; i <= 60; ++i) {
    t.push_back(i);
    v.push_back(i <= 30 ? 100 : 200);
  }
  auto c = detect_convergence(t, v, 30, 200);
  ASSERT_TRUE(c);
  EXPECT_DOUBLE_EQ(*c, 1.0);
}

// A linear ramp from 100 to 200 over 50 s reaches the 5% band around 200
// when it passes 190: 45 s after the change at this sampling.
TEST(Harness, RampConvergenceTime) {
  std::vector<double> t, v;
  for (int i = 1; i <= 120; ++i) {
    t.push_back(i);
    double x = i <= 10 ? 100 : std::min(200.0, 100 + 2.0 * (i - 10));
    v.push_back(x);
  }
  auto c = detect_convergence(t, v, 10, 200);
  ASSERT_TRUE(c);
  EXPECT_DOUBLE_EQ(*c, 45.0);
}

TEST(Harness, NeverSettlesIsEmpty) {
  std::vector<double> t{1, 2, 3, 4, 5, 6, 7, 8}, v{1, 9, 1, 9, 1, 9, 1, 9};
  EXPECT_FALSE(detect_convergence(t, v, 0, 9));
  std::vector<double> flat(8, 9.0);
  EXPECT_FALSE(detect_convergence(t, flat, 5, 9));  // only 3 samples after the change
}

TEST(Harness, ConvergenceMatchesBruteForce) {
  Rng rng(12);
  for (int trial = 0; trial < 2000; ++trial) {
    std::size_t n = 5 + rng.below(60);
    std::vector<double> t, v;
    for (std::size_t i = 0; i < n; ++i) {
      t.push_back(0.5 * double(i + 1));
      v.push_back(80 + 40 * rng.uniform());
    }
    double change = 0.5 * double(rng.below(n));
    double band = 0.02 + 0.2 * rng.uniform();
    std::size_t run = 1 + rng.below(6);
    auto got = detect_convergence(t, v, change, 100, band, run);
    auto want = brute_convergence(t, v, change, 100, band, run);
    ASSERT_EQ(got.has_value(), want.has_value()) << trial;
    if (got) {
      ASSERT_DOUBLE_EQ(*got, *want) << trial;
    }
  }
}

TEST(Harness, SteadyMeanUsesFinalThird) {
  std::vector<double> t{1, 2, 3, 4, 5, 6, 7, 8, 9}, v{0, 0, 0, 0, 0, 0, 3, 6, 9};
  EXPECT_DOUBLE_EQ(steady_mean(t, v, 0, 9), 6.0);
  EXPECT_DOUBLE_EQ(steady_mean(t, v, 6, 9), 9.0);
  EXPECT_DOUBLE_EQ(steady_mean(t, v, 9, 20), 0.0);
}

TEST(Harness, DwpdAndLifespan) {
  // 1 TB written to a 1 TB device over half a day is 2 DWPD.
  EXPECT_DOUBLE_EQ(dwpd(1e12, 1e12, 43200), 2.0);
  // 30 DWPD rated for 5 years, worn at 60 DWPD: 2.5 years.
  EXPECT_DOUBLE_EQ(lifespan_days(30, 5 * 365, 60), 2.5 * 365);
  EXPECT_THROW(dwpd(1, 0, 1), Error);
  EXPECT_THROW(lifespan_days(30, 1825, 0), Error);
}

TEST(Harness, CsvHeaderGolden) {
  EXPECT_STREQ(kCsvHeader,
               "time_s,policy,intensity,throughput_mbps,p50_us,p99_us,p999_us,offload_ratio,mig_to_perf_bytes,"
               "mig_to_cap_bytes,mirror_bytes,clean_bytes,dev0_util,dev1_util");
}

TEST(Harness, CsvRowFormat) {
  IntervalStats s;
  s.time_s = 2;
  s.throughput_bps = 1234.5e6;
  s.p50_us = 12.59;
  s.p99_us = 100;
  s.p999_us = 251.2;
  s.offload_ratio = 0.12;
  s.mig_to_perf_bytes = 7;
  s.mirror_bytes = 2097152;
  s.util = {0.5, 0.25};
  std::ostringstream os;
  write_csv_row(os, "most", 1.5, s);
  EXPECT_EQ(os.str(), "2.000,most,1.500,1234.500,12.6,100.0,251.2,0.1200,7,0,2097152,0,0.5000,0.2500\n");
}

TEST(Harness, ParseSweep) {
  auto s = parse_sweep("policy=most,colloid++");
  EXPECT_EQ(s.key, "policy");
  EXPECT_EQ(s.values, (std::vector<std::string>{"most", "colloid++"}));
  EXPECT_THROW(parse_sweep("policy"), Error);
  EXPECT_THROW(parse_sweep("=a"), Error);
  EXPECT_THROW(parse_sweep("intensity="), Error);
}

TEST(Harness, RunExperimentWritesOneRowPerInterval) {
  auto cfg = build_config(quick("most"));
  auto r = run_experiment(cfg);
  EXPECT_EQ(r.workers_1x, 16u);
  EXPECT_EQ(r.intervals.size(), 2u);
  EXPECT_TRUE(r.accounting_closed);
  std::ostringstream os;
  write_csv(os, r);
  EXPECT_EQ(count_lines(os.str()), 3u);
  std::ostringstream sum;
  write_summary(sum, r);
  EXPECT_NE(sum.str().find("accounting_closed=1"), std::string::npos);
}

TEST(Harness, CompareCoversTheProductAndIsDeterministic) {
  std::vector<Sweep> sw{parse_sweep("policy=most,colloid++"), parse_sweep("intensity=0.5,1.0,2.0")};
  auto a = compare(quick("most"), sw, 1);
  auto b = compare(quick("most"), sw, 2);
  ASSERT_EQ(a.size(), 6u);
  ASSERT_EQ(b.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].assignment, b[i].assignment);
    EXPECT_EQ(a[i].result.policy, a[i].assignment[0].second);
    EXPECT_EQ(a[i].result.steady_throughput_bps, b[i].result.steady_throughput_bps);
    EXPECT_EQ(a[i].result.workers_1x, 16u);
  }
  std::ostringstream sum, lng;
  write_compare_summary(sum, a);
  write_compare_long(lng, a);
  EXPECT_EQ(count_lines(sum.str()), 7u);
  EXPECT_EQ(count_lines(lng.str()), 1u + 6u * 7u);
  EXPECT_EQ(sum.str().substr(0, sum.str().find('\n')),
            "policy,intensity,workers_1x,steady_throughput_mbps,steady_p99_us,mig_to_perf_bytes,mig_to_cap_bytes,"
            "mirror_bytes,clean_bytes");
}

TEST(Harness, CompareRejectsUnknownSweepKey) {
  EXPECT_THROW(compare(quick("most"), {parse_sweep("nonsense=1,2")}, 1), Error);
}

TEST(Harness, CalibrationHitsTargetUtilisation) {
  auto m = quick("hemem");
  m.erase("workload.base_workers");
  auto cfg = build_config(m);
  auto w = calibrate(cfg, 0.95);
  EXPECT_GE(perf_utilization(cfg, w), 0.95);
  EXPECT_LT(perf_utilization(cfg, w - 1), 0.95);
}
