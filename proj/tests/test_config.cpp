#include <gtest/gtest.h>

#include <filesystem>

#include "most/config.hpp"

using namespace most;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Contract;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, ParsesKeyValueLinesCommentsAndQuotes) {
  auto m = parse_config_text("# header\n  policy = hemem  # trailing\n\noutput = \"out dir\"\nseed=3\n");
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m["policy"], "hemem");
  EXPECT_EQ(m["output"], "out dir");
  EXPECT_EQ(m["seed"], "3");
}

TEST(Config, DuplicateKeyAndMissingEqualsAreParseErrors) {
  EXPECT_EQ(kind_of([] { parse_config_text("seed = 1\nseed = 2\n"); }), ErrorKind::Parse);
  EXPECT_NE(message_of([] { parse_config_text("seed = 1\nseed = 2\n"); }).find("line 2"), std::string::npos);
  EXPECT_EQ(kind_of([] { parse_config_text("a = 1\njust words\n"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_config_text(" = 4\n"); }), ErrorKind::Parse);
}

TEST(Config, UnknownKeyIsRejected) {
  auto msg = message_of([] { build_config({{"policy", "most"}, {"thetta", "0.1"}}); });
  EXPECT_NE(msg.find("unknown key 'thetta'"), std::string::npos);
  EXPECT_EQ(kind_of([] { build_config({{"workload.colour", "red"}}); }), ErrorKind::Config);
}

TEST(Config, ParseSizeSuffixes) {
  const std::pair<const char*, Bytes> table[] = {
      {"4096", 4096},          {"4K", 4096},           {"4k", 4096},          {"16KiB", 16384},
      {"2M", 2 * 1048576ull},  {"1.5M", 1572864},      {"7G", 7ull << 30},    {"7GB", 7ull << 30},
      {"1T", 1ull << 40},      {"0", 0},
  };
  for (const auto& [text, want] : table) EXPECT_EQ(parse_size("k", text), want) << text;
  for (const char* bad : {"", "K", "12Q", "-4K", "1e400", "abc"})
    EXPECT_EQ(kind_of([&] { parse_size("k", bad); }), ErrorKind::Config) << bad;
}

TEST(Config, ParseBoolAndNumber) {
  EXPECT_TRUE(parse_bool("b", "true"));
  EXPECT_TRUE(parse_bool("b", "on"));
  EXPECT_FALSE(parse_bool("b", "0"));
  EXPECT_THROW(parse_bool("b", "maybe"), Error);
  EXPECT_DOUBLE_EQ(parse_number("n", "0.25"), 0.25);
  EXPECT_THROW(parse_number("n", "0.25x"), Error);
  EXPECT_THROW(parse_number("n", "nan"), Error);
}

TEST(Config, PhasesParseAndValidate) {
  auto p = parse_phases("p", "0:1.0, 30:2.0,60:1");
  ASSERT_EQ(p.size(), 3u);
  EXPECT_DOUBLE_EQ(p[1].start_s, 30);
  EXPECT_DOUBLE_EQ(p[1].level, 2.0);
  EXPECT_THROW(parse_phases("p", "10:1,5:2"), Error);
  EXPECT_THROW(parse_phases("p", "10"), Error);
  EXPECT_THROW(parse_phases("p", "0:-1"), Error);
}

TEST(Config, DefaultsMatchTheReferenceHierarchy) {
  auto c = build_config({});
  EXPECT_EQ(c.policy, "most");
  EXPECT_EQ(c.perf.preset, "optane");
  EXPECT_EQ(c.cap.preset, "nvme-pcie3");
  EXPECT_DOUBLE_EQ(c.most.optimizer.theta, 0.05);
  EXPECT_DOUBLE_EQ(c.most.optimizer.ratio_step, 0.02);
  EXPECT_DOUBLE_EQ(c.most.optimizer.tuning_interval_s, 0.2);
  EXPECT_DOUBLE_EQ(c.most.optimizer.offload_ratio_max, 1.0);
  EXPECT_DOUBLE_EQ(c.most.optimizer.mirrored_max_fraction, 0.2);
  // 12G minus the 20% mirror reserve, rounded down to whole segments.
  const Bytes total = 12 * kGiB;
  EXPECT_EQ(c.resolved_logical(), (total - Bytes(0.2 * double(total))) / kSegmentSize * kSegmentSize);
}

TEST(Config, OverridesReachTheirFields) {
  auto c = build_config({{"policy", "colloid++"},
                         {"theta", "0.1"},
                         {"tuning_interval_ms", "500"},
                         {"perf.capacity", "2G"},
                         {"workload.working_set", "4G"},
                         {"workload.access_size", "16K"},
                         {"workload.distribution", "zipfian"},
                         {"colloid.theta", "0.07"},
                         {"sim.copy_concurrency", "8"},
                         {"subpages_enabled", "false"}});
  EXPECT_EQ(c.policy, "colloid++");
  EXPECT_DOUBLE_EQ(c.most.optimizer.theta, 0.1);
  EXPECT_DOUBLE_EQ(c.tick_s(), 0.5);
  EXPECT_EQ(c.perf.capacity, 2 * kGiB);
  EXPECT_EQ(c.workload.access_size, 16 * kKiB);
  EXPECT_EQ(c.workload.distribution, Distribution::Zipfian);
  EXPECT_EQ(c.copy_concurrency, 8u);
  EXPECT_FALSE(c.most.subpages_enabled);
  EXPECT_EQ(*c.colloid_theta, 0.07);
}

TEST(Config, SemanticErrors) {
  EXPECT_THROW(build_config({{"policy", "lru"}}), Error);
  EXPECT_THROW(build_config({{"theta", "0"}}), Error);
  EXPECT_THROW(build_config({{"workload.working_set", "64G"}}), Error);
  EXPECT_THROW(build_config({{"perf.spike_period_s", "3"}}), Error);  // incomplete spike
  EXPECT_THROW(build_config({{"perf.preset", "floppy"}}), Error);
  EXPECT_THROW(build_config({{"workload.phase_unit", "minutes"}}), Error);
  EXPECT_THROW(build_config({{"hemem.hot_threshold", "2.5"}}), Error);
  EXPECT_THROW(build_config({{"metrics_interval_s", "100"}, {"duration_s", "10"}}), Error);
}

TEST(Config, WorkerPhasesScaleWithIntensity) {
  auto c = build_config({{"intensity", "1.5"}, {"workload.phases", "0:1,10:2"}});
  auto p = c.worker_phases(100);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].workers, 150u);
  EXPECT_EQ(p[1].workers, 300u);
  auto w = build_config({{"workload.phase_unit", "workers"}, {"workload.phases", "0:128,40:8"}});
  EXPECT_FALSE(w.needs_calibration());
  EXPECT_EQ(w.worker_phases(999)[1].workers, 8u);
}

TEST(Config, EveryPolicyNameBuilds) {
  for (const auto& name : policy_names()) {
    auto c = build_config({{"policy", name}});
    EXPECT_EQ(make_policy(c)->name(), name);
  }
}

TEST(Config, ShippedConfigsLoad) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(fs::path(MOST_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".cfg") continue;
    SCOPED_TRACE(e.path().string());
    EXPECT_NO_THROW(build_config(load_config_file(e.path().string())));
    ++n;
  }
  EXPECT_GE(n, 4u);
  EXPECT_EQ(kind_of([] { load_config_file("/nonexistent/x.cfg"); }), ErrorKind::Config);
}
