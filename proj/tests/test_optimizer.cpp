#include <gtest/gtest.h>

#include "most/optimizer.hpp"

using namespace most;

namespace {

OptimizerState fresh(double ratio, double alpha = 1.0) {
  OptimizerState s;
  s.config.ewma_alpha = alpha;
  s.offload_ratio = ratio;
  return s;
}

MirrorStats room() { return {0, 100 * kSegmentSize}; }
MirrorStats full() { return {20 * kSegmentSize, 100 * kSegmentSize}; }

}  // namespace

TEST(Optimizer, RaiseRatioWhenPerfSlower) {
  auto r = optimizer_step(120.0, 100.0, fresh(0.10), room());
  EXPECT_NEAR(r.state.offload_ratio, 0.12, 1e-12);
  EXPECT_EQ(r.state.gate, MigrationGate::Stopped);
  EXPECT_TRUE(r.actions.empty());
}

TEST(Optimizer, EqualLatenciesHold) {
  auto r = optimizer_step(100.0, 100.0, fresh(0.3), room());
  EXPECT_DOUBLE_EQ(r.state.offload_ratio, 0.3);
  EXPECT_EQ(r.state.gate, MigrationGate::Stopped);
}

TEST(Optimizer, AtMaxEnlargesMirror) {
  auto r = optimizer_step(200.0, 100.0, fresh(1.0), room());
  ASSERT_EQ(r.actions.size(), 1u);
  EXPECT_EQ(r.actions[0], MirrorAction::EnlargeMirror);
  EXPECT_EQ(r.state.gate, MigrationGate::ToCapacityOnly);
  r = optimizer_step(200.0, 100.0, fresh(1.0), full());
  ASSERT_EQ(r.actions.size(), 1u);
  EXPECT_EQ(r.actions[0], MirrorAction::ImproveMirrorHotness);
}

TEST(Optimizer, AtZeroOpensPromotion) {
  auto r = optimizer_step(80.0, 100.0, fresh(0.0), room());
  EXPECT_EQ(r.state.gate, MigrationGate::ToPerformanceOnly);
  EXPECT_EQ(r.state.offload_ratio, 0.0);
}

TEST(Optimizer, MissingSampleCarriesEwmaForward) {
  auto s = fresh(0.5, 0.3);
  auto r = optimizer_step(100.0, 50.0, s, room());
  ASSERT_TRUE(r.state.latency_perf);
  r = optimizer_step(std::nullopt, 60.0, r.state, room());
  EXPECT_DOUBLE_EQ(*r.state.latency_perf, 100.0);
  EXPECT_DOUBLE_EQ(*r.state.latency_cap, 0.3 * 60 + 0.7 * 50);
  // No history at all: nothing to compare, nothing moves.
  auto e = optimizer_step(std::nullopt, 60.0, fresh(0.5), room());
  EXPECT_EQ(e.state.gate, MigrationGate::Stopped);
  EXPECT_DOUBLE_EQ(e.state.offload_ratio, 0.5);
}

TEST(Optimizer, TailCapBoundsRatio) {
  auto s = fresh(0.0);
  s.config.offload_ratio_max = 0.3;
  for (int i = 0; i < 100; ++i) s = optimizer_step(500.0, 100.0, s, room()).state;
  EXPECT_DOUBLE_EQ(s.offload_ratio, 0.3);
  EXPECT_EQ(s.gate, MigrationGate::ToCapacityOnly);
}

// Decision rule written out as a lookup over three axes: latency relation,
// position of the ratio, room in the mirrored class.
TEST(Optimizer, DecisionTableOracle) {
  enum Rel { Above, Inside, Below };
  for (double theta : {0.05, 0.2})
    for (double lc : {10.0, 100.0})
      for (double q : {0.2, 0.8, 1 - theta - 1e-6, 1 - theta + 1e-6, 1.0, 1 + theta - 1e-6, 1 + theta + 1e-6, 2.0, 9.0})
        for (double max : {1.0, 0.6})
          for (double r0 : {0.0, 0.01, 0.3, max - 0.01, max})
            for (bool has_room : {true, false}) {
              OptimizerState s = fresh(r0);
              s.config.theta = theta;
              s.config.offload_ratio_max = max;
              double lp = q * lc;
              auto got = optimizer_step(lp, lc, s, has_room ? room() : full());

              Rel rel = lp > (1 + theta) * lc ? Above : lp < (1 - theta) * lc ? Below : Inside;
              double want_r = r0;
              MigrationGate want_g = MigrationGate::Stopped;
              std::vector<MirrorAction> want_a;
              if (rel == Above && r0 == max) {
                want_g = MigrationGate::ToCapacityOnly;
                want_a.push_back(has_room ? MirrorAction::EnlargeMirror : MirrorAction::ImproveMirrorHotness);
              } else if (rel == Above) {
                want_r = std::min(max, r0 + 0.02);
              } else if (rel == Below && r0 == 0) {
                want_g = MigrationGate::ToPerformanceOnly;
              } else if (rel == Below) {
                want_r = std::max(0.0, r0 - 0.02);
              }
              SCOPED_TRACE(testing::Message() << "theta=" << theta << " q=" << q << " r0=" << r0 << " max=" << max
                                              << " room=" << has_room);
              EXPECT_NEAR(got.state.offload_ratio, want_r, 1e-12);
              EXPECT_EQ(got.state.gate, want_g);
              EXPECT_EQ(got.actions, want_a);
            }
}

TEST(Optimizer, RatioStaysInBoundsUnderRandomSequences) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    OptimizerState s;
    s.config.offload_ratio_max = rng.uniform();
    s.config.ewma_alpha = 0.05 + 0.95 * rng.uniform();
    for (int i = 0; i < 500; ++i) {
      std::optional<double> lp, lc;
      if (rng.bernoulli(0.9)) lp = 1 + 500 * rng.uniform();
      if (rng.bernoulli(0.9)) lc = 1 + 500 * rng.uniform();
      s = optimizer_step(lp, lc, s, rng.bernoulli(0.5) ? room() : full()).state;
      ASSERT_GE(s.offload_ratio, 0.0);
      ASSERT_LE(s.offload_ratio, s.config.offload_ratio_max);
    }
  }
}

TEST(Optimizer, ConfigValidation) {
  OptimizerConfig c;
  c.theta = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.ratio_step = 1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.offload_ratio_max = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  EXPECT_NO_THROW(c.validate());
}

TEST(Optimizer, MirrorBudgetCountsNextSegment) {
  MirrorStats m{19 * kSegmentSize, 100 * kSegmentSize};
  EXPECT_TRUE(m.below_max(0.2));
  m.mirrored_bytes = 20 * kSegmentSize;
  EXPECT_FALSE(m.below_max(0.2));
}
