// most: run, compare, replay and calibrate tiering experiments.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "most/most.hpp"

namespace fs = std::filesystem;
using namespace most;

namespace {

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream f(dir / name);
  if (!f) throw Error(ErrorKind::Config, "cannot write " + (dir / name).string());
  return f;
}

fs::path out_dir(const std::string& flag, const ExperimentConfig& cfg) {
  if (!flag.empty()) return flag;
  if (!cfg.output.empty()) return cfg.output;
  return "out";
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  auto m = load_config_file(config);
  if (seed) m["seed"] = std::to_string(*seed);
  auto cfg = build_config(m);
  auto r = run_experiment(cfg);
  auto dir = out_dir(out, cfg);
  auto csv = open_out(dir, "metrics.csv");
  write_csv(csv, r);
  auto sum = open_out(dir, "summary.txt");
  write_summary(sum, r);
  write_summary(std::cout, r);
  std::cout << "wrote " << (dir / "metrics.csv").string() << '\n';
  return r.accounting_closed ? 0 : 2;
}

int cmd_compare(const std::string& config, const std::vector<std::string>& sweeps, const std::string& out,
                std::size_t jobs) {
  auto base = load_config_file(config);
  std::vector<Sweep> sw;
  for (const auto& s : sweeps) sw.push_back(parse_sweep(s));
  auto pts = compare(base, sw, jobs);
  auto dir = out_dir(out, build_config(base));
  auto summary = open_out(dir, "compare_summary.csv");
  write_compare_summary(summary, pts);
  auto longf = open_out(dir, "compare_long.csv");
  write_compare_long(longf, pts);
  auto series = open_out(dir, "compare_metrics.csv");
  series << kCsvHeader << '\n';
  for (const auto& p : pts) write_csv(series, p.result, false);
  write_compare_summary(std::cout, pts);
  return 0;
}

int cmd_replay(const std::string& trace, const std::string& config, const std::string& out) {
  auto cfg = build_config(load_config_file(config));
  std::ifstream tf(trace);
  if (!tf) throw Error(ErrorKind::Config, "cannot open trace '" + trace + "'");
  auto recs = parse_trace(tf);
  Simulator sim(cfg.sim_config(), make_policy(cfg));
  sim.populate(working_set_segments(cfg.workload));
  if (cfg.replay_closed) {
    TraceSource src(recs, cfg.replay_workers);
    sim.run(src, std::max(cfg.duration_s, 1.0));
  } else {
    sim.replay(recs);
  }
  RunResult r;
  r.policy = cfg.policy;
  r.intensity = cfg.intensity;
  r.intervals = sim.intervals();
  r.totals = sim.totals();
  r.accounting_closed = sim.accounting_closed();
  summarize(r, {}, r.intervals.empty() ? 1.0 : r.intervals.back().time_s);
  auto dir = out_dir(out, cfg);
  auto csv = open_out(dir, "replay_metrics.csv");
  write_csv(csv, r);
  std::cout << "ops=" << r.totals.ops << " sequence_hash=" << std::hex << sequence_hash(recs) << std::dec << '\n';
  write_summary(std::cout, r);
  return r.accounting_closed ? 0 : 2;
}

int cmd_calibrate(const std::string& config) {
  auto cfg = build_config(load_config_file(config));
  auto w = calibrate(cfg);
  std::cout << "workers_1x=" << w << " perf_util=" << fmt("%.3f", perf_utilization(cfg, w)) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-tier storage simulator: mirror-optimized tiering and baselines"};
  app.require_subcommand(1);

  std::string config, out, trace;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sweeps;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());

  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", config, "config file")->required();
  run->add_option("--seed", seed, "override the seed");
  run->add_option("--out", out, "output directory");

  auto* cmp = app.add_subcommand("compare", "sweep policies and parameters");
  cmp->add_option("--config", config, "base config file")->required();
  cmp->add_option("--sweep", sweeps, "key=v1,v2,... (repeatable)")->required();
  cmp->add_option("--out", out, "output directory");
  cmp->add_option("--jobs", jobs, "parallel runs");

  auto* rep = app.add_subcommand("replay", "replay a block trace");
  rep->add_option("--trace", trace, "trace file")->required();
  rep->add_option("--config", config, "config file")->required();
  rep->add_option("--out", out, "output directory");

  auto* cal = app.add_subcommand("calibrate", "find the 1.0x worker count");
  cal->add_option("--config", config, "config file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, seed, out);
    if (*cmp) return cmd_compare(config, sweeps, out, jobs);
    if (*rep) return cmd_replay(trace, config, out);
    if (*cal) return cmd_calibrate(config);
  } catch (const Error& e) {
    std::cerr << "error (" << error_kind_name(e.kind()) << "): " << e.what() << '\n';
    return 1;
  }
  return 0;
}
