// nlts: run, batch and report neural-linear Thompson sampling experiments.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlts/nlts.hpp"

namespace fs = std::filesystem;
using namespace nlts;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> policies;
  std::vector<std::string> envs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> horizon;
  std::optional<std::size_t> interval;
  std::optional<std::size_t> minibatches;
  std::optional<std::size_t> buffer;
  std::optional<double> epsilon;
  std::string out = "runs";
};

void add_common(CLI::App* cmd, CommonOptions& o, bool multi) {
  cmd->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  if (multi) {
    cmd->add_option("--policy", o.policies, "policy (repeatable)");
    cmd->add_option("--env", o.envs, "environment spec (repeatable)");
  } else {
    cmd->add_option("--policy", o.policies, "policy")->expected(1);
    cmd->add_option("--env", o.envs, "environment spec")->expected(1);
  }
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_option("--horizon", o.horizon, "steps per run");
  cmd->add_option("--interval", o.interval, "training interval L");
  cmd->add_option("--minibatches", o.minibatches, "minibatches per training phase P");
  cmd->add_option("--buffer", o.buffer, "replay capacity per arm");
  cmd->add_option("--epsilon", o.epsilon, "exploration rate for epsilon-greedy");
  cmd->add_option("--out", o.out, "output directory");
}

RunConfig build_config(const CommonOptions& o, const std::string& policy,
                       const std::string& env) {
  nlohmann::json file = nlohmann::json::object();
  if (!o.config_path.empty()) file = read_json_file(o.config_path);
  if (!policy.empty()) file["policy"] = policy;
  if (!env.empty()) file["env"] = env;
  RunConfig c = config_from_json(file);
  if (o.seed) c.seed = *o.seed;
  if (o.horizon) c.horizon = *o.horizon;
  if (o.interval) c.train.interval = *o.interval;
  if (o.minibatches) c.train.minibatches = *o.minibatches;
  if (o.buffer) c.buffer_capacity = *o.buffer;
  if (o.epsilon) c.epsilon = *o.epsilon;
  validate(c);
  return c;
}

std::vector<std::string> or_default(const std::vector<std::string>& v) {
  return v.empty() ? std::vector<std::string>{""} : v;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' ? ch : '_';
  return out;
}

void write_config(const fs::path& path, const RunConfig& c) {
  write_file(path, [&](std::ostream& os) { os << to_json(c).dump(2) << '\n'; });
}

void report_failures(const BatchResult& r) {
  for (const auto& f : r.failures)
    std::fprintf(stderr, "nlts: seed %llu failed: %s\n",
                 static_cast<unsigned long long>(f.seed), f.message.c_str());
}

int cmd_run(const CommonOptions& o) {
  const RunConfig c = build_config(o, or_default(o.policies)[0], or_default(o.envs)[0]);
  const fs::path dir = fs::path(o.out) / to_string(c.policy) / std::to_string(c.seed);
  const RunTrace trace = run_episode(c);
  write_file(dir / "steps.csv", [&](std::ostream& os) { write_steps_csv(os, trace); });
  write_config(dir / "config.json", c);
  const double rewards[] = {trace.cumulative_reward};
  write_file(fs::path(o.out) / "summary.csv", [&](std::ostream& os) {
    write_summary_header(os);
    write_summary_row(os, to_string(c.policy), summarize(rewards));
  });
  std::printf("%s %s seed=%llu cum_reward=%.4f cum_regret=%.4f\n",
              to_string(c.policy).c_str(), c.env.c_str(),
              static_cast<unsigned long long>(c.seed), trace.cumulative_reward,
              trace.cumulative_regret);
  std::printf("time select=%.2fs update=%.2fs train=%.2fs matching=%.2fs\n",
              trace.timing.select_s, trace.timing.update_s, trace.timing.train_s,
              trace.timing.matching_s);
  return 0;
}

int cmd_batch(const CommonOptions& o, std::size_t runs, std::size_t parallelism) {
  const auto envs = or_default(o.envs);
  const auto policies = or_default(o.policies);
  const bool multi_env = envs.size() > 1;
  std::ostringstream table;
  table << "env,policy,runs,mean_cum_reward,std_cum_reward\n";
  int status = 0;
  for (const auto& env : envs) {
    const fs::path root = multi_env ? fs::path(o.out) / slug(env) : fs::path(o.out);
    std::ostringstream summary;
    write_summary_header(summary);
    for (const auto& policy : policies) {
      RunConfig c = build_config(o, policy, env);
      BatchResult res;
      if (c.policy == Policy::kEpsilonGreedy && !o.epsilon) {
        auto grid = run_epsilon_grid(c, runs, parallelism);
        std::ostringstream g;
        g << "epsilon,runs,mean_cum_reward,std_cum_reward\n";
        for (const auto& [eps, s] : grid.grid)
          g << format_real(eps) << ',' << s.runs << ',' << format_real(s.mean) << ','
            << format_real(s.stddev) << '\n';
        write_file(root / "epsilon_grid.csv", [&](std::ostream& os) { os << g.str(); });
        res = std::move(grid.best);
        c.epsilon = grid.best_epsilon;
        for (std::size_t i = 0; i < res.seeds.size(); ++i)
          write_file(root / to_string(c.policy) / std::to_string(res.seeds[i]) / "steps.csv",
                     [&](std::ostream& os) { write_steps_csv(os, res.traces[i]); });
      } else {
        res = run_batch(c, runs, parallelism, root);
      }
      for (std::uint64_t s : res.seeds) {
        RunConfig echo = c;
        echo.seed = s;
        write_config(root / to_string(c.policy) / std::to_string(s) / "config.json", echo);
      }
      report_failures(res);
      if (!res.failures.empty()) status = 1;
      write_summary_row(summary, to_string(c.policy), res.reward);
      table << env << ',';
      write_summary_row(table, to_string(c.policy), res.reward);
      std::printf("%-22s %-24s runs=%zu/%zu mean=%.2f std=%.2f\n",
                  to_string(c.policy).c_str(), env.empty() ? c.env.c_str() : env.c_str(),
                  res.reward.runs, runs, res.reward.mean, res.reward.stddev);
    }
    write_file(root / "summary.csv", [&](std::ostream& os) { os << summary.str(); });
  }
  if (multi_env)
    write_file(fs::path(o.out) / "table.csv", [&](std::ostream& os) { os << table.str(); });
  return status;
}

int cmd_report(const std::string& dir, std::size_t window,
               std::optional<std::size_t> interval) {
  require(fs::is_directory(dir), ErrorCode::kIo, dir + " is not a directory");
  std::ostringstream curves, spikes;
  bool first = true;
  std::size_t found = 0;
  for (Policy p : kAllPolicies) {
    const fs::path pdir = fs::path(dir) / to_string(p);
    if (!fs::is_directory(pdir)) continue;
    std::vector<fs::path> runs;
    for (const auto& entry : fs::directory_iterator(pdir))
      if (fs::exists(entry.path() / "steps.csv")) runs.push_back(entry.path());
    if (runs.empty()) continue;
    std::sort(runs.begin(), runs.end());
    std::vector<RunTrace> traces;
    for (const auto& r : runs) {
      std::ifstream is(r / "steps.csv");
      traces.push_back(read_steps_csv(is));
    }
    std::size_t l = interval.value_or(0);
    if (!interval) {
      const fs::path cfg = runs.front() / "config.json";
      require(fs::exists(cfg), ErrorCode::kIo,
              "no --interval given and " + cfg.string() + " is missing");
      l = config_from_json(read_json_file(cfg.string())).train.interval;
    }
    write_curve_csv(curves, to_string(p), traces, first);
    const auto rows = forgetting_report(traces, l, window);
    write_spikes_csv(spikes, to_string(p), rows, first);
    first = false;
    ++found;
    std::printf("%s: %zu runs, L=%zu\n", to_string(p).c_str(), traces.size(), l);
    for (const auto& r : rows)
      std::printf("  k=%-3zu step=%-6zu window_mean_regret=%.4f\n", r.boundary, r.step,
                  r.mean_regret);
  }
  require(found > 0, ErrorCode::kIo, "no <policy>/<seed>/steps.csv traces under " + dir);
  write_file(fs::path(dir) / "curves.csv", [&](std::ostream& os) { os << curves.str(); });
  write_file(fs::path(dir) / "spikes.csv", [&](std::ostream& os) { os << spikes.str(); });
  return 0;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& r : run_selftest()) {
    std::printf("%s  %s (%s)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Limited-memory neural-linear Thompson sampling experiments"};
  app.require_subcommand(1);

  CommonOptions run_opts, batch_opts;
  auto* run = app.add_subcommand("run", "single run");
  add_common(run, run_opts, false);

  auto* batch = app.add_subcommand("batch", "multi-seed runs");
  add_common(batch, batch_opts, true);
  std::size_t runs = 20, parallelism = 1;
  batch->add_option("--runs", runs, "number of seeds")->check(CLI::PositiveNumber);
  batch->add_option("--parallelism", parallelism, "worker threads")
      ->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "regret curves and spike tables");
  std::string report_dir = "runs";
  std::size_t window = 50;
  std::optional<std::size_t> report_interval;
  report->add_option("--out", report_dir, "batch directory holding <policy>/<seed>/");
  report->add_option("--window", window, "steps after each boundary")
      ->check(CLI::PositiveNumber);
  report->add_option("--interval", report_interval, "training interval L");

  auto* self = app.add_subcommand("selftest", "invariant suite");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_opts);
    if (*batch) return cmd_batch(batch_opts, runs, parallelism);
    if (*report) return cmd_report(report_dir, window, report_interval);
    if (*self) return cmd_selftest();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "nlts: error: %s\n", e.what());
    return 2;
  }
  return 0;
}
