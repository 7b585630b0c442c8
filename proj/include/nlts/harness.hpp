#pragma once

// Experiment orchestration: the limited-memory neural-linear loop and its
// baselines, multi-seed batches, per-step traces and forgetting reports.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nlts/envs.hpp"
#include "nlts/error.hpp"
#include "nlts/linalg.hpp"
#include "nlts/matching.hpp"
#include "nlts/mlp.hpp"
#include "nlts/posterior.hpp"
#include "nlts/replay.hpp"
#include "nlts/rng.hpp"

namespace nlts {

enum class Policy {
  kLinearTs,
  kNeuralLinearFull,
  kNeuralLinearLimited,
  kAblationMuPrior,
  kAblationNoPrior,
  kEpsilonGreedy,
};

inline constexpr Policy kAllPolicies[] = {
    Policy::kLinearTs,        Policy::kNeuralLinearFull,
    Policy::kNeuralLinearLimited, Policy::kAblationMuPrior,
    Policy::kAblationNoPrior, Policy::kEpsilonGreedy};

inline std::string to_string(Policy p) {
  switch (p) {
    case Policy::kLinearTs: return "linear-ts";
    case Policy::kNeuralLinearFull: return "neural-linear-full";
    case Policy::kNeuralLinearLimited: return "neural-linear-limited";
    case Policy::kAblationMuPrior: return "ablation-mu-prior";
    case Policy::kAblationNoPrior: return "ablation-no-prior";
    case Policy::kEpsilonGreedy: return "epsilon-greedy";
  }
  return "?";
}

inline Policy parse_policy(const std::string& s) {
  for (Policy p : kAllPolicies)
    if (to_string(p) == s) return p;
  fail(ErrorCode::kInvalidParameter, "unknown policy '" + s + "'");
}

enum class MeanPriorMode { kLastLayerWeights, kLinearMatching };

struct RunConfig {
  Policy policy = Policy::kNeuralLinearLimited;
  std::string env = "wheel:delta=0.5";
  std::size_t horizon = 4000;
  std::uint64_t seed = 0;
  TrainConfig train;  // training interval L and minibatch count P live here
  std::vector<std::size_t> hidden{50};
  std::size_t buffer_capacity = 100;  // per arm
  NoiseHyperPrior noise;
  // Matching runs once per arm at every boundary; a short budget keeps runs
  // fast and the reward is insensitive to it.
  SolverConfig solver{.max_iters = 100};
  MeanPriorMode mean_prior = MeanPriorMode::kLastLayerWeights;
  double epsilon = 0.1;
  // Linear TS only: append a constant 1 to the raw context.
  bool linear_intercept = true;
  // Neural policies: append a constant 1 to phi and the output bias to mu0,
  // so that phi' mu0 reproduces the network's prediction.
  bool bias_feature = true;
  // Whether restarts recount the noise statistics from the buffer or keep
  // the running a and R2.
  NoiseRestart restart_noise = NoiseRestart::kCarry;
  // Linear TS only: sample with this fixed v^2 instead of the inverse-gamma.
  std::optional<double> fixed_noise_variance;
};

inline bool uses_model(Policy p) { return p != Policy::kLinearTs; }

inline void validate(const RunConfig& c) {
  require(c.horizon >= 1, ErrorCode::kInvalidParameter, "horizon must be >= 1");
  validate(c.train);
  validate(c.noise);
  validate(c.solver);
  require(c.buffer_capacity >= 1, ErrorCode::kInvalidParameter,
          "buffer capacity must be >= 1");
  require(c.epsilon >= 0.0 && c.epsilon <= 1.0, ErrorCode::kInvalidParameter,
          "epsilon must lie in [0, 1]");
  if (uses_model(c.policy))
    require(!c.hidden.empty() &&
                std::all_of(c.hidden.begin(), c.hidden.end(),
                            [](std::size_t w) { return w > 0; }),
            ErrorCode::kInvalidParameter, "hidden layer widths must be > 0");
}

// ---------------------------------------------------------------------------
// Environment specs: "wheel:delta=0.5", "linear:dim=5,arms=3,sigma=0.1",
// "csv:path=data.csv,schema=data.schema", "statlog-synth:rows=6000".

struct EnvSpec {
  std::string kind;
  std::map<std::string, std::string> args;

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = args.find(key);
    return it == args.end() ? fallback : it->second;
  }
  double get_double(const std::string& key, double fallback) const {
    auto it = args.find(key);
    if (it == args.end()) return fallback;
    double v;
    require(detail::parse_double(it->second, v), ErrorCode::kInvalidParameter,
            "env argument " + key + "='" + it->second + "' is not a number");
    return v;
  }
};

inline EnvSpec parse_env_spec(const std::string& spec) {
  EnvSpec out;
  const auto colon = spec.find(':');
  out.kind = detail::trim(spec.substr(0, colon));
  require(!out.kind.empty(), ErrorCode::kInvalidParameter, "empty env spec");
  if (colon == std::string::npos) return out;
  for (const auto& item : detail::split_line(spec.substr(colon + 1), ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      // Shorthand: "wheel:0.3" sets delta.
      require(out.kind == "wheel", ErrorCode::kInvalidParameter,
              "env argument '" + item + "' needs key=value");
      out.args["delta"] = item;
    } else {
      out.args[detail::trim(item.substr(0, eq))] = detail::trim(item.substr(eq + 1));
    }
  }
  return out;
}

// Shuttle-shaped data set, generated once per (rows, data_seed) and kept in
// memory; every run shuffles its own copy.
inline Dataset statlog_synth_dataset(std::size_t rows, std::uint64_t data_seed) {
  std::stringstream ss;
  write_statlog_like_csv(ss, rows, data_seed);
  CsvSchema schema;
  schema.has_header = true;
  schema.label_column = "class";
  return parse_csv_dataset(ss, schema);
}

inline std::unique_ptr<Environment> make_environment(const std::string& spec_text,
                                                     std::uint64_t seed,
                                                     std::size_t horizon) {
  const EnvSpec spec = parse_env_spec(spec_text);
  if (spec.kind == "wheel") {
    WheelConfig w;
    w.delta = spec.get_double("delta", w.delta);
    w.sigma = spec.get_double("sigma", w.sigma);
    w.mu_low = spec.get_double("mu_low", w.mu_low);
    w.mu_5 = spec.get_double("mu_5", w.mu_5);
    w.mu_high = spec.get_double("mu_high", w.mu_high);
    return std::make_unique<WheelBandit>(w, seed);
  }
  if (spec.kind == "linear") {
    return std::make_unique<LinearGaussianBandit>(
        static_cast<std::size_t>(spec.get_double("dim", 5)),
        static_cast<std::size_t>(spec.get_double("arms", 3)),
        spec.get_double("sigma", 0.1), seed);
  }
  if (spec.kind == "csv") {
    const std::string path = spec.get("path", "");
    require(!path.empty(), ErrorCode::kInvalidParameter, "csv env needs path=");
    CsvSchema schema;
    if (spec.args.count("schema")) {
      schema = load_schema(spec.get("schema", ""));
    } else {
      schema.label_column = spec.get("label", "");
      schema.has_header = spec.get("header", "false") == "true";
      require(!schema.label_column.empty(), ErrorCode::kInvalidParameter,
              "csv env needs schema= or label=");
    }
    Rng shuffle(seed);
    return load_csv_bandit(path, schema, shuffle, horizon);
  }
  if (spec.kind == "statlog-synth") {
    const auto rows = static_cast<std::size_t>(spec.get_double("rows", 6000));
    const auto data_seed = static_cast<std::uint64_t>(spec.get_double("data_seed", 1));
    Rng shuffle(seed);
    return std::make_unique<DatasetBandit>(statlog_synth_dataset(rows, data_seed),
                                           horizon, shuffle);
  }
  fail(ErrorCode::kInvalidParameter, "unknown environment kind '" + spec.kind + "'");
}

// Defaults by experiment: wheel runs retrain every 200 steps for 400
// minibatches, data-set runs every 400 steps for 800.
inline RunConfig default_config(Policy policy, const std::string& env) {
  RunConfig c;
  c.policy = policy;
  c.env = env;
  const std::string kind = parse_env_spec(env).kind;
  if (kind == "csv" || kind == "statlog-synth") {
    c.train.interval = 400;
    c.train.minibatches = 800;
  } else {
    c.train.interval = 200;
    c.train.minibatches = 400;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Traces

struct StepRecord {
  std::size_t step = 0;
  std::size_t arm = 0;
  double reward = 0.0;
  double regret = 0.0;
};

struct PhaseTiming {
  double select_s = 0.0;
  double update_s = 0.0;
  double train_s = 0.0;
  double matching_s = 0.0;
};

struct RunTrace {
  std::vector<StepRecord> steps;
  double cumulative_reward = 0.0;
  double cumulative_regret = 0.0;
  PhaseTiming timing;
  std::vector<TrainReport> train_reports;
  std::size_t solver_iterations = 0;

  void push(const StepRecord& r) {
    steps.push_back(r);
    cumulative_reward += r.reward;
    cumulative_regret += r.regret;
  }
};

class RunFailure : public std::runtime_error {
 public:
  RunFailure(std::size_t step, const std::string& what)
      : std::runtime_error("run failed at step " + std::to_string(step) + ": " +
                           what),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Optional per-step callback, mostly for tests: receives the step index and
// the reward model (nullptr for policies without one) after the step.
using StepObserver = std::function<void(std::size_t, const RewardModel*)>;

namespace detail {

enum : std::uint64_t {
  kStreamEnv = 1,
  kStreamSelect = 2,
  kStreamTrain = 3,
  kStreamInit = 4,
};

class Timer {
 public:
  explicit Timer(double& sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
  ~Timer() {
    sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
                 .count();
  }

 private:
  double& sink_;
  std::chrono::steady_clock::time_point start_;
};

class Agent {
 public:
  Agent(const RunConfig& cfg, std::size_t context_dim, std::size_t num_arms)
      : cfg_(cfg),
        num_arms_(num_arms),
        select_rng_(derive_seed(cfg.seed, kStreamSelect)),
        train_rng_(derive_seed(cfg.seed, kStreamTrain)),
        buffer_(num_arms, context_dim,
                cfg.policy == Policy::kNeuralLinearFull ? ReplayBuffer::kUnbounded
                                                        : cfg.buffer_capacity) {
    if (uses_model(cfg.policy)) {
      Rng init(derive_seed(cfg.seed, kStreamInit));
      model_ = RewardModel(make_mlp(context_dim, cfg.hidden, num_arms, init));
      feature_dim_ = cfg.hidden.back() + (cfg.bias_feature ? 1 : 0);
    } else {
      feature_dim_ = context_dim + (cfg.linear_intercept ? 1 : 0);
    }
    if (cfg.policy != Policy::kEpsilonGreedy) {
      posteriors_.assign(num_arms, ArmPosterior(feature_dim_, cfg.noise));
      if (cfg.policy == Policy::kLinearTs && cfg.fixed_noise_variance)
        for (auto& p : posteriors_) p.set_fixed_noise_variance(cfg.fixed_noise_variance);
    }
  }

  const RewardModel* model() const {
    return uses_model(cfg_.policy) ? &model_ : nullptr;
  }
  const std::vector<ArmPosterior>& posteriors() const { return posteriors_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  Vec featurize(std::span<const double> ctx) const {
    if (uses_model(cfg_.policy)) return model_features(model_.params, ctx);
    Vec phi(ctx.begin(), ctx.end());
    if (cfg_.linear_intercept) phi.push_back(1.0);
    return phi;
  }

  Vec model_features(const MlpParams& params, std::span<const double> ctx) const {
    Vec phi = features(params, ctx);
    if (cfg_.bias_feature) phi.push_back(1.0);
    return phi;
  }

  Vec model_mean_prior(const MlpParams& params, std::size_t arm) const {
    Vec mu = mean_prior_from_weights(params, arm);
    if (cfg_.bias_feature) mu.push_back(params.layers.back().bias[arm]);
    return mu;
  }

  std::size_t act(std::span<const double> ctx, std::span<const double> phi) {
    if (cfg_.policy == Policy::kEpsilonGreedy) {
      if (select_rng_.uniform() < cfg_.epsilon) return select_rng_.below(num_arms_);
      const Vec pred = forward(model_.params, ctx);
      return static_cast<std::size_t>(
          std::max_element(pred.begin(), pred.end()) - pred.begin());
    }
    return select_arm(posteriors_, phi, select_rng_);
  }

  void observe(Experience exp, std::span<const double> phi) {
    if (cfg_.policy != Policy::kEpsilonGreedy)
      posteriors_[exp.arm].update(phi, exp.reward);
    buffer_.store(std::move(exp));
  }

  // Retrain the model and move every arm's posterior onto the new features.
  void retrain(RunTrace& trace) {
    const Policy policy = cfg_.policy;
    struct OldState {
      Mat features;
      Mat precision;
      Vec mean;
    };
    std::vector<OldState> old(num_arms_);
    const bool needs_old = policy == Policy::kNeuralLinearLimited;
    if (needs_old) {
      const MlpParams snapshot = model_.params;
      Featurizer phi_old = [&](std::span<const double> x) {
        return model_features(snapshot, x);
      };
      for (std::size_t a = 0; a < num_arms_; ++a) {
        old[a].features = buffer_.per_arm_matrices(a, phi_old, feature_dim_).features;
        old[a].precision = posteriors_[a].precision();
        old[a].mean = posteriors_[a].mean();
      }
    }
    {
      Timer t(trace.timing.train_s);
      trace.train_reports.push_back(train(model_, buffer_, cfg_.train, train_rng_));
      const auto& rep = trace.train_reports.back();
      if (rep.probe_loss_after > 1.1 * rep.probe_loss_before + 1e-12)
        std::fprintf(stderr,
                     "nlts: warning: probe loss rose from %g to %g during training\n",
                     rep.probe_loss_before, rep.probe_loss_after);
    }
    if (policy == Policy::kEpsilonGreedy) return;

    Timer t(trace.timing.matching_s);
    const MlpParams& params = model_.params;
    Featurizer phi_new = [&](std::span<const double> x) {
      return model_features(params, x);
    };
    const Mat default_precision = Mat::identity(feature_dim_, cfg_.noise.lambda0);
    for (std::size_t a = 0; a < num_arms_; ++a) {
      auto data = buffer_.per_arm_matrices(a, phi_new, feature_dim_);
      Mat prior_precision = default_precision;
      Vec prior_mean(feature_dim_, 0.0);
      if (policy == Policy::kNeuralLinearLimited || policy == Policy::kAblationMuPrior)
        prior_mean = model_mean_prior(params, a);
      if (policy == Policy::kNeuralLinearLimited && data.features.rows() > 0) {
        MatchingProblem problem{std::move(old[a].features), data.features,
                                std::move(old[a].precision), std::move(old[a].mean)};
        auto cov = solve_covariance_prior(problem, cfg_.solver);
        trace.solver_iterations += cov.iterations;
        prior_precision = std::move(cov.prior_precision);
        if (cfg_.mean_prior == MeanPriorMode::kLinearMatching)
          if (auto mu = linear_matching_mean_prior(problem)) prior_mean = std::move(*mu);
      }
      posteriors_[a].restart_with_priors(std::move(prior_precision),
                                         std::move(prior_mean), data.features,
                                         data.rewards, cfg_.restart_noise);
    }
  }

 private:
  const RunConfig& cfg_;
  std::size_t num_arms_;
  std::size_t feature_dim_ = 0;
  Rng select_rng_;
  Rng train_rng_;
  RewardModel model_;
  std::vector<ArmPosterior> posteriors_;
  ReplayBuffer buffer_;
};

}  // namespace detail

/// Runs one episode of cfg.policy against `env`. Module errors abort the run
/// with a RunFailure carrying the failing step.
inline RunTrace run_episode(const RunConfig& cfg, Environment& env,
                            const StepObserver& observer = {}) {
  // A zero-step run is well defined: nothing is played.
  if (cfg.horizon == 0) return {};
  validate(cfg);
  RunTrace trace;
  trace.steps.reserve(cfg.horizon);
  std::size_t step = 0;
  try {
    detail::Agent agent(cfg, env.context_dim(), env.num_arms());
    const std::size_t interval = cfg.train.interval;
    for (; step < cfg.horizon; ++step) {
      const Vec ctx = env.next_context();
      Vec phi;
      std::size_t arm;
      {
        detail::Timer t(trace.timing.select_s);
        if (cfg.policy != Policy::kEpsilonGreedy) phi = agent.featurize(ctx);
        arm = agent.act(ctx, phi);
      }
      const StepOutcome out = env.play(arm);
      trace.push({step, arm, out.realized_reward, out.instantaneous_regret});
      {
        detail::Timer t(trace.timing.update_s);
        agent.observe({ctx, arm, out.realized_reward, step}, phi);
      }
      // Training after the final step could not influence the trace.
      if (uses_model(cfg.policy) && (step + 1) % interval == 0 &&
          step + 1 < cfg.horizon)
        agent.retrain(trace);
      if (observer) observer(step, agent.model());
    }
  } catch (const Error& e) {
    throw RunFailure(step, e.what());
  }
  return trace;
}

inline RunTrace run_episode(const RunConfig& cfg, const StepObserver& observer = {}) {
  auto env = make_environment(cfg.env, derive_seed(cfg.seed, detail::kStreamEnv),
                              cfg.horizon);
  return run_episode(cfg, *env, observer);
}

// ---------------------------------------------------------------------------
// Trace files

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_steps_csv(std::ostream& os, const RunTrace& trace) {
  os << "step,arm,reward,regret\n";
  for (const auto& r : trace.steps)
    os << r.step << ',' << r.arm << ',' << format_real(r.reward) << ','
       << format_real(r.regret) << '\n';
}

inline RunTrace read_steps_csv(std::istream& is) {
  RunTrace trace;
  std::string line;
  require(bool(std::getline(is, line)) && detail::trim(line) == "step,arm,reward,regret",
          ErrorCode::kParseError, "steps file must start with step,arm,reward,regret");
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_line(line, ',');
    double step, arm, reward, regret;
    require(f.size() == 4 && detail::parse_double(f[0], step) &&
                detail::parse_double(f[1], arm) && detail::parse_double(f[2], reward) &&
                detail::parse_double(f[3], regret),
            ErrorCode::kParseError, "steps file line " + std::to_string(lineno));
    trace.push({static_cast<std::size_t>(step), static_cast<std::size_t>(arm),
                reward, regret});
  }
  return trace;
}

inline void write_file(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& body) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  require(bool(os), ErrorCode::kIo, "cannot write " + path.string());
  body(os);
  require(bool(os), ErrorCode::kIo, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Batches

struct Summary {
  std::size_t runs = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single run
};

inline Summary summarize(std::span<const double> values) {
  Summary s;
  s.runs = values.size();
  if (values.empty()) return s;
  // Sorted accumulation makes the result independent of run order.
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct SeedFailure {
  std::uint64_t seed;
  std::string message;
};

struct BatchResult {
  RunConfig config;
  std::vector<std::uint64_t> seeds;   // successful seeds, ascending
  std::vector<RunTrace> traces;       // aligned with seeds
  std::vector<SeedFailure> failures;
  Summary reward;
  Summary regret;
};

/// Runs seeds cfg.seed .. cfg.seed + num_runs - 1 on a pool of `parallelism`
/// workers. When out_dir is set, each trace goes to
/// <out_dir>/<policy>/<seed>/steps.csv.
inline BatchResult run_batch(const RunConfig& cfg, std::size_t num_runs,
                             std::size_t parallelism = 1,
                             const std::optional<std::filesystem::path>& out_dir = {}) {
  require(num_runs >= 1, ErrorCode::kInvalidParameter, "num_runs must be >= 1");
  validate(cfg);
  parallelism = std::clamp<std::size_t>(parallelism, 1, num_runs);
  std::vector<std::optional<RunTrace>> results(num_runs);
  std::vector<std::string> errors(num_runs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < num_runs; i = next++) {
      RunConfig c = cfg;
      c.seed = cfg.seed + i;
      try {
        results[i] = run_episode(c);
        if (out_dir)
          write_file(*out_dir / to_string(c.policy) / std::to_string(c.seed) / "steps.csv",
                     [&](std::ostream& os) { write_steps_csv(os, *results[i]); });
      } catch (const std::exception& e) {
        results[i].reset();
        errors[i] = e.what();
      }
    }
  };
  if (parallelism == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < parallelism; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  BatchResult out;
  out.config = cfg;
  std::vector<double> rewards, regrets;
  for (std::size_t i = 0; i < num_runs; ++i) {
    if (results[i]) {
      out.seeds.push_back(cfg.seed + i);
      rewards.push_back(results[i]->cumulative_reward);
      regrets.push_back(results[i]->cumulative_regret);
      out.traces.push_back(std::move(*results[i]));
    } else {
      out.failures.push_back({cfg.seed + i, errors[i]});
    }
  }
  out.reward = summarize(rewards);
  out.regret = summarize(regrets);
  return out;
}

struct EpsilonGridResult {
  double best_epsilon = 0.0;
  BatchResult best;
  std::vector<std::pair<double, Summary>> grid;
};

/// epsilon-greedy over epsilon in {0.1, ..., 1.0}; keeps the best mean reward.
inline EpsilonGridResult run_epsilon_grid(RunConfig cfg, std::size_t num_runs,
                                          std::size_t parallelism = 1) {
  cfg.policy = Policy::kEpsilonGreedy;
  EpsilonGridResult out;
  bool have = false;
  for (int k = 1; k <= 10; ++k) {
    cfg.epsilon = 0.1 * k;
    auto res = run_batch(cfg, num_runs, parallelism);
    out.grid.emplace_back(cfg.epsilon, res.reward);
    if (!have || res.reward.mean > out.best.reward.mean) {
      out.best = std::move(res);
      out.best_epsilon = cfg.epsilon;
      have = true;
    }
  }
  return out;
}

inline void write_summary_header(std::ostream& os) {
  os << "policy,runs,mean_cum_reward,std_cum_reward\n";
}

inline void write_summary_row(std::ostream& os, const std::string& policy,
                              const Summary& s) {
  os << policy << ',' << s.runs << ',' << format_real(s.mean) << ','
     << format_real(s.stddev) << '\n';
}

// ---------------------------------------------------------------------------
// Reports

struct SpikeRow {
  std::size_t boundary = 0;  // k
  std::size_t step = 0;      // k * L, first step after retraining (0-based)
  double mean_regret = 0.0;  // over [kL, kL + window), averaged over traces
};

/// Mean instantaneous regret right after every training boundary.
inline std::vector<SpikeRow> forgetting_report(std::span<const RunTrace> traces,
                                               std::size_t interval,
                                               std::size_t window) {
  require(!traces.empty(), ErrorCode::kInvalidParameter, "no traces");
  require(interval >= 1 && window >= 1, ErrorCode::kInvalidParameter,
          "interval and window must be >= 1");
  const std::size_t horizon = traces.front().steps.size();
  for (const auto& t : traces)
    require(t.steps.size() == horizon, ErrorCode::kInvalidParameter,
            "traces have different horizons");
  std::vector<SpikeRow> rows;
  for (std::size_t k = 1; k * interval < horizon; ++k) {
    const std::size_t start = k * interval;
    require(start + window <= horizon, ErrorCode::kWindowOverrun,
            "window [" + std::to_string(start) + ", " + std::to_string(start + window) +
                ") runs past the horizon " + std::to_string(horizon));
    double total = 0.0;
    for (const auto& t : traces)
      for (std::size_t s = start; s < start + window; ++s) total += t.steps[s].regret;
    rows.push_back({k, start, total / static_cast<double>(window * traces.size())});
  }
  return rows;
}

inline void write_spikes_csv(std::ostream& os, const std::string& policy,
                             const std::vector<SpikeRow>& rows, bool header = true) {
  if (header) os << "policy,boundary,step,window_mean_regret\n";
  for (const auto& r : rows)
    os << policy << ',' << r.boundary << ',' << r.step << ','
       << format_real(r.mean_regret) << '\n';
}

/// Mean cumulative regret and reward per step across traces.
inline void write_curve_csv(std::ostream& os, const std::string& policy,
                            std::span<const RunTrace> traces, bool header = true) {
  if (header) os << "policy,step,mean_cum_regret,mean_cum_reward\n";
  if (traces.empty()) return;
  std::size_t horizon = traces.front().steps.size();
  for (const auto& t : traces) horizon = std::min(horizon, t.steps.size());
  std::vector<double> regret(traces.size(), 0.0), reward(traces.size(), 0.0);
  for (std::size_t s = 0; s < horizon; ++s) {
    double mr = 0.0, mw = 0.0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      regret[i] += traces[i].steps[s].regret;
      reward[i] += traces[i].steps[s].reward;
      mr += regret[i];
      mw += reward[i];
    }
    const double n = static_cast<double>(traces.size());
    os << policy << ',' << s << ',' << format_real(mr / n) << ','
       << format_real(mw / n) << '\n';
  }
}

}  // namespace nlts
