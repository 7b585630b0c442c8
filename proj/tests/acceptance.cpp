// Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nlts/nlts.hpp"
#include "oracles.hpp"

using namespace nlts;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// Wheel batches are shared by criteria 1 and 2.
std::map<std::pair<Policy, double>, BatchResult>& wheel_cache() {
  static std::map<std::pair<Policy, double>, BatchResult> cache;
  return cache;
}

const BatchResult& wheel_batch(Policy policy, double delta) {
  auto& cache = wheel_cache();
  const auto key = std::make_pair(policy, delta);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  RunConfig c = default_config(policy, fmt("wheel:delta=%g", delta));
  c.seed = 0;
  BatchResult r = run_batch(c, 20, workers());
  for (const auto& f : r.failures)
    std::fprintf(stderr, "seed %llu failed: %s\n", static_cast<unsigned long long>(f.seed),
                 f.message.c_str());
  return cache.emplace(key, std::move(r)).first->second;
}

bool complete(const BatchResult& r) { return r.failures.empty() && r.reward.runs == 20; }

Outcome wheel_rewards() {
  const BatchResult& lin = wheel_batch(Policy::kLinearTs, 0.5);
  const BatchResult& lim = wheel_batch(Policy::kNeuralLinearLimited, 0.5);
  const double gap = lim.reward.mean - lin.reward.mean;
  const bool ok = complete(lin) && complete(lim) && lin.reward.mean >= 720 &&
                  lin.reward.mean <= 760 && lim.reward.mean >= 830 &&
                  lim.reward.mean <= 960 && gap >= 60;
  return {ok, fmt("linear %.2f +- %.2f in [720, 760], limited %.2f +- %.2f in [830, 960], "
                  "gap %.2f >= 60, 20 seeds",
                  lin.reward.mean, lin.reward.stddev, lim.reward.mean, lim.reward.stddev, gap)};
}

Outcome wheel_ordering() {
  const double deltas[] = {0.5, 0.3, 0.1};
  double lim[3], lin[3];
  bool all = true;
  for (int i = 0; i < 3; ++i) {
    const auto& a = wheel_batch(Policy::kNeuralLinearLimited, deltas[i]);
    const auto& b = wheel_batch(Policy::kLinearTs, deltas[i]);
    all = all && complete(a) && complete(b);
    lim[i] = a.reward.mean;
    lin[i] = b.reward.mean;
  }
  const bool monotone = lim[0] >= lim[1] && lim[1] >= lim[2];
  const bool beats = lim[0] > lin[0] && lim[1] > lin[1] && lim[2] >= lin[2] - 10;
  return {all && monotone && beats,
          fmt("limited %.2f / %.2f / %.2f, linear %.2f / %.2f / %.2f at delta 0.5 / 0.3 / 0.1; "
              "monotone %s, beats linear %s",
              lim[0], lim[1], lim[2], lin[0], lin[1], lin[2], monotone ? "yes" : "no",
              beats ? "yes" : "no")};
}

Outcome forgetting() {
  const std::string env = "statlog-synth:rows=6000,data_seed=1";
  auto spikes = [&](Policy p) {
    RunConfig c = default_config(p, env);
    const BatchResult r = run_batch(c, 10, workers());
    if (!r.failures.empty()) throw std::runtime_error(r.failures.front().message);
    return forgetting_report(r.traces, c.train.interval, 50);
  };
  const auto none = spikes(Policy::kAblationNoPrior);
  const auto both = spikes(Policy::kNeuralLinearLimited);
  int higher = 0;
  double sum_none = 0.0, sum_both = 0.0;
  std::string windows;
  for (std::size_t k = 2; k <= 8; ++k) {
    const double a = none[k - 1].mean_regret, b = both[k - 1].mean_regret;
    higher += a > b;
    sum_none += a;
    sum_both += b;
    windows += fmt(" k%zu=%.3f/%.3f", k, a, b);
  }
  const double ratio = sum_both > 0.0 ? sum_none / sum_both : INFINITY;
  return {higher >= 5 && ratio >= 1.5,
          fmt("no-prior above both-priors in %d/7 windows, spike ratio %.2f >= 1.5;", higher,
              ratio) +
              windows};
}

Outcome closed_form_restart() {
  double worst = 0.0;
  std::uint64_t seed = 1000;
  for (std::size_t g : {3u, 5u, 10u})
    for (std::size_t m : {20u, 50u})
      worst = std::max(worst, oracle::forgotten_data_restart(g, m, seed++).mean_rel_err);
  return {worst < 1e-6, fmt("max relative error %.3g < 1e-6 over g in {3,5,10}, m in {20,50}",
                            worst)};
}

Outcome fixed_point() {
  Rng rng(2024);
  double worst_residual = 0.0, worst_var = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t g = 50, n = 100;
    Mat feats(n, g), a(g, g);
    for (double& v : feats.data()) v = sample_standard_normal(rng);
    for (double& v : a.data()) v = sample_standard_normal(rng);
    const MatchingProblem p{feats, feats, gram(a) + Mat::identity(g, 0.5), Vec{}};
    const auto res = solve_covariance_prior(p);
    const Vec s2 = variance_targets(p);
    const Vec r = covariance_residuals(feats, inverse_spd(res.prior_precision), s2);
    worst_residual = std::max(worst_residual, res.residual);
    for (double v : r) worst_var = std::max(worst_var, std::abs(v));
  }
  return {worst_residual < 1e-6 && worst_var < 1e-4,
          fmt("100 instances g=50 n=100: max residual %.3g < 1e-6, max variance error %.3g < 1e-4",
              worst_residual, worst_var)};
}

Outcome online_batch() {
  Rng rng(77);
  double err_phi = 0.0, err_f = 0.0, err_mu = 0.0, err_b = 0.0;
  const NoiseHyperPrior hyper;
  for (int stream = 0; stream < 10000; ++stream) {
    const std::size_t g = 1 + rng.below(8), k = 1 + rng.below(40);
    const Vec mu0 = sample_standard_normal(rng, g);
    const Mat prior = Mat::identity(g, hyper.lambda0);
    ArmPosterior online(prior, mu0, hyper), batch(g, hyper);
    Mat x(k, g);
    Vec y(k);
    for (std::size_t j = 0; j < k; ++j) {
      const Vec phi = sample_standard_normal(rng, g);
      std::copy(phi.begin(), phi.end(), x.row(j).begin());
      y[j] = 2.0 * sample_standard_normal(rng);
      online.update(phi, y[j]);
    }
    batch.restart_with_priors(prior, mu0, x, y);
    for (std::size_t i = 0; i < g * g; ++i)
      err_phi = std::max(err_phi, std::abs(online.data_precision().data()[i] -
                                           batch.data_precision().data()[i]));
    for (std::size_t i = 0; i < g; ++i) {
      err_f = std::max(err_f, std::abs(online.f()[i] - batch.f()[i]));
      err_mu = std::max(err_mu, std::abs(online.mean()[i] - batch.mean()[i]));
    }
    err_b = std::max(err_b, std::abs(online.scale() - batch.scale()) /
                                std::max(1.0, batch.scale()));
  }
  const bool ok = err_phi < 1e-9 && err_f < 1e-9 && err_mu < 1e-9 && err_b < 1e-8;
  return {ok, fmt("10^4 streams: Phi %.2g, f %.2g, mu %.2g (< 1e-9), b %.2g (< 1e-8)", err_phi,
                  err_f, err_mu, err_b)};
}

Outcome gradients() {
  Rng rng(31);
  double worst_mlp = 0.0, worst_cov = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    MlpParams p = make_mlp(3, {6, 4}, 3, rng);
    for (auto& l : p.layers) {
      for (double& w : l.weights.data()) w = 0.5 * sample_standard_normal(rng);
      for (double& b : l.bias) b = 0.1 * sample_standard_normal(rng);
    }
    std::vector<Experience> data{
        {sample_standard_normal(rng, 3), rng.below(3), sample_standard_normal(rng), 0}};
    const std::vector<const Experience*> batch{&data[0]};
    MlpParams grad;
    masked_mse_grad(p, batch, grad);
    const double h = 1e-5;
    auto check = [&](std::span<double> w, std::span<const double> g) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double keep = w[i];
        w[i] = keep + h;
        const double up = masked_mse(p, batch);
        w[i] = keep - h;
        const double down = masked_mse(p, batch);
        w[i] = keep;
        const double fd = (up - down) / (2 * h);
        if (std::abs(fd) < 1e-8 && std::abs(g[i]) < 1e-8) continue;
        worst_mlp = std::max(worst_mlp, std::abs(fd - g[i]) / std::max(std::abs(fd), std::abs(g[i])));
      }
    };
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
      check(p.layers[k].weights.data(), grad.layers[k].weights.data());
      check(p.layers[k].bias, grad.layers[k].bias);
    }

    const std::size_t g = 4, n = 10;
    Mat feats(n, g), a(g, g);
    for (double& v : feats.data()) v = sample_standard_normal(rng);
    for (double& v : a.data()) v = sample_standard_normal(rng);
    Mat m = gram(a);
    Vec s2(n);
    for (double& v : s2) v = 3.0 * std::abs(sample_standard_normal(rng));
    const Mat cg = covariance_gradient(feats, covariance_residuals(feats, m, s2));
    for (std::size_t i = 0; i < g; ++i)
      for (std::size_t j = 0; j < g; ++j) {
        const double keep = m(i, j);
        m(i, j) = keep + 1e-6;
        const double up = covariance_objective(feats, m, s2);
        m(i, j) = keep - 1e-6;
        const double down = covariance_objective(feats, m, s2);
        m(i, j) = keep;
        const double fd = (up - down) / 2e-6;
        worst_cov = std::max(worst_cov, std::abs(fd - cg(i, j)) / std::max(1.0, std::abs(fd)));
      }
  }
  return {worst_mlp < 1e-4 && worst_cov < 1e-5,
          fmt("20 instances: masked-MSE %.2g < 1e-4, covariance objective %.2g < 1e-5", worst_mlp,
              worst_cov)};
}

Outcome sampler_moments() {
  Rng rng(8);
  const int n_ig = 1000000;
  double s3 = 0.0, s4 = 0.0, q4 = 0.0;
  for (int i = 0; i < n_ig; ++i) {
    s3 += sample_inv_gamma(rng, 3.0, 2.0);
    const double x = sample_inv_gamma(rng, 4.0, 2.0);
    s4 += x;
    q4 += x * x;
  }
  const double mean3 = s3 / n_ig;
  const double mean4 = s4 / n_ig;
  const double var4 = (q4 - n_ig * mean4 * mean4) / (n_ig - 1);
  const bool ig_ok = std::abs(mean3 - 1.0) < 0.02 && std::abs(var4 - 2.0 / 9.0) < 0.05 * 2.0 / 9.0;

  const Vec mu{1.0, -2.0, 0.5};
  const Mat cov{{2.0, 0.6, -0.3}, {0.6, 1.0, 0.2}, {-0.3, 0.2, 0.5}};
  const Mat l = cholesky(cov);
  const int n = 100000;
  std::vector<Vec> draws;
  Vec mean(3, 0.0);
  for (int i = 0; i < n; ++i) {
    draws.push_back(sample_mvn(rng, mu, l));
    axpy(1.0 / n, draws.back(), mean);
  }
  Mat second(3, 3);
  for (const auto& x : draws) add_outer(second, x - mean, 1.0 / (n - 1));
  double worst_mean = 0.0, worst_cov = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    worst_mean = std::max(worst_mean, std::abs(mean[i] - mu[i]) / std::sqrt(cov(i, i) / n));
    for (std::size_t j = 0; j < 3; ++j)
      worst_cov = std::max(worst_cov, std::abs(second(i, j) - cov(i, j)) /
                                          std::sqrt(cov(i, i) * cov(j, j)));
  }
  const bool mvn_ok = worst_mean < 4.0 && worst_cov < 0.05;
  return {ig_ok && mvn_ok,
          fmt("inverse-gamma mean %.4f (1 +- 0.02), variance %.4f (0.2222 +- 5%%); normal mean "
              "%.2f standard errors (< 4), covariance %.3f (< 0.05)",
              mean3, var4, worst_mean, worst_cov)};
}

Outcome determinism() {
  int identical = 0, total = 0;
  for (Policy p : kAllPolicies)
    for (const char* env : {"wheel:delta=0.5", "statlog-synth:rows=1000"}) {
      RunConfig c = default_config(p, env);
      c.horizon = 600;
      c.train.interval = 200;
      c.train.minibatches = 50;
      c.seed = 123;
      std::ostringstream a, b;
      write_steps_csv(a, run_episode(c));
      write_steps_csv(b, run_episode(c));
      identical += a.str() == b.str();
      ++total;
    }
  return {identical == total, fmt("%d/%d (policy, env) pairs byte-identical", identical, total)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"wheel rewards at delta 0.5", wheel_rewards},
      {"wheel ordering across delta", wheel_ordering},
      {"forgetting spikes", forgetting},
      {"closed-form restart equals full regression", closed_form_restart},
      {"covariance prior fixed point", fixed_point},
      {"online and batch posterior agree", online_batch},
      {"gradient checks", gradients},
      {"sampler moments", sampler_moments},
      {"byte-identical traces", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.passed;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.passed ? "PASS" : "FAIL",
                criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
