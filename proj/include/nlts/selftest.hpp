#pragma once

// Quick invariant checks run by `nlts selftest`. Each check is small enough
// that the whole suite finishes in a few seconds.

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nlts/harness.hpp"
#include "nlts/matching.hpp"
#include "nlts/mlp.hpp"
#include "nlts/posterior.hpp"
#include "nlts/replay.hpp"

namespace nlts {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace selftest {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

inline Mat random_mat(Rng& rng, std::size_t r, std::size_t c) {
  Mat m(r, c);
  for (double& v : m.data()) v = sample_standard_normal(rng);
  return m;
}

inline CheckResult online_batch_posterior() {
  Rng rng(11);
  double worst = 0.0;
  for (int s = 0; s < 50; ++s) {
    const std::size_t g = 1 + rng.below(6), n = 1 + rng.below(40);
    NoiseHyperPrior hyper;
    ArmPosterior online(g, hyper), batch(g, hyper);
    Mat x = random_mat(rng, n, g);
    Vec y(n);
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = sample_standard_normal(rng);
      online.update(x.row(j), y[j]);
    }
    batch.restart_with_priors(Mat::identity(g, hyper.lambda0), Vec(g, 0.0), x, y);
    for (std::size_t k = 0; k < g; ++k)
      worst = std::max(worst, rel_err(online.mean()[k], batch.mean()[k]));
    worst = std::max(worst, rel_err(online.scale(), batch.scale()));
  }
  return {"online/batch posterior", worst < 1e-8, "max rel err " + std::to_string(worst)};
}

inline CheckResult mlp_gradient() {
  Rng rng(12);
  MlpParams p = make_mlp(3, {6}, 4, rng);
  for (double& w : p.layers.back().weights.data()) w = 0.3 * sample_standard_normal(rng);
  std::vector<Experience> data;
  for (int j = 0; j < 8; ++j)
    data.push_back({sample_standard_normal(rng, 3), rng.below(4),
                    sample_standard_normal(rng), 0});
  std::vector<const Experience*> batch;
  for (const auto& e : data) batch.push_back(&e);
  MlpParams grad;
  masked_mse_grad(p, batch, grad);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    auto w = p.layers[k].weights.data();
    auto gw = grad.layers[k].weights.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w[i];
      w[i] = keep + h;
      const double up = masked_mse(p, batch);
      w[i] = keep - h;
      const double down = masked_mse(p, batch);
      w[i] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - gw[i]) / std::max(1e-3, std::abs(fd)));
    }
  }
  return {"masked-MSE gradient", worst < 1e-4, "max rel err " + std::to_string(worst)};
}

inline CheckResult covariance_fixed_point() {
  Rng rng(13);
  const std::size_t g = 5, n = 20;
  Mat e = random_mat(rng, n, g);
  Mat a = random_mat(rng, g, g);
  Mat precision = gram(a) + Mat::identity(g, 0.5);
  MatchingProblem p{e, e, precision, Vec(g, 0.0)};
  const auto res = solve_covariance_prior(p);
  const Vec s2 = variance_targets(p);
  const Vec r = covariance_residuals(e, res.covariance, s2);
  double worst = 0.0;
  for (double v : r) worst = std::max(worst, std::abs(v));
  return {"covariance prior fixed point", res.residual < 1e-6 && worst < 1e-4,
          "residual " + std::to_string(res.residual)};
}

inline CheckResult replay_eviction() {
  ReplayBuffer buf(2, 1, 3);
  for (std::uint64_t t = 0; t < 10; ++t)
    buf.store({{static_cast<double>(t)}, t % 2, 0.0, t});
  const auto arm0 = buf.arm_items(0);
  const bool ok = buf.size() == 6 && arm0.size() == 3 && arm0.front()->step == 4 &&
                  arm0.back()->step == 8;
  return {"replay per-arm FIFO", ok, "size " + std::to_string(buf.size())};
}

inline CheckResult short_run_determinism() {
  RunConfig cfg = default_config(Policy::kNeuralLinearLimited, "wheel:delta=0.5");
  cfg.horizon = 300;
  cfg.train.interval = 100;
  cfg.train.minibatches = 20;
  cfg.hidden = {8};
  cfg.seed = 5;
  std::ostringstream a, b;
  const RunTrace t1 = run_episode(cfg);
  write_steps_csv(a, t1);
  write_steps_csv(b, run_episode(cfg));
  double reward = 0.0, regret = 0.0;
  for (const auto& s : t1.steps) {
    reward += s.reward;
    regret += s.regret;
  }
  const bool ok = a.str() == b.str() && reward == t1.cumulative_reward &&
                  regret == t1.cumulative_regret;
  return {"run determinism and trace sums", ok,
          "cumulative reward " + std::to_string(t1.cumulative_reward)};
}

inline CheckResult closed_form_prior() {
  Rng rng(14);
  const std::size_t g = 4;
  Mat old_f = random_mat(rng, g, g), new_f = random_mat(rng, g, g);
  Mat a = random_mat(rng, g, g);
  MatchingProblem p{old_f, new_f, gram(a) + Mat::identity(g, 0.5),
                    sample_standard_normal(rng, g)};
  const auto prior = analytical_prior(p);
  const Vec s2 = variance_targets(p);
  MatchingProblem q{new_f, new_f, prior.prior_precision, prior.prior_mean};
  const Vec s2_new = variance_targets(q);
  const Vec m_old = matvec(old_f, p.old_mean), m_new = matvec(new_f, prior.prior_mean);
  double worst = 0.0;
  for (std::size_t j = 0; j < g; ++j)
    worst = std::max({worst, rel_err(s2[j], s2_new[j]), rel_err(m_old[j], m_new[j])});
  return {"closed-form prior matches predictions", worst < 1e-6,
          "max rel err " + std::to_string(worst)};
}

}  // namespace selftest

inline std::vector<CheckResult> run_selftest() {
  using Check = std::function<CheckResult()>;
  const Check checks[] = {selftest::online_batch_posterior, selftest::mlp_gradient,
                          selftest::covariance_fixed_point, selftest::replay_eviction,
                          selftest::closed_form_prior, selftest::short_run_determinism};
  std::vector<CheckResult> out;
  for (const auto& c : checks) {
    try {
      out.push_back(c());
    } catch (const std::exception& e) {
      out.push_back({"(exception)", false, e.what()});
    }
  }
  return out;
}

}  // namespace nlts
