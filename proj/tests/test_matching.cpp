#include <gtest/gtest.h>

#include <sstream>

#include "nlts/matching.hpp"
#include "nlts/mlp.hpp"
#include "oracles.hpp"

using namespace nlts;

namespace {

Mat random_mat(Rng& rng, std::size_t r, std::size_t c) {
  Mat m(r, c);
  for (double& v : m.data()) v = sample_standard_normal(rng);
  return m;
}

Mat random_spd(Rng& rng, std::size_t g) {
  return gram(random_mat(rng, g, g)) + Mat::identity(g, 0.5);
}

double rel_frobenius(const Mat& a, const Mat& b) {
  return frobenius_norm(a - b) / frobenius_norm(b);
}

}  // namespace

TEST(VarianceTargets, IdentityPrecisionUnitRows) {
  const MatchingProblem p{Mat::identity(3), Mat::identity(3), Mat::identity(3), Vec{}};
  EXPECT_EQ(variance_targets(p), Vec(3, 1.0));
}

TEST(VarianceTargets, ScaledPrecision) {
  const MatchingProblem p{Mat::identity(3), Mat::identity(3), Mat::identity(3, 4.0), Vec{}};
  for (double s : variance_targets(p)) EXPECT_DOUBLE_EQ(s, 0.25);
}

TEST(VarianceTargets, MatchesExplicitInverse) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat prec = random_spd(rng, 6);
    const Mat feats = random_mat(rng, 15, 6);
    const Vec s2 = variance_targets({feats, feats, prec, Vec{}});
    const Eigen::MatrixXd inv = oracle::to_eigen(prec).inverse();
    const Eigen::MatrixXd e = oracle::to_eigen(feats);
    for (std::size_t j = 0; j < 15; ++j) {
      const double ref = e.row(j) * inv * e.row(j).transpose();
      EXPECT_NEAR(s2[j], ref, 1e-9 * std::max(1.0, ref));
      EXPECT_GE(s2[j], 0.0);
    }
  }
}

TEST(VarianceTargets, NotPositiveDefinite) {
  const MatchingProblem p{Mat::identity(2), Mat::identity(2), Mat::identity(2, -1.0), Vec{}};
  try {
    variance_targets(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotPositiveDefinite);
  }
}

TEST(VarianceTargets, RowMismatch) {
  const MatchingProblem p{Mat(3, 2), Mat(2, 2), Mat::identity(2), Vec{}};
  EXPECT_THROW(variance_targets(p), Error);
}

TEST(CovariancePrior, UnchangedRepresentationFixedPoint) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t g = 2 + rng.below(8), n = 1 + rng.below(40);
    const Mat feats = random_mat(rng, n, g);
    const MatchingProblem p{feats, feats, random_spd(rng, g), Vec{}};
    const auto res = solve_covariance_prior(p);
    EXPECT_LT(res.residual, 1e-6);
    const Vec s2 = variance_targets(p);
    const Vec r = covariance_residuals(feats, inverse_spd(res.prior_precision), s2);
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(r[j], 0.0, 1e-4 * std::max(1.0, s2[j]));
  }
}

TEST(CovariancePrior, SingleConstraintFeasible) {
  Mat old_f(1, 3), new_f(1, 3);
  old_f(0, 0) = 1.0;
  new_f(0, 0) = 1.0;
  // s^2 = 2 from an old precision of 1/2 on the first coordinate.
  Mat prec = Mat::identity(3, 3.0);
  prec(0, 0) = 0.5;
  const MatchingProblem p{old_f, new_f, prec, Vec{}};
  const auto res = solve_covariance_prior(p);
  EXPECT_LT(res.residual, 1e-8);
  EXPECT_NEAR(res.covariance(0, 0), 2.0, 1e-4);
}

TEST(CovariancePrior, RecoversClosedFormUnderLinearMap) {
  Rng rng(3);
  for (std::size_t g : {2u, 3u, 4u}) {
    const Eigen::MatrixXd a_old = oracle::well_conditioned(rng, g);
    const Eigen::MatrixXd a_new = oracle::well_conditioned(rng, g);
    // Enough rows to pin every entry of the symmetric M.
    const std::size_t n = g * (g + 1) / 2 + 6;
    const Eigen::MatrixXd b = oracle::gaussian(rng, n, g);
    const Mat e_old = oracle::from_eigen(Eigen::MatrixXd(b * a_old.transpose()));
    const Mat e_new = oracle::from_eigen(Eigen::MatrixXd(b * a_new.transpose()));
    const Mat prec = random_spd(rng, g);
    const MatchingProblem full{e_old, e_new, prec, Vec{}};
    SolverConfig cfg;
    cfg.tolerance = 1e-14;
    cfg.max_iters = 20000;
    const auto res = solve_covariance_prior(full, cfg);

    Mat old_sq(g, g), new_sq(g, g);
    for (std::size_t i = 0; i < g; ++i)
      for (std::size_t j = 0; j < g; ++j) {
        old_sq(i, j) = e_old(i, j);
        new_sq(i, j) = e_new(i, j);
      }
    const auto closed = analytical_prior({old_sq, new_sq, prec, Vec(g, 0.0)});
    EXPECT_LT(rel_frobenius(res.prior_precision, closed.prior_precision), 1e-4) << "g=" << g;
  }
}

TEST(CovariancePrior, BacktrackingObjectiveNonIncreasing) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t g = 5, n = 30;
    const MatchingProblem p{random_mat(rng, n, g), random_mat(rng, n, g), random_spd(rng, g),
                            Vec{}};
    std::vector<SolverIterate> trace;
    solve_covariance_prior(p, {}, &trace);
    ASSERT_GE(trace.size(), 2u);
    for (std::size_t k = 1; k < trace.size(); ++k)
      EXPECT_LE(trace[k].objective, trace[k - 1].objective) << "iteration " << k;
  }
}

TEST(CovariancePrior, OutputSymmetricAndPositiveDefinite) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t g = 6, n = 4 + rng.below(30);
    const MatchingProblem p{random_mat(rng, n, g), random_mat(rng, n, g), random_spd(rng, g),
                            Vec{}};
    const auto res = solve_covariance_prior(p);
    EXPECT_LT(frobenius_norm(res.prior_precision - transpose(res.prior_precision)), 1e-10);
    EXPECT_NO_THROW(cholesky(res.prior_precision, {.allow_jitter = false}));
  }
}

TEST(CovariancePrior, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t g = 4, n = 12;
    const Mat feats = random_mat(rng, n, g);
    Mat m = random_spd(rng, g);
    Vec s2(n);
    for (double& v : s2) v = std::abs(sample_standard_normal(rng)) * 3.0;
    const Mat grad = covariance_gradient(feats, covariance_residuals(feats, m, s2));
    const double h = 1e-6;
    for (std::size_t i = 0; i < g; ++i)
      for (std::size_t j = 0; j < g; ++j) {
        const double keep = m(i, j);
        m(i, j) = keep + h;
        const double up = covariance_objective(feats, m, s2);
        m(i, j) = keep - h;
        const double down = covariance_objective(feats, m, s2);
        m(i, j) = keep;
        const double fd = (up - down) / (2 * h);
        EXPECT_LT(std::abs(fd - grad(i, j)) / std::max(1.0, std::abs(fd)), 1e-5);
      }
  }
}

TEST(CovariancePrior, FixedStepRuleRuns) {
  Rng rng(7);
  const Mat feats = random_mat(rng, 10, 3);
  const MatchingProblem p{feats, random_mat(rng, 10, 3), random_spd(rng, 3), Vec{}};
  SolverConfig cfg;
  cfg.step_rule = StepRule::kFixed;
  cfg.max_iters = 50;
  const auto res = solve_covariance_prior(p, cfg);
  EXPECT_LE(res.iterations, 50u);
  EXPECT_TRUE(std::isfinite(res.residual));
}

TEST(CovariancePrior, InvalidConfigAndEmptyBuffer) {
  const MatchingProblem p{Mat::identity(2), Mat::identity(2), Mat::identity(2), Vec{}};
  SolverConfig cfg;
  cfg.tolerance = 0.0;
  EXPECT_THROW(solve_covariance_prior(p, cfg), Error);
  const MatchingProblem empty{Mat(0, 2), Mat(0, 2), Mat::identity(2), Vec{}};
  EXPECT_THROW(solve_covariance_prior(empty), Error);
}

TEST(CovariancePrior, TraceCsv) {
  std::ostringstream os;
  write_solver_trace_csv(os, {{0, 2.5, 0.0}, {1, 1.0, 0.5}});
  EXPECT_EQ(os.str(), "iteration,objective,step\n0,2.5,0\n1,1,0.5\n");
}

TEST(AnalyticalPrior, IdentityMapping) {
  Rng rng(8);
  const Mat e = random_mat(rng, 4, 4);
  const Mat prec = random_spd(rng, 4);
  const Vec mu = sample_standard_normal(rng, 4);
  const auto out = analytical_prior({e, e, prec, mu});
  EXPECT_LT(rel_frobenius(out.prior_precision, prec), 1e-10);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.prior_mean[i], mu[i], 1e-10);
}

TEST(AnalyticalPrior, DoubledFeaturesScalePriors) {
  Rng rng(9);
  const Mat e = random_mat(rng, 3, 3);
  const Mat prec = random_spd(rng, 3);
  const Vec mu = sample_standard_normal(rng, 3);
  const auto out = analytical_prior({e, 2.0 * e, prec, mu});
  EXPECT_LT(rel_frobenius(out.prior_precision, 4.0 * prec), 1e-10);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out.prior_mean[i], 0.5 * mu[i], 1e-10);
}

TEST(AnalyticalPrior, PreservesPredictionsOnBuffer) {
  Rng rng(10);
  const Mat old_f = random_mat(rng, 5, 5), new_f = random_mat(rng, 5, 5);
  const Mat prec = random_spd(rng, 5);
  const Vec mu = sample_standard_normal(rng, 5);
  const MatchingProblem p{old_f, new_f, prec, mu};
  const auto out = analytical_prior(p);
  const Vec s2_old = variance_targets(p);
  const Vec s2_new = variance_targets({new_f, new_f, out.prior_precision, Vec{}});
  const Vec m_old = matvec(old_f, mu), m_new = matvec(new_f, out.prior_mean);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(s2_new[j], s2_old[j], 1e-8 * std::max(1.0, s2_old[j]));
    EXPECT_NEAR(m_new[j], m_old[j], 1e-8 * std::max(1.0, std::abs(m_old[j])));
  }
}

TEST(AnalyticalPrior, RestartEqualsFullDataRegression) {
  std::uint64_t seed = 100;
  for (std::size_t g : {3u, 5u, 10u})
    for (std::size_t m : {20u, 50u}) {
      const auto res = oracle::forgotten_data_restart(g, m, seed++);
      EXPECT_LT(res.mean_rel_err, 1e-6) << "g=" << g << " m=" << m;
    }
}

TEST(AnalyticalPrior, RejectsNonSquareAndSingular) {
  try {
    analytical_prior({Mat(3, 2), Mat(3, 2), Mat::identity(2), Vec{}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotInvertible);
  }
  Mat singular{{1.0, 2.0}, {2.0, 4.0}};
  try {
    analytical_prior({Mat::identity(2), singular, Mat::identity(2), Vec{}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotInvertible);
  }
}

TEST(LinearMatchingMean, AvailableOnlyWhenSquareAndInvertible) {
  Rng rng(11);
  const Mat e = random_mat(rng, 3, 3);
  const Vec mu = sample_standard_normal(rng, 3);
  const auto ok = linear_matching_mean_prior({e, e, Mat::identity(3), mu});
  ASSERT_TRUE(ok.has_value());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR((*ok)[i], mu[i], 1e-10);
  EXPECT_FALSE(linear_matching_mean_prior({Mat(4, 3), Mat(4, 3), Mat::identity(3), mu}));
  Mat singular(3, 3);
  EXPECT_FALSE(linear_matching_mean_prior({e, singular, Mat::identity(3), mu}));
}

TEST(MeanPriorFromWeights, ZeroOutputLayer) {
  Rng rng(12);
  const MlpParams p = make_mlp(2, {6}, 3, rng);
  EXPECT_EQ(mean_prior_from_weights(p, 2), Vec(6, 0.0));
}

TEST(MeanPriorFromWeights, DelegatesToLastLayer) {
  Rng rng(13);
  MlpParams p = make_mlp(2, {6}, 3, rng);
  for (double& w : p.layers.back().weights.data()) w = sample_standard_normal(rng);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(mean_prior_from_weights(p, a), last_layer_weights(p, a));
}

TEST(MeanPriorFromWeights, TrainingImprovesPriorFit) {
  Rng rng(14);
  ReplayBuffer buf(1, 3, ReplayBuffer::kUnbounded);
  const Vec w{1.0, -0.7, 0.4};
  for (std::uint64_t t = 0; t < 500; ++t) {
    Vec x = sample_standard_normal(rng, 3);
    buf.store({x, 0, dot(w, x), t});
  }
  RewardModel model(make_mlp(3, {16}, 1, rng));
  auto prior_gap = [&] {
    const auto data = buf.per_arm_matrices(
        0, [&](std::span<const double> x) { return features(model.params, x); }, 16);
    const Vec mu0 = mean_prior_from_weights(model.params, 0);
    const Vec f = matvec_t(data.features, data.rewards);
    return norm(matvec(gram(data.features), mu0) - f);
  };
  const double before = prior_gap();
  TrainConfig cfg;
  cfg.minibatches = 1000;
  train(model, buf, cfg, rng);
  EXPECT_LT(prior_gap(), before);
}
