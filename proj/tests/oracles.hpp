#pragma once

// Independent reference computations shared by unit and acceptance tests.
// Everything here goes through Eigen rather than the library's own linear
// algebra.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "nlts/matching.hpp"
#include "nlts/posterior.hpp"
#include "nlts/sampling.hpp"

namespace oracle {

inline Eigen::MatrixXd to_eigen(const nlts::Mat& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

inline Eigen::VectorXd to_eigen(const nlts::Vec& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

inline nlts::Mat from_eigen(const Eigen::MatrixXd& m) {
  nlts::Mat out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

inline nlts::Vec from_eigen(const Eigen::VectorXd& v) {
  return nlts::Vec(v.data(), v.data() + v.size());
}

inline Eigen::MatrixXd gaussian(nlts::Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = nlts::sample_standard_normal(rng);
  return m;
}

// Invertible map with singular values in [0.5, 2].
inline Eigen::MatrixXd well_conditioned(nlts::Rng& rng, Eigen::Index g) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gaussian(rng, g, g),
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::VectorXd s(g);
  for (Eigen::Index i = 0; i < g; ++i) s[i] = 0.5 + 1.5 * rng.uniform();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

struct RestartCase {
  double mean_rel_err = 0.0;  // restarted posterior mean vs full-data regression
};

// Two linear featurizers phi_old = A_old b and phi_new = A_new b. The first m
// samples are forgotten and survive only as the old posterior (Phi_old,
// mu_old) built from old features; the last g samples stay in the buffer.
// The posterior restarted from the closed-form priors plus the buffer must
// equal the least-squares fit on all m + g samples in new features.
inline RestartCase forgotten_data_restart(std::size_t g, std::size_t m, std::uint64_t seed) {
  nlts::Rng rng(seed);
  const Eigen::Index gi = static_cast<Eigen::Index>(g);
  const Eigen::MatrixXd a_old = well_conditioned(rng, gi);
  const Eigen::MatrixXd a_new = well_conditioned(rng, gi);
  const Eigen::VectorXd w = gaussian(rng, gi, 1);
  const Eigen::MatrixXd b_forgot = gaussian(rng, static_cast<Eigen::Index>(m), gi);
  const Eigen::MatrixXd b_kept = gaussian(rng, gi, gi);
  auto rewards = [&](const Eigen::MatrixXd& b) {
    Eigen::VectorXd r = b * w;
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] += 0.3 * nlts::sample_standard_normal(rng);
    return r;
  };
  const Eigen::VectorXd r_forgot = rewards(b_forgot);
  const Eigen::VectorXd r_kept = rewards(b_kept);

  const Eigen::MatrixXd e_old_forgot = b_forgot * a_old.transpose();
  const Eigen::MatrixXd e_old_kept = b_kept * a_old.transpose();
  const Eigen::MatrixXd e_new_forgot = b_forgot * a_new.transpose();
  const Eigen::MatrixXd e_new_kept = b_kept * a_new.transpose();

  const Eigen::MatrixXd phi_old = e_old_forgot.transpose() * e_old_forgot;
  const Eigen::VectorXd mu_old = phi_old.ldlt().solve(e_old_forgot.transpose() * r_forgot);

  const nlts::MatchingProblem problem{from_eigen(e_old_kept), from_eigen(e_new_kept),
                                      from_eigen(phi_old), from_eigen(mu_old)};
  const auto prior = nlts::analytical_prior(problem);
  nlts::ArmPosterior post(g, {6.0, 6.0, 1.0});
  post.restart_with_priors(prior.prior_precision, prior.prior_mean, from_eigen(e_new_kept),
                           from_eigen(r_kept));

  Eigen::MatrixXd e_all(m + g, g);
  e_all << e_new_forgot, e_new_kept;
  Eigen::VectorXd r_all(m + g);
  r_all << r_forgot, r_kept;
  const Eigen::VectorXd full =
      (e_all.transpose() * e_all).ldlt().solve(e_all.transpose() * r_all);
  const Eigen::VectorXd got = to_eigen(post.mean());
  return {(got - full).norm() / full.norm()};
}

}  // namespace oracle
