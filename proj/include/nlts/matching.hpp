#pragma once

// Likelihood matching across a representation change.
//
// For one arm, the buffer holds n contexts evaluated under the old features
// (rows of old_features) and the new ones (rows of new_features). The old
// posterior precision assigns each context a predictive variance
//   s_j^2 = phi_old_j' Phi_old^{-1} phi_old_j.
// The covariance prior for the new features is Phi0 = M^{-1}, where M is the
// PSD matrix minimizing
//   sum_j (<phi_j phi_j', M> - s_j^2)^2,
// solved by projected gradient descent on the PSD cone.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "nlts/error.hpp"
#include "nlts/linalg.hpp"
#include "nlts/mlp.hpp"

namespace nlts {

struct MatchingProblem {
  Mat old_features;   // n x g
  Mat new_features;   // n x g
  Mat old_precision;  // g x g, Phi0 + Phi of the old posterior
  Vec old_mean;       // g, old mu_hat
};

enum class StepRule { kFixed, kBacktracking };

struct SolverConfig {
  std::size_t max_iters = 2000;
  StepRule step_rule = StepRule::kBacktracking;
  double tolerance = 1e-10;  // stop when relative objective decrease drops below
  double ridge = 1e-6;       // times mean(diag(M)), added before inverting M
};

struct SolverIterate {
  std::size_t iteration;
  double objective;
  double step;
};

struct CovariancePrior {
  Mat prior_precision;  // Phi0
  Mat covariance;       // M, the PSD minimizer (before the ridge)
  double residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

inline void validate(const MatchingProblem& p) {
  require(p.old_features.rows() == p.new_features.rows(),
          ErrorCode::kDimensionMismatch,
          "old and new feature matrices have different row counts");
  require(p.old_precision.is_square() &&
              p.old_features.cols() == p.old_precision.rows(),
          ErrorCode::kDimensionMismatch, "old precision shape");
  require(p.old_mean.empty() || p.old_mean.size() == p.old_precision.rows(),
          ErrorCode::kDimensionMismatch, "old mean shape");
}

inline void validate(const SolverConfig& c) {
  require(c.tolerance > 0.0, ErrorCode::kInvalidParameter,
          "solver tolerance must be > 0");
  require(c.ridge >= 0.0, ErrorCode::kInvalidParameter, "ridge must be >= 0");
  require(c.max_iters >= 1, ErrorCode::kInvalidParameter, "max_iters >= 1");
}

/// s_j^2 = phi_old_j' Phi_old^{-1} phi_old_j for every buffer row.
inline Vec variance_targets(const MatchingProblem& p) {
  validate(p);
  const Mat l = cholesky(p.old_precision);
  Vec s2(p.old_features.rows());
  for (std::size_t j = 0; j < s2.size(); ++j) {
    const Vec y = forward_substitute(l, p.old_features.row(j));
    s2[j] = dot(y, y);
  }
  return s2;
}

/// Residuals <phi_j phi_j', M> - s_j^2.
inline Vec covariance_residuals(const Mat& features, const Mat& m,
                                std::span<const double> s2) {
  const Mat fm = matmul(features, m);
  Vec r(features.rows());
  for (std::size_t j = 0; j < r.size(); ++j)
    r[j] = dot(fm.row(j), features.row(j)) - s2[j];
  return r;
}

inline double covariance_objective(const Mat& features, const Mat& m,
                                   std::span<const double> s2) {
  const Vec r = covariance_residuals(features, m, s2);
  return dot(r, r);
}

/// 2 sum_j r_j phi_j phi_j'.
inline Mat covariance_gradient(const Mat& features,
                               std::span<const double> residuals) {
  const std::size_t g = features.cols();
  Mat grad(g, g);
  for (std::size_t j = 0; j < features.rows(); ++j)
    add_outer(grad, features.row(j), 2.0 * residuals[j]);
  return grad;
}

namespace detail {

// Largest eigenvalue of K_jk = (phi_j . phi_k)^2 by power iteration. The
// objective's Hessian is 2K in the span of {phi_j phi_j'}, so 2*lambda_max(K)
// is its Lipschitz constant.
inline double covariance_lipschitz(const Mat& features) {
  const std::size_t n = features.rows();
  Mat k(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double d = dot(features.row(i), features.row(j));
      k(i, j) = k(j, i) = d * d;
    }
  Vec v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    Vec w = matvec(k, v);
    const double nw = norm(w);
    if (nw == 0.0) return 0.0;
    const double next = dot(v, w);
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
    if (std::abs(next - lambda) <= 1e-6 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  // Power iteration approaches from below; pad the estimate.
  return 2.0 * lambda * 1.05;
}

}  // namespace detail

/// Projected gradient descent for the covariance prior. M starts at
/// Phi_old^{-1}. Under backtracking every accepted step satisfies the
/// sufficient-decrease test, so the objective is non-increasing; the first
/// trial step of each iteration is the Barzilai-Borwein estimate, floored at
/// 1/Lipschitz where the test is guaranteed to pass.
inline CovariancePrior solve_covariance_prior(
    const MatchingProblem& p, const SolverConfig& cfg = {},
    std::vector<SolverIterate>* trace = nullptr) {
  validate(p);
  validate(cfg);
  const std::size_t n = p.new_features.rows();
  const std::size_t g = p.new_features.cols();
  require(n >= 1, ErrorCode::kInvalidParameter,
          "covariance matching needs at least one buffer row");
  const Mat& feats = p.new_features;
  const Vec s2 = variance_targets(p);

  Mat m = psd_project(inverse_spd(p.old_precision));
  Vec r = covariance_residuals(feats, m, s2);
  double obj = dot(r, r);
  const double lipschitz = detail::covariance_lipschitz(feats);
  const double base_step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
  // Objective values this small relative to the targets are exact fits.
  const double floor_obj = 1e-28 * (1.0 + dot(s2, s2));

  if (trace) trace->push_back({0, obj, 0.0});
  CovariancePrior out;
  Mat prev_m, prev_grad;
  std::size_t iter = 0;
  while (iter < cfg.max_iters) {
    if (obj <= floor_obj || lipschitz == 0.0) {
      out.converged = true;
      break;
    }
    const Mat grad = covariance_gradient(feats, r);
    double step = base_step;
    if (cfg.step_rule == StepRule::kBacktracking && iter > 0) {
      const Mat dm = m - prev_m;
      const Mat dg = grad - prev_grad;
      const double sy = frobenius_dot(dm, dg);
      if (sy > 0.0)
        step = std::clamp(frobenius_dot(dm, dm) / sy, base_step,
                          1e6 * base_step);
    }

    Mat candidate;
    Vec cand_r;
    double cand_obj = 0.0;
    for (;;) {
      candidate = psd_project(m - step * grad);
      cand_r = covariance_residuals(feats, candidate, s2);
      cand_obj = dot(cand_r, cand_r);
      if (cfg.step_rule == StepRule::kFixed) break;
      // f(x+) <= f(x) + <grad, x+ - x> + |x+ - x|^2 / (2 step)
      const Mat d = candidate - m;
      const double model =
          obj + frobenius_dot(grad, d) + frobenius_dot(d, d) / (2.0 * step);
      if (cand_obj <= model) break;
      if (step <= base_step * (1.0 + 1e-12)) break;
      step = std::max(0.5 * step, base_step);
    }
    ++iter;
    if (cand_obj > obj) {
      // At the guaranteed step only rounding can raise the objective.
      if (cand_obj - obj <= 1e-10 * obj + floor_obj) {
        out.converged = true;
        break;
      }
      fail(ErrorCode::kSolverDiverged,
           "objective increased from " + std::to_string(obj) + " to " +
               std::to_string(cand_obj) + " at iteration " +
               std::to_string(iter));
    }
    const double rel_decrease = (obj - cand_obj) / std::max(obj, floor_obj);
    prev_m = std::move(m);
    prev_grad = grad;
    m = std::move(candidate);
    r = std::move(cand_r);
    obj = cand_obj;
    if (trace) trace->push_back({iter, obj, step});
    if (rel_decrease < cfg.tolerance) {
      out.converged = true;
      break;
    }
  }

  double mean_diag = nlts::trace(m) / static_cast<double>(g);
  if (!(mean_diag > 0.0)) mean_diag = 1.0;
  Mat regularized = m + Mat::identity(g, cfg.ridge * mean_diag);
  out.prior_precision = inverse_spd(regularized);
  out.covariance = std::move(m);
  out.residual = obj;
  out.iterations = iter;
  return out;
}

inline void write_solver_trace_csv(std::ostream& os,
                                   const std::vector<SolverIterate>& trace) {
  os << "iteration,objective,step\n";
  const auto old_precision = os.precision(17);
  for (const auto& t : trace)
    os << t.iteration << ',' << t.objective << ',' << t.step << '\n';
  os.precision(old_precision);
}

struct AnalyticalPrior {
  Mat prior_precision;
  Vec prior_mean;
};

/// Closed-form priors when the buffer holds exactly g rows and both feature
/// matrices are invertible. With T = E_old^{-1} E_new (rows are contexts):
///   Phi0 = T' Phi_old T       so that E_new Phi0^{-1} E_new' = E_old Phi_old^{-1} E_old'
///   mu0  = E_new^{-1} E_old mu_old   so that E_new mu0 = E_old mu_old
inline AnalyticalPrior analytical_prior(const MatchingProblem& p,
                                        double max_condition = 1e8) {
  validate(p);
  const std::size_t g = p.old_precision.rows();
  require(p.new_features.rows() == g && p.new_features.cols() == g,
          ErrorCode::kNotInvertible,
          "closed-form prior needs exactly g buffer rows (have " +
              std::to_string(p.new_features.rows()) + ", g=" +
              std::to_string(g) + ")");
  const Mat old_inv = inverse(p.old_features, max_condition);
  const Mat new_inv = inverse(p.new_features, max_condition);
  const Mat t = matmul(old_inv, p.new_features);
  AnalyticalPrior out;
  out.prior_precision =
      symmetrize(matmul(transpose(t), matmul(p.old_precision, t)));
  out.prior_mean = p.old_mean.empty()
                       ? Vec(g, 0.0)
                       : matvec(new_inv, matvec(p.old_features, p.old_mean));
  return out;
}

/// Linear-matching mean prior mu0 = E_new^{-1} E_old mu_old, or nullopt when
/// the buffer is not square or too ill-conditioned to invert.
inline std::optional<Vec> linear_matching_mean_prior(const MatchingProblem& p,
                                                     double max_condition = 1e8) {
  validate(p);
  if (p.new_features.rows() != p.new_features.cols()) return std::nullopt;
  try {
    const Mat new_inv = inverse(p.new_features, max_condition);
    return matvec(new_inv, matvec(p.old_features, p.old_mean));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kNotInvertible) return std::nullopt;
    throw;
  }
}

inline Vec mean_prior_from_weights(const MlpParams& params, std::size_t arm) {
  return last_layer_weights(params, arm);
}

}  // namespace nlts
