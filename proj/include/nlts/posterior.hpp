#pragma once

// Per-arm Bayesian linear regression with a normal / inverse-gamma prior,
// sampled for Thompson sampling. State per arm:
//   Phi   data precision  sum phi phi^T
//   f     sum phi r
//   Phi0, mu0  prior precision and mean
//   mu_hat = (Phi0 + Phi)^{-1} (Phi0 mu0 + f)
//   a = a0 + n/2,  b = b0 + (R2 + mu0' Phi0 mu0 - mu_hat' (Phi0+Phi) mu_hat)/2

#include <atomic>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nlts/error.hpp"
#include "nlts/linalg.hpp"
#include "nlts/rng.hpp"
#include "nlts/sampling.hpp"

namespace nlts {

struct NoiseHyperPrior {
  double a0 = 6.0;
  double b0 = 6.0;
  double lambda0 = 0.25;  // default prior precision is lambda0 * I
};

inline void validate(const NoiseHyperPrior& h) {
  require(h.a0 > 0.0 && h.b0 > 0.0 && h.lambda0 > 0.0,
          ErrorCode::kInvalidParameter,
          "noise hyperprior a0, b0, lambda0 must all be > 0");
}

inline constexpr double kMinScale = 1e-10;

namespace detail {
inline std::atomic<std::size_t>& scale_clamp_counter() {
  static std::atomic<std::size_t> n{0};
  return n;
}
}  // namespace detail

// Number of times a recomputed b fell to <= 0 and was clamped (process-wide).
inline std::size_t scale_clamp_count() {
  return detail::scale_clamp_counter().load();
}

// How a restart treats the inverse-gamma noise statistics.
enum class NoiseRestart { kFromRows, kCarry };

class ArmPosterior {
 public:
  ArmPosterior(std::size_t dim, const NoiseHyperPrior& hyper)
      : ArmPosterior(Mat::identity(dim, hyper.lambda0), Vec(dim, 0.0), hyper) {}

  ArmPosterior(Mat prior_precision, Vec prior_mean, const NoiseHyperPrior& hyper)
      : hyper_(hyper),
        phi_(prior_precision.rows(), prior_precision.rows()),
        f_(prior_precision.rows(), 0.0),
        prior_precision_(std::move(prior_precision)),
        prior_mean_(std::move(prior_mean)),
        a_(hyper.a0),
        b_(hyper.b0) {
    validate(hyper_);
    require(prior_precision_.is_square() &&
                prior_mean_.size() == prior_precision_.rows(),
            ErrorCode::kDimensionMismatch, "prior shapes disagree");
    refresh();
  }

  std::size_t dim() const noexcept { return f_.size(); }
  const NoiseHyperPrior& hyper() const noexcept { return hyper_; }
  const Mat& data_precision() const noexcept { return phi_; }
  const Vec& f() const noexcept { return f_; }
  const Vec& mean() const noexcept { return mu_hat_; }
  double shape() const noexcept { return a_; }
  double scale() const noexcept { return b_; }
  double sq_reward_sum() const noexcept { return r2_; }
  const Mat& prior_precision() const noexcept { return prior_precision_; }
  const Vec& prior_mean() const noexcept { return prior_mean_; }
  std::size_t count() const noexcept { return count_; }
  // Cholesky factor of Phi0 + Phi.
  const Mat& precision_factor() const noexcept { return factor_; }
  Mat precision() const { return prior_precision_ + phi_; }

  // Fixed-noise mode: sample with a given noise variance instead of drawing it from
  // the inverse-gamma posterior.
  void set_fixed_noise_variance(std::optional<double> v2) {
    if (v2) require(*v2 >= 0.0, ErrorCode::kInvalidParameter,
                    "noise variance must be >= 0");
    fixed_noise_variance_ = v2;
  }
  std::optional<double> fixed_noise_variance() const noexcept {
    return fixed_noise_variance_;
  }

  /// nu^2 ~ InvGamma(a, b), then mu ~ N(mu_hat, nu^2 (Phi0 + Phi)^{-1}).
  Vec sample_weights(Rng& rng) const {
    const double nu2 = fixed_noise_variance_ ? *fixed_noise_variance_
                                             : sample_inv_gamma(rng, a_, b_);
    return sample_mvn_precision(rng, mu_hat_, factor_, std::sqrt(nu2));
  }

  void update(std::span<const double> phi, double r) {
    require(phi.size() == dim(), ErrorCode::kDimensionMismatch,
            "feature dimension " + std::to_string(phi.size()) +
                " != posterior dimension " + std::to_string(dim()));
    require(all_finite(phi) && std::isfinite(r), ErrorCode::kInvalidParameter,
            "non-finite posterior update");
    add_outer(phi_, phi);
    axpy(r, phi, f_);
    r2_ += r * r;
    a_ += 0.5;
    ++count_;
    refresh();
  }

  /// Replace priors and rebuild the data terms from the given rows. With
  /// kFromRows the arm looks as if it had only ever seen them (a = a0 + n/2,
  /// R2 = sum r^2); with kCarry the shape a and the running R2 keep counting
  /// every reward the arm has observed, and only Phi, f are rebuilt.
  void restart_with_priors(Mat prior_precision, Vec prior_mean,
                           const Mat& features, std::span<const double> rewards,
                           NoiseRestart noise = NoiseRestart::kFromRows) {
    require(prior_precision.rows() == dim() && prior_precision.cols() == dim() &&
                prior_mean.size() == dim(),
            ErrorCode::kDimensionMismatch, "restart prior shapes");
    require(features.rows() == rewards.size() &&
                (features.rows() == 0 || features.cols() == dim()),
            ErrorCode::kDimensionMismatch, "restart data shapes");
    prior_precision_ = std::move(prior_precision);
    prior_mean_ = std::move(prior_mean);
    phi_ = gram(features);
    if (features.rows() == 0) phi_ = Mat(dim(), dim());
    f_ = matvec_t(features, rewards);
    if (features.rows() == 0) f_.assign(dim(), 0.0);
    if (noise == NoiseRestart::kFromRows) {
      r2_ = 0.0;
      for (double r : rewards) r2_ += r * r;
      count_ = rewards.size();
      a_ = hyper_.a0 + 0.5 * static_cast<double>(count_);
    }
    refresh();
  }

  void dump_csv_rows(std::ostream& os, std::size_t arm) const {
    auto put_vec = [&](const char* name, std::span<const double> v) {
      os << arm << ',' << name;
      for (double x : v) os << ',' << x;
      os << '\n';
    };
    const auto old_precision = os.precision(17);
    put_vec("a", std::span<const double>(&a_, 1));
    put_vec("b", std::span<const double>(&b_, 1));
    put_vec("R2", std::span<const double>(&r2_, 1));
    put_vec("f", f_);
    put_vec("mu_hat", mu_hat_);
    put_vec("mu0", prior_mean_);
    put_vec("Phi", phi_.data());
    put_vec("Phi0", prior_precision_.data());
    os.precision(old_precision);
  }

 private:
  void refresh() {
    const Mat precision = prior_precision_ + phi_;
    factor_ = cholesky(precision);
    Vec rhs = matvec(prior_precision_, prior_mean_);
    axpy(1.0, f_, rhs);
    mu_hat_ = cholesky_solve(factor_, rhs);
    const double prior_term = quad_form(prior_precision_, prior_mean_);
    const double fit_term = quad_form(precision, mu_hat_);
    b_ = hyper_.b0 + 0.5 * (r2_ + prior_term - fit_term);
    if (!(b_ > 0.0)) {
      ++detail::scale_clamp_counter();
      std::fprintf(stderr, "nlts: warning: posterior scale b=%g clamped to %g\n",
                   b_, kMinScale);
      b_ = kMinScale;
    }
  }

  NoiseHyperPrior hyper_;
  Mat phi_;
  Vec f_;
  Mat prior_precision_;
  Vec prior_mean_;
  Vec mu_hat_;
  Mat factor_;
  double a_;
  double b_;
  double r2_ = 0.0;
  std::size_t count_ = 0;
  std::optional<double> fixed_noise_variance_;
};

/// Draws one weight vector per arm and returns argmax_i phi' mu_i. Ties go to
/// the lowest index.
inline std::size_t select_arm(std::span<const ArmPosterior> posteriors,
                              std::span<const double> phi, Rng& rng) {
  require(!posteriors.empty(), ErrorCode::kInvalidParameter, "no arms");
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    const double v = dot(phi, posteriors[i].sample_weights(rng));
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return best;
}

}  // namespace nlts
