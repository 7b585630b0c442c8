#pragma once

#include <random>
#include <span>

#include "nlts/error.hpp"
#include "nlts/linalg.hpp"
#include "nlts/rng.hpp"

namespace nlts {

inline double sample_standard_normal(Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  return n01(rng);
}

inline Vec sample_standard_normal(Rng& rng, std::size_t n) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec z(n);
  for (double& v : z) v = n01(rng);
  return z;
}

/// mean + cov_factor * z, z ~ N(0, I). cov_factor is lower triangular with
/// cov_factor * cov_factor^T the intended covariance.
inline Vec sample_mvn(Rng& rng, std::span<const double> mean,
                      const Mat& cov_factor) {
  require(cov_factor.rows() == mean.size() && cov_factor.cols() == mean.size(),
          ErrorCode::kDimensionMismatch, "sample_mvn");
  const Vec z = sample_standard_normal(rng, mean.size());
  Vec x(mean.begin(), mean.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto li = cov_factor.row(i);
    double s = 0.0;
    for (std::size_t k = 0; k <= i; ++k) s += li[k] * z[k];
    x[i] += s;
  }
  return x;
}

/// Draw from N(mean, scale^2 * P^{-1}) given the Cholesky factor L of the
/// precision P = L L^T: x = mean + scale * L^{-T} z. Avoids forming P^{-1}.
inline Vec sample_mvn_precision(Rng& rng, std::span<const double> mean,
                                const Mat& precision_factor, double scale) {
  require(precision_factor.rows() == mean.size(),
          ErrorCode::kDimensionMismatch, "sample_mvn_precision");
  const Vec z = sample_standard_normal(rng, mean.size());
  Vec x = back_substitute_t(precision_factor, z);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = mean[i] + scale * x[i];
  return x;
}

/// 1/Y with Y ~ Gamma(shape a, rate b).
inline double sample_inv_gamma(Rng& rng, double a, double b) {
  require(a > 0.0 && std::isfinite(a), ErrorCode::kInvalidParameter,
          "inverse-gamma shape must be > 0");
  require(b > 0.0 && std::isfinite(b), ErrorCode::kInvalidParameter,
          "inverse-gamma scale must be > 0");
  std::gamma_distribution<double> gamma(a, 1.0 / b);
  double y = gamma(rng);
  // Gamma draws can underflow to 0 only for absurd rates; keep the result
  // strictly positive and finite.
  while (!(y > 0.0)) y = gamma(rng);
  return 1.0 / y;
}

}  // namespace nlts
