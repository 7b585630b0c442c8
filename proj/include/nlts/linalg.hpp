#pragma once

// Small dense linear algebra over 64-bit reals: a row-major matrix type,
// Cholesky with jitter escalation, SPD solves, a cyclic Jacobi symmetric
// eigensolver and projection onto the PSD cone. Dimensions in this project
// stay below a few hundred, so everything is straightforward O(n^3).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlts/error.hpp"

namespace nlts {

using Vec = std::vector<double>;

class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorCode::kDimensionMismatch,
            "matrix data length " + std::to_string(data_.size()) +
                " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    require(std::all_of(data_.begin(), data_.end(),
                        [](double v) { return std::isfinite(v); }),
            ErrorCode::kInvalidParameter, "matrix entries must be finite");
  }

  Mat(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      require(r.size() == cols_, ErrorCode::kDimensionMismatch,
              "ragged matrix literal");
      for (double v : r) {
        require(std::isfinite(v), ErrorCode::kInvalidParameter,
                "matrix entries must be finite");
        data_.push_back(v);
      }
    }
  }

  static Mat identity(std::size_t n, double scale = 1.0) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = scale;
    return m;
  }

  static Mat diagonal(std::span<const double> d) {
    Mat m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Basic operations

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::kDimensionMismatch, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), ErrorCode::kDimensionMismatch, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec operator-(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::kDimensionMismatch, "vector sub");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

inline Vec matvec(const Mat& m, std::span<const double> x) {
  require(m.cols() == x.size(), ErrorCode::kDimensionMismatch, "matvec");
  Vec y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

// m^T x
inline Vec matvec_t(const Mat& m, std::span<const double> x) {
  require(m.rows() == x.size(), ErrorCode::kDimensionMismatch, "matvec_t");
  Vec y(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) axpy(x[i], m.row(i), y);
  return y;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  require(a.cols() == b.rows(), ErrorCode::kDimensionMismatch, "matmul");
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// a^T a
inline Mat gram(const Mat& a) {
  Mat g(a.cols(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto x = a.row(r);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] == 0.0) continue;
      auto gi = g.row(i);
      for (std::size_t j = 0; j < x.size(); ++j) gi[j] += x[i] * x[j];
    }
  }
  return g;
}

// m += alpha * x x^T
inline void add_outer(Mat& m, std::span<const double> x, double alpha = 1.0) {
  require(m.rows() == x.size() && m.cols() == x.size(),
          ErrorCode::kDimensionMismatch, "add_outer");
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ai = alpha * x[i];
    if (ai == 0.0) continue;
    auto mi = m.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) mi[j] += ai * x[j];
  }
}

inline Mat operator+(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          ErrorCode::kDimensionMismatch, "matrix add");
  Mat c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
  return c;
}

inline Mat operator-(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          ErrorCode::kDimensionMismatch, "matrix sub");
  Mat c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
  return c;
}

inline Mat operator*(double s, const Mat& a) {
  Mat c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

// Frobenius inner product <a, b> = Trace(a^T b).
inline double frobenius_dot(const Mat& a, const Mat& b) {
  return dot(a.data(), b.data());
}

inline double frobenius_norm(const Mat& a) { return norm(a.data()); }

inline double quad_form(const Mat& m, std::span<const double> x) {
  return dot(x, matvec(m, x));
}

inline double trace(const Mat& m) {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(m.rows(), m.cols()); ++i) t += m(i, i);
  return t;
}

inline Mat symmetrize(const Mat& m) {
  require(m.is_square(), ErrorCode::kDimensionMismatch, "symmetrize");
  Mat s(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      s(i, j) = 0.5 * (m(i, j) + m(j, i));
  return s;
}

inline bool is_symmetric(const Mat& m, double rel_tol = 1e-9) {
  if (!m.is_square()) return false;
  const double scale = std::max(1.0, frobenius_norm(m));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > rel_tol * scale) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Cholesky

namespace detail {

// Plain in-place factorization; returns false on a non-positive pivot.
inline bool cholesky_in_place(Mat& a, double jitter) {
  const std::size_t n = a.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j) + jitter;
    auto rj = a.row(j);
    for (std::size_t k = 0; k < j; ++k) d -= rj[k] * rj[k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      auto ri = a.row(i);
      double s = ri[j];
      for (std::size_t k = 0; k < j; ++k) s -= ri[k] * rj[k];
      ri[j] = s / ljj;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = 0.0;
  return true;
}

inline double mean_abs_diagonal(const Mat& m) {
  if (m.rows() == 0) return 1.0;
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += std::abs(m(i, i));
  s /= static_cast<double>(m.rows());
  return s > 0.0 ? s : 1.0;
}

}  // namespace detail

struct CholeskyOptions {
  // Jitter is eps * mean|diag(m)|, eps escalating by x10 from first to last.
  double first_jitter = 1e-10;
  double last_jitter = 1e-6;
  bool allow_jitter = true;
};

/// Lower-triangular L with L L^T = m. If the plain factorization hits a
/// non-positive pivot, a diagonal jitter is added and escalated; past the last
/// jitter level the matrix is treated as corrupted.
inline Mat cholesky(const Mat& m, const CholeskyOptions& opts = {}) {
  require(m.is_square(), ErrorCode::kDimensionMismatch, "cholesky: not square");
  require(is_symmetric(m), ErrorCode::kInvalidParameter,
          "cholesky: matrix not symmetric");
  Mat l = m;
  if (detail::cholesky_in_place(l, 0.0)) return l;
  if (opts.allow_jitter) {
    const double scale = detail::mean_abs_diagonal(m);
    for (double eps = opts.first_jitter; eps <= opts.last_jitter * 1.0000001;
         eps *= 10.0) {
      l = m;
      if (detail::cholesky_in_place(l, eps * scale)) return l;
    }
  }
  fail(ErrorCode::kNotPositiveDefinite,
       "cholesky failed for " + std::to_string(m.rows()) + "x" +
           std::to_string(m.rows()) + " matrix");
}

// Solves L y = b.
inline Vec forward_substitute(const Mat& l, std::span<const double> b) {
  require(l.rows() == b.size(), ErrorCode::kDimensionMismatch,
          "forward_substitute");
  const std::size_t n = b.size();
  Vec y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    auto li = l.row(i);
    double s = y[i];
    for (std::size_t k = 0; k < i; ++k) s -= li[k] * y[k];
    y[i] = s / li[i];
  }
  return y;
}

// Solves L^T x = y.
inline Vec back_substitute_t(const Mat& l, std::span<const double> y) {
  require(l.rows() == y.size(), ErrorCode::kDimensionMismatch,
          "back_substitute_t");
  const std::size_t n = y.size();
  Vec x(y.begin(), y.end());
  for (std::size_t ii = n; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

inline Vec cholesky_solve(const Mat& l, std::span<const double> rhs) {
  return back_substitute_t(l, forward_substitute(l, rhs));
}

inline Vec solve_spd(const Mat& m, std::span<const double> rhs) {
  require(m.rows() == rhs.size(), ErrorCode::kDimensionMismatch, "solve_spd");
  return cholesky_solve(cholesky(m), rhs);
}

inline Mat cholesky_inverse(const Mat& l) {
  const std::size_t n = l.rows();
  Mat inv(n, n);
  Vec e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    Vec col = cholesky_solve(l, e);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return symmetrize(inv);
}

inline Mat inverse_spd(const Mat& m) { return cholesky_inverse(cholesky(m)); }

// General square inverse via partial-pivot Gauss-Jordan. Throws NotInvertible
// when the estimated condition number exceeds max_condition.
inline Mat inverse(const Mat& m, double max_condition = 1e12) {
  require(m.is_square(), ErrorCode::kDimensionMismatch, "inverse: not square");
  const std::size_t n = m.rows();
  Mat a = m;
  Mat inv = Mat::identity(n);
  double max_pivot = 0.0;
  double min_pivot = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(p, c))) p = r;
    const double piv = a(p, c);
    if (piv == 0.0 || !std::isfinite(piv))
      fail(ErrorCode::kNotInvertible, "singular matrix");
    max_pivot = std::max(max_pivot, std::abs(piv));
    min_pivot = std::min(min_pivot, std::abs(piv));
    if (p != c) {
      std::swap_ranges(a.row(p).begin(), a.row(p).end(), a.row(c).begin());
      std::swap_ranges(inv.row(p).begin(), inv.row(p).end(),
                       inv.row(c).begin());
    }
    const double s = 1.0 / a(c, c);
    for (double& v : a.row(c)) v *= s;
    for (double& v : inv.row(c)) v *= s;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      if (f == 0.0) continue;
      axpy(-f, a.row(c), a.row(r));
      axpy(-f, inv.row(c), inv.row(r));
    }
  }
  // Pivot ratio is a cheap lower bound on the condition number; refine with
  // the 1-norm product which is an upper bound.
  auto one_norm = [](const Mat& x) {
    double best = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) s += std::abs(x(i, j));
      best = std::max(best, s);
    }
    return best;
  };
  const double cond = one_norm(m) * one_norm(inv);
  if (!(cond <= max_condition) || max_pivot / min_pivot > max_condition)
    fail(ErrorCode::kNotInvertible,
         "matrix is ill-conditioned (cond ~ " + std::to_string(cond) + ")");
  return inv;
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition

struct EigenDecomposition {
  Vec values;    // descending
  Mat vectors;   // column k pairs with values[k]
};

namespace detail {

// Householder reduction of the symmetric matrix held in v to tridiagonal
// form (diagonal d, subdiagonal e); v ends up holding the transformation.
inline void tridiagonalize(Mat& v, Vec& d, Vec& e) {
  const int n = static_cast<int>(v.rows());
  for (int j = 0; j < n; ++j) d[j] = v(n - 1, j);
  for (int i = n - 1; i > 0; --i) {
    double scale = 0.0, h = 0.0;
    for (int k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (int j = 0; j < i; ++j) {
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
        v(j, i) = 0.0;
      }
    } else {
      for (int k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (int j = 0; j < i; ++j) e[j] = 0.0;
      for (int j = 0; j < i; ++j) {
        f = d[j];
        v(j, i) = f;
        g = e[j] + v(j, j) * f;
        for (int k = j + 1; k <= i - 1; ++k) {
          g += v(k, j) * d[k];
          e[k] += v(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (int j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (int j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (int j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (int k = j; k <= i - 1; ++k) v(k, j) -= (f * e[k] + g * d[k]);
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
      }
    }
    d[i] = h;
  }
  for (int i = 0; i < n - 1; ++i) {
    v(n - 1, i) = v(i, i);
    v(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (int k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
      for (int j = 0; j <= i; ++j) {
        double g = 0.0;
        for (int k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
        for (int k = 0; k <= i; ++k) v(k, j) -= g * d[k];
      }
    }
    for (int k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
  }
  for (int j = 0; j < n; ++j) {
    d[j] = v(n - 1, j);
    v(n - 1, j) = 0.0;
  }
  v(n - 1, n - 1) = 1.0;
  e[0] = 0.0;
}

// Implicit QL iterations on the tridiagonal (d, e), accumulating into v.
inline bool tridiagonal_ql(Mat& v, Vec& d, Vec& e, int max_iters) {
  const int n = static_cast<int>(v.rows());
  for (int i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  double f = 0.0, tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  for (int l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    int m = l;
    while (m < n && std::abs(e[m]) > eps * tst1) ++m;
    if (m > l) {
      int iter = 0;
      do {
        if (++iter > max_iters) return false;
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (int i = l + 2; i < n; ++i) d[i] -= h;
        f += h;
        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0, s = 0.0, s2 = 0.0;
        const double el1 = e[l + 1];
        for (int i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          for (int k = 0; k < n; ++k) {
            h = v(k, i + 1);
            v(k, i + 1) = s * v(k, i) + c * h;
            v(k, i) = c * v(k, i) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
  return true;
}

}  // namespace detail

/// Symmetric eigendecomposition: Householder tridiagonalization followed by
/// implicit QL. max_iters bounds the QL iterations spent on one eigenvalue.
inline EigenDecomposition eigh(const Mat& m, std::size_t max_iters = 60) {
  require(m.is_square(), ErrorCode::kDimensionMismatch, "eigh: not square");
  require(is_symmetric(m), ErrorCode::kInvalidParameter,
          "eigh: matrix not symmetric");
  const std::size_t n = m.rows();
  EigenDecomposition out{Vec(n), Mat(n, n)};
  if (n == 0) return out;
  Mat v = symmetrize(m);
  Vec d(n), e(n);
  detail::tridiagonalize(v, d, e);
  if (!detail::tridiagonal_ql(v, d, e, static_cast<int>(max_iters)))
    fail(ErrorCode::kConvergenceFailure,
         "eigensolver exceeded " + std::to_string(max_iters) +
             " QL iterations for one eigenvalue");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return d[i] > d[j]; });
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = d[order[k]];
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

// V diag(f(lambda)) V^T
template <class F>
Mat eigen_reconstruct(const EigenDecomposition& e, F&& f) {
  const std::size_t n = e.values.size();
  Mat out(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double lk = f(e.values[k]);
    if (lk == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double vik = lk * e.vectors(i, k);
      if (vik == 0.0) continue;
      auto oi = out.row(i);
      for (std::size_t j = 0; j < n; ++j) oi[j] += vik * e.vectors(j, k);
    }
  }
  return symmetrize(out);
}

/// Nearest PSD matrix in Frobenius norm: clip negative eigenvalues to zero.
/// Strictly positive-definite inputs are returned as-is (a jitter-free
/// Cholesky is the cheap certificate).
inline Mat psd_project(const Mat& m) {
  require(m.is_square(), ErrorCode::kDimensionMismatch, "psd_project");
  Mat s = symmetrize(m);
  Mat probe = s;
  if (detail::cholesky_in_place(probe, 0.0)) return s;
  const EigenDecomposition e = eigh(s);
  const auto negatives = static_cast<std::size_t>(
      std::count_if(e.values.begin(), e.values.end(), [](double l) { return l < 0.0; }));
  if (2 * negatives >= e.values.size())
    return eigen_reconstruct(e, [](double l) { return std::max(l, 0.0); });
  // Fewer negative than non-negative eigenvalues: remove the negative part.
  return s - eigen_reconstruct(e, [](double l) { return std::min(l, 0.0); });
}

}  // namespace nlts
