#pragma once

// Dense vectors and matrices, least squares via pivoted QR, and Gram-Schmidt.

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

#include "latax/error.hpp"

namespace latax {

namespace detail {

inline void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NonFiniteError(std::string(what) + ": non-finite value at index " +
                           std::to_string(i));
    }
  }
}

}  // namespace detail

/// Immutable dense vector of finite doubles, dim >= 1.
class Vec {
 public:
  explicit Vec(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw DimensionError("Vec: dimension must be >= 1");
    detail::require_finite(values_, "Vec");
  }
  Vec(std::initializer_list<double> values) : Vec(std::vector<double>(values)) {}

  static Vec zeros(std::size_t dim) { return Vec(std::vector<double>(dim, 0.0)); }
  static Vec unit(std::size_t dim, std::size_t i) {
    std::vector<double> v(dim, 0.0);
    v.at(i) = 1.0;
    return Vec(std::move(v));
  }

  std::size_t dim() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }

  friend bool operator==(const Vec&, const Vec&) = default;

 private:
  std::vector<double> values_;
};

/// Immutable row-major matrix of finite doubles.
class Mat {
 public:
  Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows_ == 0 || cols_ == 0) throw DimensionError("Mat: rows and cols must be >= 1");
    if (values_.size() != rows_ * cols_) {
      throw DimensionError("Mat: expected " + std::to_string(rows_ * cols_) +
                           " values, got " + std::to_string(values_.size()));
    }
    detail::require_finite(values_, "Mat");
  }

  static Mat zeros(std::size_t rows, std::size_t cols) {
    return Mat(rows, cols, std::vector<double>(rows * cols, 0.0));
  }
  static Mat identity(std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return Mat(n, n, std::move(v));
  }
  /// Stacks equal-length vectors as rows.
  static Mat from_rows(std::span<const Vec> rows) {
    if (rows.empty()) throw DimensionError("Mat::from_rows: no rows");
    const std::size_t cols = rows.front().dim();
    std::vector<double> v;
    v.reserve(rows.size() * cols);
    for (const Vec& r : rows) {
      if (r.dim() != cols) throw DimensionError("Mat::from_rows: ragged rows");
      v.insert(v.end(), r.data().begin(), r.data().end());
    }
    return Mat(rows.size(), cols, std::move(v));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(values_).subspan(r * cols_, cols_);
  }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Vector arithmetic

inline void require_same_dim(const Vec& a, const Vec& b, const char* what) {
  if (a.dim() != b.dim()) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.dim()) +
                         " vs " + std::to_string(b.dim()) + ")");
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// dot with an extended-precision accumulator, for sums that feed finite differences.
inline double dot_extended(std::span<const double> a, std::span<const double> b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

inline double dot(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "dot");
  return dot(a.values(), b.values());
}

inline double norm(std::span<const double> a) {
  // Scaled accumulation so huge or tiny entries do not overflow/underflow.
  double scale = 0.0;
  for (const double x : a) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (const double x : a) {
    const double t = x / scale;
    s += t * t;
  }
  return scale * std::sqrt(s);
}

inline double norm(const Vec& a) { return norm(a.values()); }

inline Vec operator+(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "operator+");
  std::vector<double> v(a.dim());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return Vec(std::move(v));
}

inline Vec operator-(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "operator-");
  std::vector<double> v(a.dim());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  return Vec(std::move(v));
}

inline Vec operator*(double s, const Vec& a) {
  std::vector<double> v(a.dim());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = s * a[i];
  return Vec(std::move(v));
}

/// a + s * b
inline Vec axpy(const Vec& a, double s, const Vec& b) {
  require_same_dim(a, b, "axpy");
  std::vector<double> v(a.dim());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + s * b[i];
  return Vec(std::move(v));
}

inline Vec normalized(const Vec& a) {
  const double n = norm(a);
  if (n == 0.0) throw ValidationError("normalized: zero-norm vector");
  std::vector<double> v(a.dim());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] / n;
  return Vec(std::move(v));
}

inline Vec operator*(const Mat& m, const Vec& x) {
  if (m.cols() != x.dim()) throw DimensionError("Mat*Vec: dimension mismatch");
  std::vector<double> v(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) v[r] = dot(m.row(r), x.values());
  return Vec(std::move(v));
}

inline Mat operator*(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw DimensionError("Mat*Mat: dimension mismatch");
  std::vector<double> v(a.rows() * b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = v.data() + i * b.cols();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += s * brow[j];
    }
  }
  return Mat(a.rows(), b.cols(), std::move(v));
}

inline Mat transpose(const Mat& m) {
  std::vector<double> v(m.rows() * m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) v[c * m.rows() + r] = m(r, c);
  return Mat(m.cols(), m.rows(), std::move(v));
}

/// Gram matrix G(i, j) = v_i . v_j
inline Mat gram_matrix(std::span<const Vec> vs) {
  const std::size_t k = vs.size();
  if (k == 0) throw DimensionError("gram_matrix: empty list");
  std::vector<double> g(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) g[i * k + j] = dot(vs[i], vs[j]);
  return Mat(k, k, std::move(g));
}

/// max |G - I| over all entries.
inline double max_identity_deviation(const Mat& g) {
  double worst = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

inline double cosine_similarity(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "cosine_similarity");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine_similarity: zero-norm input");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Least squares

struct OlsResult {
  Vec weights;  // weights[0] is the intercept when one was requested
  double residual_sum_squares;
  bool rank_deficient;
  std::size_t rank;
};

/// Householder QR with column pivoting, completed to a complete orthogonal
/// decomposition when rank-deficient so solve() returns the minimum-norm
/// least-squares solution. One factorization serves any number of targets.
class OlsFactorization {
 public:
  static constexpr double kDefaultRankTolerance = 1e-10;

  OlsFactorization(const Mat& x, bool add_intercept, double rank_tol = kDefaultRankTolerance)
      : n_(x.rows()), q_(x.cols() + (add_intercept ? 1 : 0)), intercept_(add_intercept) {
    // column-major working copy
    a_.assign(n_ * q_, 0.0);
    for (std::size_t r = 0; r < n_; ++r) {
      std::size_t c0 = 0;
      if (intercept_) {
        a_[r] = 1.0;
        c0 = 1;
      }
      for (std::size_t c = 0; c < x.cols(); ++c) a_[(c + c0) * n_ + r] = x(r, c);
    }
    original_ = a_;
    perm_.resize(q_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    factor(rank_tol);
  }

  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return q_; }
  std::size_t rank() const noexcept { return rank_; }
  bool rank_deficient() const noexcept { return rank_ < q_; }

  OlsResult solve(const Vec& y) const {
    if (y.dim() != n_) {
      throw DimensionError("solve_ols: y has " + std::to_string(y.dim()) + " entries, X has " +
                           std::to_string(n_) + " rows");
    }
    std::vector<double> c(y.data());
    for (std::size_t j = 0; j < rank_; ++j) apply_reflector(qr_v_[j], qr_tau_[j], j, c.data());

    std::vector<double> xp(q_, 0.0);  // solution in pivoted coordinates
    if (rank_ == q_) {
      for (std::size_t ii = rank_; ii-- > 0;) {
        double s = c[ii];
        for (std::size_t k = ii + 1; k < rank_; ++k) s -= r_at(ii, k) * xp[k];
        xp[ii] = s / r_at(ii, ii);
      }
    } else if (rank_ > 0) {
      // T = [R11 R12] = L^T Z^T; solve L^T u = c, xp = Z [u; 0].
      std::vector<double> u(rank_);
      for (std::size_t ii = 0; ii < rank_; ++ii) {
        double s = c[ii];
        for (std::size_t k = 0; k < ii; ++k) s -= l_at(k, ii) * u[k];
        u[ii] = s / l_at(ii, ii);
      }
      std::copy(u.begin(), u.end(), xp.begin());
      for (std::size_t j = rank_; j-- > 0;) apply_reflector(cod_v_[j], cod_tau_[j], j, xp.data());
    }

    std::vector<double> w(q_);
    for (std::size_t j = 0; j < q_; ++j) w[perm_[j]] = xp[j];

    double rss = 0.0;
    for (std::size_t r = 0; r < n_; ++r) {
      double pred = 0.0;
      for (std::size_t j = 0; j < q_; ++j) pred += original_[j * n_ + r] * w[j];
      const double e = y[r] - pred;
      rss += e * e;
    }
    return OlsResult{Vec(std::move(w)), rss, rank_deficient(), rank_};
  }

 private:
  // Householder vector stored with implicit leading 1.
  static void make_reflector(std::span<double> x, std::vector<double>& v, double& tau,
                             double& alpha) {
    const double xnorm = norm(x);
    if (xnorm == 0.0) {
      v.assign(x.size(), 0.0);
      v[0] = 1.0;
      tau = 0.0;
      alpha = 0.0;
      return;
    }
    alpha = x[0] > 0 ? -xnorm : xnorm;
    const double v0 = x[0] - alpha;
    v.resize(x.size());
    v[0] = 1.0;
    for (std::size_t i = 1; i < x.size(); ++i) v[i] = x[i] / v0;
    tau = -v0 / alpha;
  }

  // x[offset:] -= tau * v * (v . x[offset:])
  static void apply_reflector(const std::vector<double>& v, double tau, std::size_t offset,
                              double* x) {
    if (tau == 0.0) return;
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * x[offset + i];
    s *= tau;
    for (std::size_t i = 0; i < v.size(); ++i) x[offset + i] -= s * v[i];
  }

  double r_at(std::size_t i, std::size_t j) const { return a_[j * n_ + i]; }
  // L is stored column-major in t_ (q x rank), upper triangle of the leading block.
  double l_at(std::size_t i, std::size_t j) const { return t_[j * q_ + i]; }

  void factor(double rank_tol) {
    const std::size_t steps = std::min(n_, q_);
    std::vector<double> colnorm(q_);
    double first = 0.0;
    rank_ = 0;
    for (std::size_t j = 0; j < steps; ++j) {
      std::size_t best = j;
      double best_norm = -1.0;
      for (std::size_t c = j; c < q_; ++c) {
        colnorm[c] = norm(std::span<const double>(a_).subspan(c * n_ + j, n_ - j));
        if (colnorm[c] > best_norm) {
          best_norm = colnorm[c];
          best = c;
        }
      }
      if (j == 0) first = best_norm;
      if (best_norm <= rank_tol * first || best_norm == 0.0) break;
      if (best != j) {
        std::swap_ranges(a_.begin() + static_cast<std::ptrdiff_t>(j * n_),
                         a_.begin() + static_cast<std::ptrdiff_t>((j + 1) * n_),
                         a_.begin() + static_cast<std::ptrdiff_t>(best * n_));
        std::swap(perm_[j], perm_[best]);
      }
      std::vector<double> v;
      double tau = 0.0;
      double alpha = 0.0;
      make_reflector(std::span<double>(a_).subspan(j * n_ + j, n_ - j), v, tau, alpha);
      for (std::size_t c = j + 1; c < q_; ++c) apply_reflector(v, tau, j, a_.data() + c * n_);
      a_[j * n_ + j] = alpha;
      for (std::size_t i = j + 1; i < n_; ++i) a_[j * n_ + i] = 0.0;
      qr_v_.push_back(std::move(v));
      qr_tau_.push_back(tau);
      ++rank_;
    }
    // The magnitude test uses |R_jj| as well, in case pivot norms were optimistic.
    while (rank_ > 0 && std::abs(r_at(rank_ - 1, rank_ - 1)) <= rank_tol * std::abs(r_at(0, 0))) {
      --rank_;
      qr_v_.pop_back();
      qr_tau_.pop_back();
    }
    if (rank_ < q_ && rank_ > 0) {
      // QR of T^T (q x rank), column-major: column i of T^T is row i of [R11 R12].
      t_.assign(q_ * rank_, 0.0);
      for (std::size_t i = 0; i < rank_; ++i)
        for (std::size_t k = i; k < q_; ++k) t_[i * q_ + k] = r_at(i, k);
      for (std::size_t j = 0; j < rank_; ++j) {
        std::vector<double> v;
        double tau = 0.0;
        double alpha = 0.0;
        make_reflector(std::span<double>(t_).subspan(j * q_ + j, q_ - j), v, tau, alpha);
        for (std::size_t c = j + 1; c < rank_; ++c) apply_reflector(v, tau, j, t_.data() + c * q_);
        t_[j * q_ + j] = alpha;
        for (std::size_t i = j + 1; i < q_; ++i) t_[j * q_ + i] = 0.0;
        cod_v_.push_back(std::move(v));
        cod_tau_.push_back(tau);
      }
    }
  }

  std::size_t n_;
  std::size_t q_;
  bool intercept_;
  std::vector<double> a_;         // R in the upper triangle after factor()
  std::vector<double> original_;  // design matrix, column-major, original column order
  std::vector<std::size_t> perm_;
  std::vector<std::vector<double>> qr_v_;
  std::vector<double> qr_tau_;
  std::vector<double> t_;
  std::vector<std::vector<double>> cod_v_;
  std::vector<double> cod_tau_;
  std::size_t rank_ = 0;
};

inline OlsResult solve_ols(const Mat& x, const Vec& y, bool add_intercept) {
  return OlsFactorization(x, add_intercept).solve(y);
}

// ---------------------------------------------------------------------------
// Orthogonalization

inline constexpr double kDefaultDependenceTolerance = 1e-9;

/// Modified Gram-Schmidt with one re-orthogonalization pass. Order-sensitive:
/// output i spans the same space as inputs 0..i.
inline std::vector<Vec> gram_schmidt(std::span<const Vec> vectors,
                                     double tol = kDefaultDependenceTolerance) {
  if (!(tol > 0.0)) throw ValidationError("gram_schmidt: tol must be > 0");
  std::vector<Vec> out;
  if (vectors.empty()) return out;
  const std::size_t dim = vectors.front().dim();
  out.reserve(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].dim() != dim) {
      throw DimensionError("gram_schmidt: vector " + std::to_string(i) + " has dim " +
                           std::to_string(vectors[i].dim()) + ", expected " + std::to_string(dim));
    }
    const double input_norm = norm(vectors[i]);
    std::vector<double> w(vectors[i].data());
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vec& e : out) {
        const double c = dot(e.values(), w);
        for (std::size_t t = 0; t < dim; ++t) w[t] -= c * e[t];
      }
    }
    const double rn = norm(w);
    if (input_norm == 0.0 || rn < tol * input_norm) {
      throw DependenceError(i, "gram_schmidt: vector " + std::to_string(i) +
                                   " is linearly dependent on its predecessors (residual " +
                                   std::to_string(input_norm == 0.0 ? 0.0 : rn / input_norm) +
                                   ")");
    }
    for (double& x : w) x /= rn;
    out.emplace_back(std::move(w));
  }
  return out;
}

inline void require_orthonormal(std::span<const Vec> basis, double tol, const char* what) {
  if (basis.empty()) return;
  const Mat g = gram_matrix(basis);
  const double dev = max_identity_deviation(g);
  if (dev > tol) {
    throw ValidationError(std::string(what) + ": basis is not orthonormal (max |G - I| = " +
                          std::to_string(dev) + ")");
  }
}

/// v minus its projection onto span(basis); basis must be orthonormal.
inline Vec residual_perp(const Vec& v, std::span<const Vec> basis) {
  for (const Vec& e : basis) require_same_dim(v, e, "residual_perp");
  require_orthonormal(basis, 1e-8, "residual_perp");
  std::vector<double> w(v.data());
  for (int pass = 0; pass < 2; ++pass) {
    for (const Vec& e : basis) {
      const double c = dot(e.values(), w);
      for (std::size_t t = 0; t < w.size(); ++t) w[t] -= c * e[t];
    }
  }
  return Vec(std::move(w));
}

}  // namespace latax
