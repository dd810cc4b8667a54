#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "latax/linalg.hpp"
#include "latax/rng.hpp"
#include "oracles.hpp"

using namespace latax;
using Catch::Matchers::WithinAbs;

namespace {

Mat random_mat(Rng& rng, std::size_t r, std::size_t c) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.uniform();
  return Mat(r, c, v);
}

// ||X^T (y - X w)||_inf, with an intercept column prepended when asked.
double normal_residual(const Mat& x, const Vec& y, const Vec& w, bool intercept) {
  const std::size_t off = intercept ? 1 : 0;
  std::vector<double> res(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double pred = intercept ? w[0] : 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) pred += x(r, c) * w[c + off];
    res[r] = y[r] - pred;
  }
  double worst = 0.0;
  if (intercept) {
    double s = 0.0;
    for (const double e : res) s += e;
    worst = std::abs(s);
  }
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) s += x(r, c) * res[r];
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

double xty_inf(const Mat& x, const Vec& y) {
  double worst = 0.0;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) s += x(r, c) * y[r];
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

}  // namespace

TEST_CASE("Vec and Mat reject non-finite values and empty shapes") {
  CHECK_THROWS_AS(Vec({1.0, NAN}), NonFiniteError);
  CHECK_THROWS_AS(Vec(std::vector<double>{}), DimensionError);
  CHECK_THROWS_AS(Mat(2, 2, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Mat(1, 1, {INFINITY}), NonFiniteError);
}

TEST_CASE("ols on exact line with intercept") {
  const Mat x(3, 1, {1, 2, 3});
  const auto r = solve_ols(x, Vec{3, 5, 7}, true);
  CHECK_THAT(r.weights[0], WithinAbs(1.0, 1e-12));
  CHECK_THAT(r.weights[1], WithinAbs(2.0, 1e-12));
  CHECK_THAT(r.residual_sum_squares, WithinAbs(0.0, 1e-20));
  CHECK_FALSE(r.rank_deficient);
}

TEST_CASE("ols on identity design returns y") {
  const auto r = solve_ols(Mat::identity(3), Vec{4, 5, 6}, false);
  REQUIRE(r.weights.dim() == 3);
  CHECK_THAT(r.weights[0], WithinAbs(4.0, 1e-12));
  CHECK_THAT(r.weights[1], WithinAbs(5.0, 1e-12));
  CHECK_THAT(r.weights[2], WithinAbs(6.0, 1e-12));
}

TEST_CASE("ols satisfies the normal equations on noisy random data") {
  Rng rng(11);
  const Mat x = random_mat(rng, 100, 8);
  std::vector<double> wstar(8);
  for (double& w : wstar) w = rng.normal();
  std::vector<double> y(100);
  for (std::size_t r = 0; r < 100; ++r) {
    for (std::size_t c = 0; c < 8; ++c) y[r] += x(r, c) * wstar[c];
    y[r] += 0.01 * rng.normal();
  }
  const Vec yv(y);
  for (const bool intercept : {false, true}) {
    const auto res = solve_ols(x, yv, intercept);
    CHECK(normal_residual(x, yv, res.weights, intercept) <= 1e-8 * std::max(1.0, xty_inf(x, yv)));
  }
}

TEST_CASE("ols on rank-deficient design returns the minimum-norm solution") {
  // columns 0 and 1 identical: min-norm splits the weight evenly
  const Mat x(4, 2, {1, 1, 2, 2, 3, 3, 4, 4});
  const auto r = solve_ols(x, Vec{2, 4, 6, 8}, false);
  CHECK(r.rank_deficient);
  CHECK(r.rank == 1);
  CHECK_THAT(r.weights[0], WithinAbs(1.0, 1e-12));
  CHECK_THAT(r.weights[1], WithinAbs(1.0, 1e-12));

  // n < p: still optimal and minimum norm (orthogonal to the null space)
  Rng rng(5);
  const Mat w = random_mat(rng, 5, 9);
  const Vec y(oracle::random_vector(rng, 5));
  const auto s = solve_ols(w, y, false);
  CHECK(s.rank_deficient);
  CHECK(normal_residual(w, y, s.weights, false) <= 1e-8 * std::max(1.0, xty_inf(w, y)));
  // the min-norm solution lies in the row space: w = W^T c for some c
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < 5; ++r) rows.push_back(std::vector<double>(w.row(r).begin(), w.row(r).end()));
  const auto off = oracle::ls_residual(s.weights.data(), rows);
  for (const double v : off) CHECK_THAT(v, WithinAbs(0.0, 1e-10));
}

TEST_CASE("ols errors") {
  CHECK_THROWS_AS(solve_ols(Mat::identity(3), Vec{1, 2}, false), DimensionError);
}

TEST_CASE("gram-schmidt on the 3-d staircase gives the standard basis") {
  const std::vector<Vec> in = {{1, 0, 0}, {1, 1, 0}, {1, 1, 1}};
  const auto out = gram_schmidt(in);
  REQUIRE(out.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK_THAT(out[i][j], WithinAbs(i == j ? 1.0 : 0.0, 1e-15));
}

TEST_CASE("gram-schmidt leaves orthonormal input unchanged") {
  const double s = 1.0 / std::sqrt(2.0);
  const std::vector<Vec> in = {{s, s, 0}, {-s, s, 0}, {0, 0, 1}};
  const auto out = gram_schmidt(in);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK_THAT(out[i][j], WithinAbs(in[i][j], 1e-12));
}

TEST_CASE("gram-schmidt flags a nearly dependent pair at index 1") {
  const Vec v{1, 2, 3, 4};
  const Vec u{0.5, -1, 0, 2};
  const std::vector<Vec> in = {v, axpy(v, 1e-14, u)};
  try {
    gram_schmidt(in, 1e-9);
    FAIL("expected a dependence error");
  } catch (const DependenceError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("gram-schmidt output is orthonormal, spans the input, and keeps the first direction") {
  Rng rng(3);
  std::vector<Vec> in;
  for (int i = 0; i < 10; ++i) in.emplace_back(oracle::random_vector(rng, 200));
  const auto out = gram_schmidt(in);
  CHECK(max_identity_deviation(gram_matrix(out)) <= 1e-10);
  const double n0 = norm(in[0]);
  for (std::size_t t = 0; t < 200; ++t) CHECK(out[0][t] == in[0][t] / n0);
  // each input lies in the span of the outputs up to its index
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::span<const Vec> prefix(out.data(), i + 1);
    CHECK(norm(residual_perp(in[i], prefix)) <= 1e-10 * norm(in[i]));
  }
}

TEST_CASE("gram-schmidt rejects mismatched dims and bad tolerance") {
  const std::vector<Vec> in = {{1, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(gram_schmidt(in), DimensionError);
  const std::vector<Vec> ok = {{1, 0}};
  CHECK_THROWS_AS(gram_schmidt(ok, 0.0), ValidationError);
}

TEST_CASE("residual_perp basics") {
  const std::vector<Vec> b = {{1, 0, 0}};
  const Vec r = residual_perp(Vec{1, 1, 0}, b);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 1.0);
  CHECK(r[2] == 0.0);

  const std::vector<Vec> b2 = {{1, 0, 0}, {0, 1, 0}};
  const Vec z = residual_perp(Vec{3, -2, 0}, b2);
  CHECK(norm(z) <= 1e-15);
}

TEST_CASE("residual_perp matches the brute-force least-squares residual") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec> raw;
    for (int i = 0; i < 3; ++i) raw.emplace_back(oracle::random_vector(rng, 8));
    const auto basis = gram_schmidt(raw);
    const Vec v(oracle::random_vector(rng, 8));
    const Vec r = residual_perp(v, basis);
    std::vector<std::vector<double>> cols;
    for (const auto& e : raw) cols.push_back(e.data());
    const auto expect = oracle::ls_residual(v.data(), cols);
    for (std::size_t t = 0; t < 8; ++t) CHECK_THAT(r[t], WithinAbs(expect[t], 1e-12));
    for (const auto& e : basis) CHECK(std::abs(dot(e, r)) <= 1e-12 * norm(v));
    // idempotent and independent of basis order
    const Vec rr = residual_perp(r, basis);
    std::vector<Vec> rev(basis.rbegin(), basis.rend());
    const Vec rp = residual_perp(v, rev);
    for (std::size_t t = 0; t < 8; ++t) {
      CHECK_THAT(rr[t], WithinAbs(r[t], 1e-12));
      CHECK_THAT(rp[t], WithinAbs(r[t], 1e-12));
    }
  }
}

TEST_CASE("residual_perp rejects a non-orthonormal basis") {
  const std::vector<Vec> b = {{1, 0, 0}, {1, 1, 0}};
  CHECK_THROWS_AS(residual_perp(Vec{1, 1, 1}, b), ValidationError);
  const std::vector<Vec> b2 = {{1, 0}};
  CHECK_THROWS_AS(residual_perp(Vec{1, 1, 1}, b2), DimensionError);
}

TEST_CASE("cosine similarity") {
  CHECK(cosine_similarity(Vec{1, 0}, Vec{1, 0}) == 1.0);
  CHECK(cosine_similarity(Vec{1, 0}, Vec{0, 1}) == 0.0);
  CHECK_THAT(cosine_similarity(Vec{1, 1}, Vec{1, 0}), WithinAbs(1.0 / std::sqrt(2.0), 1e-16));
  CHECK(cosine_similarity(Vec{3, -1}, Vec{2, 5}) == cosine_similarity(Vec{2, 5}, Vec{3, -1}));
  CHECK_THROWS_AS(cosine_similarity(Vec{0, 0}, Vec{1, 0}), ValidationError);
}
