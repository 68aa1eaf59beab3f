#include "dfgp/linalg.hpp"

#include <cmath>
#include <string>

namespace dfgp {

namespace {

// Attempts an in-place lower Cholesky of A + boost*I. Returns false as soon
// as a pivot is not strictly positive.
bool try_factor(const Matrix& a, double boost, Matrix& l) {
  const std::size_t n = a.rows;
  l = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j) + boost;
    for (std::size_t p = 0; p < j; ++p) diag -= l(j, p) * l(j, p);
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double root = std::sqrt(diag);
    l(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = a(i, j);
      for (std::size_t p = 0; p < j; ++p) acc -= l(i, p) * l(j, p);
      l(i, j) = acc / root;
    }
  }
  return true;
}

}  // namespace

CholeskyFactor cholesky(const Matrix& a, std::span<const double> relative_schedule) {
  if (a.rows != a.cols) throw ShapeError("cholesky: matrix is not square");
  const std::size_t n = a.rows;
  if (n == 0) throw ShapeError("cholesky: empty matrix");

  double max_abs = 0.0;
  for (double v : a.data) max_abs = std::max(max_abs, std::abs(v));
  const double sym_tol = 1e-12 * std::max(1.0, max_abs);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > sym_tol) {
        throw ShapeError("cholesky: matrix is not symmetric");
      }
    }
  }

  double mean_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_diag += a(i, i);
  mean_diag = std::abs(mean_diag) / static_cast<double>(n);
  const double unit = mean_diag > 0.0 ? mean_diag : 1.0;

  CholeskyFactor factor;
  for (double rel : relative_schedule) {
    const double boost = rel * unit;
    if (try_factor(a, boost, factor.L)) {
      factor.jitter = boost;
      return factor;
    }
  }
  throw NotPositiveDefiniteError("cholesky failed for the entire jitter schedule (n=" +
                                 std::to_string(n) + ")");
}

std::vector<double> triangular_solve(const Matrix& lower, std::span<const double> b,
                                     bool transpose) {
  const std::size_t n = lower.rows;
  if (lower.cols != n) throw ShapeError("triangular_solve: factor is not square");
  if (b.size() != n) throw ShapeError("triangular_solve: rhs length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (lower(i, i) == 0.0) throw SingularError("triangular_solve: zero diagonal entry");
  }

  std::vector<double> x(b.begin(), b.end());
  if (!transpose) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = x[i];
      for (std::size_t j = 0; j < i; ++j) acc -= lower(i, j) * x[j];
      x[i] = acc / lower(i, i);
    }
  } else {
    for (std::size_t ii = n; ii-- > 0;) {
      double acc = x[ii];
      for (std::size_t j = ii + 1; j < n; ++j) acc -= lower(j, ii) * x[j];
      x[ii] = acc / lower(ii, ii);
    }
  }
  return x;
}

Matrix triangular_solve(const Matrix& lower, const Matrix& b, bool transpose) {
  if (b.rows != lower.rows) throw ShapeError("triangular_solve: rhs row count mismatch");
  Matrix x(b.rows, b.cols);
  std::vector<double> column(b.rows);
  for (std::size_t c = 0; c < b.cols; ++c) {
    for (std::size_t r = 0; r < b.rows; ++r) column[r] = b(r, c);
    const std::vector<double> solved = triangular_solve(lower, column, transpose);
    for (std::size_t r = 0; r < b.rows; ++r) x(r, c) = solved[r];
  }
  return x;
}

double log_det(const CholeskyFactor& factor) {
  double acc = 0.0;
  for (std::size_t i = 0; i < factor.order(); ++i) acc += std::log(factor.L(i, i));
  return 2.0 * acc;
}

Matrix cholesky_inverse(const CholeskyFactor& factor) {
  const std::size_t n = factor.order();
  Matrix inv(n, n);
  std::vector<double> unit(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    unit[c] = 1.0;
    const std::vector<double> y = triangular_solve(factor.L, unit, false);
    const std::vector<double> x = triangular_solve(factor.L, y, true);
    for (std::size_t r = 0; r < n; ++r) inv(r, c) = x[r];
    unit[c] = 0.0;
  }
  // Returned inverse is exactly symmetric.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = v;
      inv(j, i) = v;
    }
  }
  return inv;
}

}  // namespace dfgp
