#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dfgp/errors.hpp"

namespace dfgp {

/// Minimal dense row-major matrix for the plain-double linear algebra layer.
/// Kept separate from Tensor: nothing here participates in autodiff.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

struct CholeskyFactor {
  Matrix L;              // lower triangular, strictly positive diagonal
  double jitter = 0.0;   // diagonal boost that made the factorization succeed

  std::size_t order() const { return L.rows; }
};

/// Relative jitter schedule applied as multiples of mean(diag(A)).
inline const std::vector<double>& default_jitter_schedule() {
  static const std::vector<double> schedule{0.0, 1e-8, 1e-6, 1e-4};
  return schedule;
}

/// Factors A + jitter*I = L L^T, trying each boost in the schedule in order
/// and keeping the first that succeeds. `relative_schedule` entries are
/// scaled by mean(diag(A)) before use. A must be square and symmetric to
/// 1e-12 relative.
CholeskyFactor cholesky(const Matrix& a,
                        std::span<const double> relative_schedule = default_jitter_schedule());

/// Solves L x = b (or L^T x = b when transpose) for one right-hand side.
std::vector<double> triangular_solve(const Matrix& lower, std::span<const double> b,
                                     bool transpose = false);

/// Column-wise triangular solve for a matrix right-hand side.
Matrix triangular_solve(const Matrix& lower, const Matrix& b, bool transpose = false);

/// log det(A + jitter*I) = 2 * sum(log diag(L)).
double log_det(const CholeskyFactor& factor);

/// (A + jitter*I)^{-1} from the factor, via two triangular solves per column.
Matrix cholesky_inverse(const CholeskyFactor& factor);

}  // namespace dfgp
