#pragma once

#include "minimax_iv/core.hpp"

namespace minimax_iv::linalg {

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
struct SymEig {
  Vector eigenvalues;
  Matrix eigenvectors;  // columns are orthonormal eigenvectors
};

inline constexpr double kDefaultRtol = 1e-10;

/// Throws InvalidInput if `a` is not square or not symmetric within 1e-10 (relative).
SymEig sym_eig(const Matrix& a);

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix. Eigenvalues below
/// rtol * lambda_max are treated as zero (small negative ones included).
Matrix pinv(const Matrix& a, double rtol = kDefaultRtol);

/// Pseudo-inverse square root (A^+)^{1/2} with the same truncation rule.
Matrix pinv_sqrt(const Matrix& a, double rtol = kDefaultRtol);

/// Solves A X = B for symmetric positive definite A via Cholesky. If the
/// factorization fails, retries once with jitter 1e-12 * trace(A)/n on the
/// diagonal, then throws SingularMatrix.
Matrix solve_spd(const Matrix& a, const Matrix& b);

/// K (cK + I)^{-1} for symmetric PSD K and c > 0, symmetrized.
Matrix regularized_kernel_operator(const Matrix& k, double c);

/// Copies the upper triangle onto the lower one.
void mirror_upper(Matrix& a);

}  // namespace minimax_iv::linalg
