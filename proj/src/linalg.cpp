#include "minimax_iv/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace minimax_iv::linalg {

namespace {

void require_symmetric(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidInput("matrix must be square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw InvalidInput("matrix is not symmetric");
}

// Applies g to each retained eigenvalue; truncated ones map to zero.
template <typename Fn>
Matrix spectral_map(const Matrix& a, double rtol, Fn g) {
  if (a.size() == 0) return a;
  const SymEig eig = sym_eig(a);
  const double top = std::max(eig.eigenvalues(0), 0.0);
  const double cutoff = rtol * top;
  Vector mapped = Vector::Zero(eig.eigenvalues.size());
  for (Eigen::Index i = 0; i < mapped.size(); ++i) {
    const double lam = eig.eigenvalues(i);
    if (top > 0.0 && lam > cutoff) mapped(i) = g(lam);
  }
  Matrix out = eig.eigenvectors * mapped.asDiagonal() * eig.eigenvectors.transpose();
  mirror_upper(out);
  return out;
}

}  // namespace

void mirror_upper(Matrix& a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = j + 1; i < a.rows(); ++i) a(i, j) = a(j, i);
}

SymEig sym_eig(const Matrix& a) {
  require_symmetric(a);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
  if (solver.info() != Eigen::Success) throw SingularMatrix("symmetric eigen-decomposition failed");
  // Eigen returns ascending order.
  const Eigen::Index n = a.rows();
  SymEig out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.eigenvalues(i) = solver.eigenvalues()(n - 1 - i);
    out.eigenvectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return out;
}

Matrix pinv(const Matrix& a, double rtol) {
  return spectral_map(a, rtol, [](double lam) { return 1.0 / lam; });
}

Matrix pinv_sqrt(const Matrix& a, double rtol) {
  return spectral_map(a, rtol, [](double lam) { return 1.0 / std::sqrt(lam); });
}

Matrix solve_spd(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || a.rows() != b.rows()) throw InvalidInput("solve_spd: dimension mismatch");
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  const double n = static_cast<double>(a.rows());
  const double jitter = 1e-12 * std::max(a.trace(), 0.0) / n;
  Matrix shifted = a;
  shifted.diagonal().array() += jitter;
  llt.compute(shifted);
  if (llt.info() != Eigen::Success || !(jitter > 0.0))
    throw SingularMatrix("solve_spd: matrix is not positive definite after jitter");
  return llt.solve(b);
}

Matrix regularized_kernel_operator(const Matrix& k, double c) {
  if (!(c > 0.0)) throw InvalidInput("regularized_kernel_operator: c must be positive");
  // (cK + I) and K commute, so (cK + I)^{-1} K = K (cK + I)^{-1}.
  Matrix sys = c * k;
  sys.diagonal().array() += 1.0;
  Matrix m = solve_spd(sys, k);
  Matrix out = 0.5 * (m + m.transpose());
  return out;
}

}  // namespace minimax_iv::linalg
