#include "helpers.hpp"
#include "minimax_iv/linalg.hpp"

#include <doctest.h>

using namespace minimax_iv;
using namespace minimax_iv::linalg;

namespace {
double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }
}  // namespace

TEST_CASE("sym_eig basics") {
  const SymEig id = sym_eig(Matrix::Identity(3, 3));
  CHECK(id.eigenvalues.isOnes(1e-14));

  Matrix d(2, 2);
  d << 1, 0, 0, 4;
  const SymEig e = sym_eig(d);
  CHECK(e.eigenvalues(0) == doctest::Approx(4.0));
  CHECK(e.eigenvalues(1) == doctest::Approx(1.0));
  CHECK(std::abs(e.eigenvectors(1, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(e.eigenvectors(0, 1)) == doctest::Approx(1.0));

  const Matrix g = test_util::gaussian_matrix(5, 5, 3);
  const Matrix s = 0.5 * (g + g.transpose());
  const SymEig r = sym_eig(s);
  for (Eigen::Index i = 1; i < 5; ++i) CHECK(r.eigenvalues(i - 1) >= r.eigenvalues(i));
  CHECK(max_abs(r.eigenvectors * r.eigenvalues.asDiagonal() * r.eigenvectors.transpose() - s) < 1e-12);

  CHECK_THROWS_AS(sym_eig(Matrix::Ones(2, 3)), InvalidInput);
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(sym_eig(asym), InvalidInput);
}

TEST_CASE("pinv closed forms and Penrose conditions") {
  CHECK(max_abs(pinv(Matrix::Identity(4, 4)) - Matrix::Identity(4, 4)) < 1e-14);
  Matrix a(2, 2);
  a << 2, 0, 0, 0;
  Matrix expect(2, 2);
  expect << 0.5, 0, 0, 0;
  CHECK(max_abs(pinv(a) - expect) < 1e-14);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix k = test_util::random_psd(4, 2, 100 + seed);
    const Matrix p = pinv(k);
    CHECK(max_abs(k * p * k - k) < 1e-9 * k.norm());
    CHECK(max_abs(p * k * p - p) < 1e-9 * p.norm());
    CHECK(max_abs((k * p).transpose() - k * p) < 1e-9);
    CHECK(max_abs((p * k).transpose() - p * k) < 1e-9);
    CHECK(max_abs(pinv(p) - k) < 1e-8 * k.norm());
  }
}

TEST_CASE("pinv_sqrt squares to pinv") {
  const Matrix k = test_util::random_psd(6, 3, 9);
  const Matrix r = pinv_sqrt(k);
  CHECK(max_abs(r * r - pinv(k)) < 1e-8 * pinv(k).norm());
  CHECK(max_abs(r - r.transpose()) == 0.0);
}

TEST_CASE("solve_spd") {
  const Matrix b = test_util::gaussian_matrix(3, 2, 1);
  CHECK(max_abs(solve_spd(Matrix::Identity(3, 3), b) - b) < 1e-15);

  Matrix d(2, 2);
  d << 2, 0, 0, 4;
  Vector rhs(2);
  rhs << 2, 8;
  const Matrix x = solve_spd(d, rhs);
  CHECK(x(0, 0) == doctest::Approx(1.0));
  CHECK(x(1, 0) == doctest::Approx(2.0));

  const Matrix a = test_util::random_psd(6, 6, 5) + Matrix::Identity(6, 6);
  const Matrix rb = test_util::gaussian_matrix(6, 3, 6);
  CHECK(max_abs(a * solve_spd(a, rb) - rb) < 1e-10);

  Matrix neg = -Matrix::Identity(2, 2);
  CHECK_THROWS_AS(solve_spd(neg, Matrix::Ones(2, 1)), SingularMatrix);
}

TEST_CASE("square-root identity of the regularized kernel operator") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(seed);
    const Matrix k = test_util::random_psd(n, std::max<Eigen::Index>(1, n - 1), 200 + seed);
    const double c = 0.1 + 0.5 * static_cast<double>(seed);
    // Oracle: principal square root from an independent eigendecomposition.
    Eigen::SelfAdjointEigenSolver<Matrix> es(k);
    const Matrix root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                        es.eigenvectors().transpose();
    const Matrix lhs = root * (c * k + Matrix::Identity(n, n)).inverse() * root;
    const Matrix rhs = regularized_kernel_operator(k, c);
    CHECK(max_abs(lhs - rhs) <= 1e-8 * std::max(1.0, k.norm()));
    CHECK(max_abs(rhs - rhs.transpose()) == 0.0);
  }
}

TEST_CASE("mirror_upper") {
  Matrix m(2, 2);
  m << 1, 2, 9, 3;
  mirror_upper(m);
  CHECK(m(1, 0) == 2.0);
}
