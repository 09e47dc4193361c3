#include "helpers.hpp"
#include "minimax_iv/kernels.hpp"

#include <doctest.h>

#include <cmath>

using namespace minimax_iv;

namespace {

// Straight transcription of the kernel definitions, used as the oracle.
double oracle_kernel(const KernelConfig& cfg, const Vector& a, const Vector& b) {
  switch (cfg.kind) {
    case KernelKind::rbf: {
      double s = 0.0;
      for (Eigen::Index i = 0; i < a.size(); ++i) s += (a(i) - b(i)) * (a(i) - b(i));
      return std::exp(-cfg.gamma * s);
    }
    case KernelKind::linear: {
      double s = 0.0;
      for (Eigen::Index i = 0; i < a.size(); ++i) s += a(i) * b(i);
      return s;
    }
    case KernelKind::polynomial: {
      double s = 1.0;
      for (Eigen::Index i = 0; i < a.size(); ++i) s += a(i) * b(i);
      return std::pow(s, cfg.degree);
    }
  }
  return 0.0;
}

double rel_frobenius(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("kernel_eval closed forms") {
  const Vector a = Vector::Constant(1, 0.0), b = Vector::Constant(1, 1.0);
  CHECK(kernel_eval(KernelConfig::rbf(0.1), a, a) == 1.0);
  CHECK(kernel_eval(KernelConfig::rbf(0.1), a, b) == doctest::Approx(0.9048374180359595).epsilon(1e-14));
  Vector u(2), v(2);
  u << 1, 2;
  v << 3, 4;
  CHECK(kernel_eval(KernelConfig::linear(), u, v) == 11.0);
  CHECK(kernel_eval(KernelConfig::polynomial(2), u, v) == 144.0);
}

TEST_CASE("kernel config validation and names") {
  KernelConfig bad = KernelConfig::rbf(-1.0);
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  for (auto k : {KernelKind::rbf, KernelKind::linear, KernelKind::polynomial})
    CHECK(kernel_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(kernel_kind_from_string("laplace"), InvalidInput);
}

TEST_CASE("kernel_matrix matches pairwise evaluation and is exactly symmetric") {
  for (const KernelConfig& cfg : {KernelConfig::rbf(0.3), KernelConfig::linear(), KernelConfig::polynomial(3)}) {
    const Matrix pts = test_util::gaussian_matrix(7, 3, 21);
    const Matrix k = kernel_matrix(cfg, pts);
    for (Eigen::Index i = 0; i < 7; ++i)
      for (Eigen::Index j = 0; j < 7; ++j) {
        CHECK(k(i, j) == doctest::Approx(oracle_kernel(cfg, pts.row(i).transpose(), pts.row(j).transpose())));
        CHECK(k(i, j) == k(j, i));
      }
  }
  const Matrix one = Matrix::Constant(1, 2, 0.5);
  CHECK(kernel_matrix(KernelConfig::rbf(1.0), one)(0, 0) == 1.0);
  const Matrix k = kernel_matrix(KernelConfig::rbf(0.5), test_util::gaussian_matrix(9, 2, 2));
  CHECK(k.diagonal().isOnes(0.0));
}

TEST_CASE("cross_kernel matches pairwise evaluation") {
  const KernelConfig cfg = KernelConfig::rbf(0.2);
  const Matrix a = test_util::gaussian_matrix(4, 2, 5), b = test_util::gaussian_matrix(6, 2, 6);
  const Matrix c = cross_kernel(cfg, a, b);
  REQUIRE(c.rows() == 4);
  REQUIRE(c.cols() == 6);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 6; ++j)
      CHECK(c(i, j) == doctest::Approx(oracle_kernel(cfg, a.row(i).transpose(), b.row(j).transpose())));
}

TEST_CASE("product kernel is the Hadamard product") {
  const KernelConfig h = KernelConfig::rbf(0.4), f = KernelConfig::polynomial(2);
  const Matrix x = test_util::gaussian_matrix(4, 1, 7), z = test_util::gaussian_matrix(4, 2, 8);
  const Matrix p = product_kernel_matrix(h, x, f, z);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j)
      CHECK(p(i, j) == doctest::Approx(oracle_kernel(h, x.row(i).transpose(), x.row(j).transpose()) *
                                       oracle_kernel(f, z.row(i).transpose(), z.row(j).transpose())));

  // The Hadamard product commutes.
  const Matrix swapped = product_kernel_matrix(f, z, h, x);
  CHECK((swapped - p).cwiseAbs().maxCoeff() < 1e-15);

  const Matrix sq = product_kernel_matrix(h, x, h, x);
  const Matrix k = kernel_matrix(h, x);
  CHECK((sq - k.cwiseProduct(k)).cwiseAbs().maxCoeff() < 1e-15);

  const Matrix one = product_kernel_matrix(h, x.topRows(1), f, z.topRows(1));
  CHECK(one(0, 0) == doctest::Approx(oracle_kernel(f, z.row(0).transpose(), z.row(0).transpose())));
}

TEST_CASE("k-means special cases") {
  const Matrix pts = test_util::gaussian_matrix(12, 2, 31);
  const KMeansResult one = kmeans_centers(pts, 1, 3);
  CHECK((one.centroids.row(0) - pts.colwise().mean()).norm() < 1e-12);

  const KMeansResult all = kmeans_centers(pts, 12, 3);
  for (Eigen::Index i = 0; i < 12; ++i) {
    const Eigen::Index c = all.assignment[static_cast<std::size_t>(i)];
    CHECK((all.centroids.row(c) - pts.row(i)).norm() < 1e-12);
  }

  // Two blobs far apart: one centroid inside each.
  Matrix blobs = 0.1 * test_util::gaussian_matrix(40, 2, 32);
  blobs.bottomRows(20).array() += 10.0;
  const KMeansResult two = kmeans_centers(blobs, 2, 9);
  const double lo = std::min(two.centroids(0, 0), two.centroids(1, 0));
  const double hi = std::max(two.centroids(0, 0), two.centroids(1, 0));
  CHECK(std::abs(lo) < 0.5);
  CHECK(std::abs(hi - 10.0) < 0.5);

  const KMeansResult again = kmeans_centers(blobs, 2, 9);
  CHECK(again.centroids == two.centroids);
}

TEST_CASE("Nystrom factor accuracy") {
  const KernelConfig cfg = KernelConfig::rbf(0.5);
  const Matrix pts = test_util::gaussian_matrix(20, 2, 41);
  const Matrix k = kernel_matrix(cfg, pts);

  std::vector<Eigen::Index> all(20);
  for (Eigen::Index i = 0; i < 20; ++i) all[static_cast<std::size_t>(i)] = i;
  const NystromFactor full = nystrom_factorize(cfg, pts, all);
  const Matrix v = full.features(pts);
  CHECK(rel_frobenius(v * v.transpose(), k) <= 1e-8);

  const NystromFactor r1 = nystrom_factorize(cfg, pts, 1, CenterRule::uniform, 5);
  const Matrix v1 = r1.features(pts);
  CHECK(v1.cols() == 1);
  Eigen::JacobiSVD<Matrix> svd(v1 * v1.transpose());
  CHECK(svd.singularValues()(1) < 1e-10 * svd.singularValues()(0));

  // Clustered data: half the points as centers beats a single center.
  Matrix clustered = 0.2 * test_util::gaussian_matrix(30, 2, 42);
  clustered.middleRows(10, 10).array() += 4.0;
  clustered.bottomRows(10).array() -= 4.0;
  const Matrix kc = kernel_matrix(cfg, clustered);
  const Matrix vh = nystrom_factorize(cfg, clustered, 15, CenterRule::kmeans, 1).features(clustered);
  const Matrix vo = nystrom_factorize(cfg, clustered, 1, CenterRule::kmeans, 1).features(clustered);
  CHECK(rel_frobenius(vh * vh.transpose(), kc) < rel_frobenius(vo * vo.transpose(), kc));

  // feature_map agrees with features row by row.
  const Matrix test_pts = test_util::gaussian_matrix(3, 2, 43);
  const Matrix f = full.features(test_pts);
  for (Eigen::Index i = 0; i < 3; ++i)
    CHECK((full.feature_map(test_pts.row(i).transpose()) - f.row(i).transpose()).norm() < 1e-12);
}

TEST_CASE("Nystrom input checks") {
  const Matrix pts = test_util::gaussian_matrix(5, 1, 1);
  CHECK_THROWS_AS(nystrom_factorize(KernelConfig::rbf(1.0), pts, {0, 0}), InvalidInput);
  CHECK_THROWS_AS(nystrom_factorize(KernelConfig::rbf(1.0), pts, {7}), InvalidInput);
  CHECK_THROWS_AS(nystrom_factorize(KernelConfig::rbf(1.0), pts, 6, CenterRule::uniform, 0), InvalidInput);
  for (auto r : {CenterRule::kmeans, CenterRule::uniform, CenterRule::all_points})
    CHECK(center_rule_from_string(to_string(r)) == r);
}
