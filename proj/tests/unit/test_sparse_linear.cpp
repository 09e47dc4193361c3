#include "helpers.hpp"
#include "minimax_iv/dgp.hpp"
#include "minimax_iv/sparse_linear.hpp"

#include <doctest.h>

#include <cmath>

using namespace minimax_iv;
using namespace minimax_iv::sparse;

namespace {

Dataset sparse_instance(Eigen::Index n, Eigen::Index p, std::uint64_t seed, double noise = 0.1) {
  const Matrix z = test_util::gaussian_matrix(n, p, seed);
  const Vector e = test_util::gaussian_vector(n, seed + 1);
  Matrix x = 0.8 * z;
  x.col(0) += 0.4 * e;
  x += 0.1 * test_util::gaussian_matrix(n, p, seed + 2);
  Vector theta0 = Vector::Zero(p);
  theta0(0) = 1.0;
  if (p > 1) theta0(1) = -0.5;
  const Vector y = x * theta0 + noise * e;
  return Dataset(y, x, z);
}

SaddleConfig config(AdversaryNorm norm, int iters, double b = 2.0) {
  SaddleConfig c;
  c.adversary_norm = norm;
  c.iters = iters;
  c.b_bound = b;
  return c;
}

// Uniform point of {rho >= 0, |rho|_1 <= B}: a flat Dirichlet draw with one slack coordinate.
Vector random_rho(Eigen::Index p, double b, Rng& rng) {
  std::exponential_distribution<double> ex(1.0);
  Vector v(2 * p + 1);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = ex(rng);
  return b * v.head(2 * p) / v.sum();
}

Vector random_simplex(Eigen::Index k, Rng& rng) {
  std::exponential_distribution<double> ex(1.0);
  Vector v(k);
  for (Eigen::Index i = 0; i < k; ++i) v(i) = ex(rng);
  return v / v.sum();
}

Vector random_ball(Eigen::Index q, double u, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> un(0.0, 1.0);
  Vector v(q);
  for (Eigen::Index i = 0; i < q; ++i) v(i) = nd(rng);
  return v * (u * std::pow(un(rng), 1.0 / static_cast<double>(q)) / v.norm());
}

}  // namespace

TEST_CASE("lift and unlift") {
  Vector th(2);
  th << 1, -2;
  const Vector r = lift(th);
  REQUIRE(r.size() == 4);
  CHECK(r(0) == 1.0);
  CHECK(r(1) == 0.0);
  CHECK(r(2) == 0.0);
  CHECK(r(3) == 2.0);
  CHECK(lift(Vector::Zero(3)).isZero(0.0));
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vector t = test_util::gaussian_vector(7, s);
    CHECK(unlift(lift(t)) == t);
    CHECK(lift(t).lpNorm<1>() == doctest::Approx(t.lpNorm<1>()));
  }
  CHECK_THROWS_AS(unlift(Vector::Zero(3)), InvalidInput);
}

TEST_CASE("one iteration from the symmetric start gives theta = 0") {
  const Dataset d = sparse_instance(50, 3, 1);
  // With T = 1 both halves of the lifted vector receive opposite gradients, so
  // the check is on the projection of the initial point.
  SaddleConfig c = config(AdversaryNorm::ell1, 1);
  c.eta = 1e-300;
  const SparseLinearModel m = fit_sparse_ell1(d, c);
  CHECK(m.theta().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(m.rho().sum() <= c.b_bound + 1e-12);
}

TEST_CASE("exact identification with x = z is recovered") {
  const Eigen::Index n = 2000;
  const Matrix z = test_util::gaussian_matrix(n, 2, 5);
  Vector theta0(2);
  theta0 << 1.0, 0.0;
  const Dataset d(z * theta0, z, z);
  for (AdversaryNorm norm : {AdversaryNorm::ell1, AdversaryNorm::ell2}) {
    SaddleConfig c = config(norm, 5000);
    c.mu = 1e-4;
    const SparseLinearModel m = fit_sparse(d, c);
    CHECK((m.theta() - theta0).norm() <= 0.1);
  }
}

TEST_CASE("U -> 0 freezes the l2 adversary at zero") {
  const Dataset d = sparse_instance(100, 3, 3);
  SaddleConfig c = config(AdversaryNorm::ell2, 50);
  c.u_bound = 1e-300;
  const SparseLinearModel m = fit_sparse_ell2(d, c);
  CHECK(m.dual().norm() <= 1e-299);
  CHECK(m.theta().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("duality gap within the convergence bound on random instances") {
  for (AdversaryNorm norm : {AdversaryNorm::ell1, AdversaryNorm::ell2}) {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Eigen::Index p = 2 + static_cast<Eigen::Index>(2 * s);  // up to 20
      const Eigen::Index n = 100 + static_cast<Eigen::Index>(40 * s);  // up to 460
      const Dataset d = sparse_instance(n, p, 1000 + s);
      const SaddleConfig c = config(norm, 400, 1.5);
      const SparseLinearModel m = fit_sparse(d, c);
      const double bound = gap_bound(Moments::from_data(d), c, p, p, c.iters);
      CHECK(m.gap() >= -1e-10);
      CHECK(m.gap() <= bound + 1e-8);
      CHECK(m.diagnostics.gap_bound == doctest::Approx(bound));
      CHECK(m.theta().lpNorm<1>() <= c.b_bound + 1e-9);
    }
  }
}

TEST_CASE("gap bound formula") {
  const Dataset d = sparse_instance(80, 4, 8);
  const Moments m = Moments::from_data(d);
  SaddleConfig c = config(AdversaryNorm::ell1, 100, 3.0);
  const double sup = m.cross.cwiseAbs().maxCoeff();
  const double expect1 = 16.0 * sup * (4.0 * 9.0 * std::log(3.0) + 3.0 * std::log(8.0) + std::log(8.0)) / 100.0;
  CHECK(gap_bound(m, c, 4, 4, 100) == doctest::Approx(expect1));
  c.adversary_norm = AdversaryNorm::ell2;
  c.u_bound = 2.0;
  double s2 = 0.0;
  for (Eigen::Index j = 0; j < 4; ++j) s2 += std::pow(m.cross.col(j).cwiseAbs().maxCoeff(), 2);
  const double expect2 = 16.0 * std::sqrt(s2) * (4.0 * 9.0 * std::log(3.0) + 3.0 * std::log(8.0) + 2.0) / 100.0;
  CHECK(gap_bound(m, c, 4, 4, 100) == doctest::Approx(expect2));
  CHECK(default_eta(m, AdversaryNorm::ell1) == doctest::Approx(1.0 / (4.0 * sup)));
}

TEST_CASE("duality gap is zero at a trivial saddle point") {
  // p = q = 1, x = z = 1, y = 0: theta = 0 and the uniform w give value 0 for every deviation.
  const Dataset d(Vector::Zero(4), Matrix::Ones(4, 1), Matrix::Ones(4, 1));
  const SaddleConfig c = config(AdversaryNorm::ell1, 1, 1.0);
  Vector w(2);
  w << 0.5, 0.5;
  CHECK(std::abs(duality_gap(d, Vector::Zero(2), w, c)) <= 1e-10);
}

TEST_CASE("weak duality and exact best responses") {
  for (AdversaryNorm norm : {AdversaryNorm::ell1, AdversaryNorm::ell2}) {
    for (std::uint64_t s = 0; s < 4; ++s) {
      const Eigen::Index p = 1 + static_cast<Eigen::Index>(s % 3);
      const Dataset d = sparse_instance(60, p, 40 + s);
      const Moments m = Moments::from_data(d);
      SaddleConfig c = config(norm, 1, 1.3);
      c.mu = 0.05;
      Rng rng(s);
      const Vector rho = random_rho(p, c.b_bound, rng);
      const Vector dual = norm == AdversaryNorm::ell1 ? random_simplex(2 * p, rng) : random_ball(p, c.u_bound, rng);
      const double gap = duality_gap(m, rho, dual, c);
      CHECK(gap >= -1e-10);

      // The closed-form best responses bound every sampled feasible deviation.
      const double value = saddle_loss(m, rho, dual, c);
      double sampled_max = value, sampled_min = value;
      for (int k = 0; k < 10000; ++k) {
        const Vector dk = norm == AdversaryNorm::ell1 ? random_simplex(2 * p, rng) : random_ball(p, c.u_bound, rng);
        sampled_max = std::max(sampled_max, saddle_loss(m, rho, dk, c));
        sampled_min = std::min(sampled_min, saddle_loss(m, random_rho(p, c.b_bound, rng), dual, c));
      }
      CHECK(sampled_max - sampled_min <= gap + 1e-10);
    }
  }
  const Dataset d = sparse_instance(30, 2, 9);
  const SaddleConfig c = config(AdversaryNorm::ell1, 1, 1.0);
  CHECK_THROWS_AS(duality_gap(d, Vector::Constant(4, 1.0), Vector::Constant(4, 0.25), c), InvalidInput);
  CHECK_THROWS_AS(duality_gap(d, Vector::Zero(4), Vector::Constant(4, 0.5), c), InvalidInput);
}

TEST_CASE("loss is affine in each argument") {
  const Dataset d = sparse_instance(40, 3, 17);
  const Moments m = Moments::from_data(d);
  for (AdversaryNorm norm : {AdversaryNorm::ell1, AdversaryNorm::ell2}) {
    SaddleConfig c = config(norm, 1, 2.0);
    c.mu = 0.1;
    Rng rng(3);
    const Vector r1 = random_rho(3, 2.0, rng), r2 = random_rho(3, 2.0, rng);
    const Vector w1 = norm == AdversaryNorm::ell1 ? random_simplex(6, rng) : random_ball(3, 1.0, rng);
    const Vector w2 = norm == AdversaryNorm::ell1 ? random_simplex(6, rng) : random_ball(3, 1.0, rng);
    const double a = 0.3;
    CHECK(saddle_loss(m, a * r1 + (1 - a) * r2, w1, c) ==
          doctest::Approx(a * saddle_loss(m, r1, w1, c) + (1 - a) * saddle_loss(m, r2, w1, c)).epsilon(1e-12));
    CHECK(saddle_loss(m, r1, a * w1 + (1 - a) * w2, c) ==
          doctest::Approx(a * saddle_loss(m, r1, w1, c) + (1 - a) * saddle_loss(m, r1, w2, c)).epsilon(1e-12));
  }
}

TEST_CASE("gap shrinks along the trajectory") {
  const Dataset d = sparse_instance(300, 5, 77);
  SaddleConfig c = config(AdversaryNorm::ell1, 1000, 1.5);
  c.gap_checkpoints = {10, 100, 1000};
  const SparseLinearModel m = fit_sparse_ell1(d, c);
  REQUIRE(m.diagnostics.gap_trace.size() == 3);
  CHECK(m.diagnostics.gap_trace[1].second < m.diagnostics.gap_trace[0].second);
  CHECK(m.diagnostics.gap_trace[2].second < m.diagnostics.gap_trace[1].second);
  CHECK(m.diagnostics.gap_trace[2].second == doctest::Approx(m.gap()));
}

TEST_CASE("stochastic variant") {
  const Dataset d = sparse_instance(200, 4, 5);
  SaddleConfig c = config(AdversaryNorm::ell1, 300, 1.5);
  const SparseLinearModel det = fit_sparse_ell1(d, c);
  c.batch_size = d.n();
  c.batch_mode = BatchMode::all_rows;
  const SparseLinearModel all = fit_sparse_stochastic(d, c);
  CHECK(all.theta() == det.theta());
  CHECK(all.dual() == det.dual());
  CHECK(all.gap() == det.gap());

  c.batch_mode = BatchMode::with_replacement;
  c.batch_size = 50;
  std::vector<double> gaps;
  Vector first;
  for (std::uint64_t s = 0; s < 5; ++s) {
    c.seed = s;
    const SparseLinearModel m = fit_sparse_stochastic(d, c);
    if (s == 0) first = m.theta();
    else CHECK(m.theta() != first);
    gaps.push_back(m.gap());
  }
  const auto [lo, hi] = std::minmax_element(gaps.begin(), gaps.end());
  CHECK(*hi <= 3.0 * *lo);

  c.batch_size = 0;
  CHECK_THROWS_AS(fit_sparse_stochastic(d, c), InvalidInput);
  c.batch_size = d.n() + 1;
  CHECK_THROWS_AS(fit_sparse_stochastic(d, c), InvalidInput);
  c.batch_size = 10;
  c.batch_mode = BatchMode::all_rows;
  CHECK_THROWS_AS(fit_sparse_stochastic(d, c), InvalidInput);
}

TEST_CASE("mini-batch fit on the high-dimensional linear design stays within twice the deterministic MSE") {
  dgp::DgpConfig cfg;
  cfg.n = 400;
  cfg.n_x = cfg.n_z = 1000;
  cfg.fname = "linear";
  cfg.seed = 21;
  const dgp::Generated g = dgp::generate(cfg);
  SaddleConfig c = config(AdversaryNorm::ell1, 1500, 1.2);
  const double det = dgp::evaluate_mse(fit_sparse(g.data, c), cfg, g.h0, 5000, 3);
  c.batch_size = 100;
  c.seed = 4;
  const double sto = dgp::evaluate_mse(fit_sparse(g.data, c), cfg, g.h0, 5000, 3);
  CHECK(sto <= 2.0 * det);
}

TEST_CASE("shrinkage and config checks") {
  const Dataset d = sparse_instance(100, 6, 12);
  SaddleConfig c = config(AdversaryNorm::ell1, 200, 1.5);
  c.shrink_threshold = 0.05;
  const SparseLinearModel m = fit_sparse(d, c);
  for (Eigen::Index j = 0; j < m.theta().size(); ++j)
    CHECK((m.theta()(j) == 0.0 || std::abs(m.theta()(j)) >= 0.05));
  c = config(AdversaryNorm::ell1, 0);
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = config(AdversaryNorm::ell2, 10);
  CHECK_THROWS_AS(fit_sparse_ell1(d, c), InvalidInput);
  CHECK(adversary_norm_from_string("ell2") == AdversaryNorm::ell2);
  CHECK_THROWS_AS(adversary_norm_from_string("ell3"), InvalidInput);
}
