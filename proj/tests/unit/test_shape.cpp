#include "helpers.hpp"
#include "qp_oracle.hpp"
#include "minimax_iv/dgp.hpp"
#include "minimax_iv/shape.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace minimax_iv;
using namespace minimax_iv::shape;

namespace {

// Brute force isotonic regression: over every split of 0..n-1 into contiguous
// blocks whose means are nondecreasing, keep the one with least squared error.
Vector isotonic_brute_force(const Vector& y) {
  const Eigen::Index n = y.size();
  Vector best;
  double best_sse = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1U << (n - 1)); ++mask) {
    Vector fit(n);
    double prev = -std::numeric_limits<double>::infinity();
    bool ok = true;
    Eigen::Index start = 0;
    for (Eigen::Index i = 0; i < n && ok; ++i) {
      const bool cut = i == n - 1 || (mask & (1U << i));
      if (!cut) continue;
      const double mean = y.segment(start, i - start + 1).mean();
      if (mean < prev) ok = false;
      fit.segment(start, i - start + 1).setConstant(mean);
      prev = mean;
      start = i + 1;
    }
    if (!ok) continue;
    const double sse = (fit - y).squaredNorm();
    if (sse < best_sse) {
      best_sse = sse;
      best = fit;
    }
  }
  return best;
}

// Constraint rows for {nondecreasing, slope <= L, box} over knots.
void lipschitz_iso_constraints(const Vector& knots, double lip, const Box& box, Matrix& a, Vector& b) {
  const Eigen::Index n = knots.size();
  a = Matrix::Zero(2 * (n - 1) + 2 * n, n);
  b = Vector::Zero(a.rows());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    a(r, i) = 1.0, a(r, i + 1) = -1.0, b(r++) = 0.0;
    a(r, i) = -1.0, a(r, i + 1) = 1.0, b(r++) = lip * (knots(i + 1) - knots(i));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    a(r, i) = 1.0, b(r++) = box.hi;
    a(r, i) = -1.0, b(r++) = -box.lo;
  }
}

void convex_lipschitz_constraints(const Vector& knots, double lip, Matrix& a, Vector& b) {
  const Eigen::Index n = knots.size();
  a = Matrix::Zero(2 * (n - 1) + (n - 2), n);
  b = Vector::Zero(a.rows());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double d = knots(i + 1) - knots(i);
    a(r, i) = -1.0, a(r, i + 1) = 1.0, b(r++) = lip * d;
    a(r, i) = 1.0, a(r, i + 1) = -1.0, b(r++) = lip * d;
  }
  for (Eigen::Index i = 0; i + 2 < n; ++i) {
    const double d0 = knots(i + 1) - knots(i), d1 = knots(i + 2) - knots(i + 1);
    a(r, i) = -1.0 / d0, a(r, i + 1) = 1.0 / d0 + 1.0 / d1, a(r, i + 2) = -1.0 / d1;
    ++r;
  }
}

Dataset scalar_dataset(const Vector& x, const Vector& z, const Vector& y) {
  return Dataset(y, Matrix(x), Matrix(z));
}

}  // namespace

TEST_CASE("pav examples") {
  Vector a(3);
  a << 1, 2, 3;
  CHECK(pav(a) == a);
  Vector b(2);
  b << 2, 1;
  CHECK(pav(b).isApprox(Vector::Constant(2, 1.5)));
  Vector c(3);
  c << 3, 1, 2;
  CHECK((pav(c) - Vector::Constant(3, 2.0)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(pav(a, Vector::Zero(3)), InvalidInput);
  CHECK_THROWS_AS(pav(a, Vector::Ones(2)), InvalidInput);
}

TEST_CASE("pav matches brute force on every small grid input") {
  long checked = 0;
  for (Eigen::Index n = 1; n <= 6; ++n) {
    long total = 1;
    for (Eigen::Index i = 0; i < n; ++i) total *= 5;
    for (long code = 0; code < total; ++code) {
      Vector y(n);
      long c = code;
      for (Eigen::Index i = 0; i < n; ++i, c /= 5) y(i) = static_cast<double>(c % 5);
      const Vector fit = pav(y);
      const Vector oracle = isotonic_brute_force(y);
      // Block means of integers over at most 6 entries: compare scaled by 60,
      // a common multiple of every block length.
      for (Eigen::Index i = 0; i < n; ++i) REQUIRE(std::llround(60.0 * fit(i)) == std::llround(60.0 * oracle(i)));
      REQUIRE((fit - oracle).cwiseAbs().maxCoeff() < 1e-12);
      ++checked;
    }
  }
  CHECK(checked == 5 + 25 + 125 + 625 + 3125 + 15625);
}

TEST_CASE("weighted pav is monotone and preserves the weighted mean") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Vector y = test_util::gaussian_vector(30, s);
    const Vector w = test_util::gaussian_vector(30, s + 100).array().exp();
    const Vector fit = pav(y, w);
    for (Eigen::Index i = 1; i < 30; ++i) CHECK(fit(i) >= fit(i - 1));
    CHECK(w.dot(fit) == doctest::Approx(w.dot(y)).epsilon(1e-12));
  }
}

TEST_CASE("lipschitz isotonic projection matches the exact QP") {
  for (std::uint64_t s = 0; s < 15; ++s) {
    const Eigen::Index n = 4;
    const Vector y = 2.0 * test_util::gaussian_vector(n, 500 + s);
    Vector knots = test_util::gaussian_vector(n, 600 + s);
    std::sort(knots.data(), knots.data() + n);
    const Box box{-1.5, 1.5};
    const double lip = 1.0;
    const ProjectionResult r = lipschitz_isotonic(y, knots, lip, box, 5000);
    Matrix a;
    Vector b;
    lipschitz_iso_constraints(knots, lip, box, a, b);
    const auto oracle = test_util::qp_project(y, a, b);
    REQUIRE(oracle);
    CHECK(r.converged);
    CHECK((r.values - *oracle).cwiseAbs().maxCoeff() <= 1e-3);
    CHECK((a * r.values - b).maxCoeff() <= 1e-6);
  }
}

TEST_CASE("project_theta") {
  ShapeConfig cfg;
  cfg.kind = ShapeKind::monotone_inc;
  cfg.theta_plus_box = Box{0.0, 1.0};
  cfg.theta_minus_box = Box{0.0, 0.0};
  const Vector knots = Vector::LinSpaced(2, 0.0, 1.0);
  Vector t(4);
  t << 0.8, 0.2, 0.0, 0.0;
  const Vector p = project_theta(t, knots, cfg);
  CHECK(p(0) == doctest::Approx(0.5));
  CHECK(p(1) == doctest::Approx(0.5));

  // Feasible points are fixed.
  cfg.kind = ShapeKind::tv;
  cfg.theta_minus_box = Box{0.0, 1.0};
  Vector f(4);
  f << 0.1, 0.4, 0.2, 0.3;
  CHECK(project_theta(f, knots, cfg) == f);

  // n = 4 random inputs against the exact QP, per part (the parts decouple).
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vector k4 = Vector::LinSpaced(4, -1.0, 1.0);
    const Vector in = test_util::gaussian_vector(8, 700 + s);
    const Vector out = project_theta(in, k4, cfg);
    Matrix a;
    Vector b;
    lipschitz_iso_constraints(k4, 1e9, Box{0.0, 1.0}, a, b);
    for (int part = 0; part < 2; ++part) {
      const auto oracle = test_util::qp_project(in.segment(4 * part, 4), a, b);
      REQUIRE(oracle);
      CHECK((out.segment(4 * part, 4) - *oracle).cwiseAbs().maxCoeff() <= 1e-3);
    }
  }
  ShapeConfig no_box;
  CHECK_THROWS_AS(project_theta(t, knots, no_box), InvalidInput);
}

TEST_CASE("convex lipschitz projection") {
  const Vector knots = Vector::LinSpaced(5, 0.0, 2.0);
  const Vector line = 0.5 * knots.array() + 1.0;
  const ProjectionResult same = project_convex_lipschitz(line, knots, 1.0, 1000);
  CHECK((same.values - line).cwiseAbs().maxCoeff() < 1e-12);

  const Vector y = test_util::gaussian_vector(5, 3);
  const ProjectionResult flat = project_convex_lipschitz(y, knots, 0.0, 5000);
  CHECK((flat.values.array() - y.mean()).abs().maxCoeff() <= 1e-6);

  // (0, 1, 0) over equally spaced knots: the best convex fit is constant at 1/3.
  Vector bump(3);
  bump << 0.0, 1.0, 0.0;
  const Vector k3 = Vector::LinSpaced(3, 0.0, 1.0);
  const ProjectionResult pb = project_convex_lipschitz(bump, k3, 100.0, 5000);
  Matrix a;
  Vector b;
  convex_lipschitz_constraints(k3, 100.0, a, b);
  const auto ob = test_util::qp_project(bump, a, b);
  REQUIRE(ob);
  CHECK((pb.values - *ob).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(pb.values(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vector yk = 2.0 * test_util::gaussian_vector(5, 800 + s);
    Vector ks = test_util::gaussian_vector(5, 900 + s);
    std::sort(ks.data(), ks.data() + 5);
    const ProjectionResult r = project_convex_lipschitz(yk, ks, 1.5, 20000);
    convex_lipschitz_constraints(ks, 1.5, a, b);
    const auto oracle = test_util::qp_project(yk, a, b);
    REQUIRE(oracle);
    CHECK((a * r.values - b).maxCoeff() <= 1e-6);
    CHECK((r.values - yk).squaredNorm() <= (*oracle - yk).squaredNorm() + 1e-3);
    CHECK((r.values - *oracle).cwiseAbs().maxCoeff() <= 1e-3);
  }
  Vector dup(3);
  dup << 0.0, 0.0, 1.0;
  CHECK_THROWS_AS(project_convex_lipschitz(bump, dup, 1.0, 10), InvalidInput);
}

TEST_CASE("piecewise prediction") {
  Vector k(3), v(3);
  k << 0.0, 1.0, 3.0;
  v << 1.0, 3.0, -1.0;
  const PiecewiseModel m(k, v, ShapeKind::tv, std::nullopt);
  CHECK(predict_piecewise(m, 1.0) == 3.0);
  CHECK(predict_piecewise(m, 0.5) == doctest::Approx(2.0));
  CHECK(predict_piecewise(m, 2.0) == doctest::Approx(1.0));
  CHECK(predict_piecewise(m, 10.0) == -1.0);
  CHECK(predict_piecewise(m, -4.0) == 1.0);
  Vector unsorted(2);
  unsorted << 1.0, 0.0;
  CHECK_THROWS_AS(PiecewiseModel(unsorted, Vector::Zero(2), ShapeKind::tv, std::nullopt), InvalidInput);
}

TEST_CASE("constant outcome gives a constant monotone fit") {
  const Vector x = test_util::gaussian_vector(100, 1);
  const Vector z = test_util::gaussian_vector(100, 2);
  const PiecewiseModel m = fit_shape_iv(scalar_dataset(x, z, Vector::Constant(100, 0.7)), ShapeConfig{});
  CHECK((m.values().array() - 0.7).abs().maxCoeff() <= 0.05);
}

TEST_CASE("monotone noiseless exogenous step is fitted at the knots") {
  const Vector x = 1.5 * test_util::gaussian_vector(200, 7);
  Vector y(200);
  for (Eigen::Index i = 0; i < 200; ++i) y(i) = dgp::true_function("step", x(i));
  ShapeConfig cfg;
  cfg.iters = 4000;
  const PiecewiseModel m = fit_shape_iv(scalar_dataset(x, x, y), cfg);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m.knots().size(); ++i)
    worst = std::max(worst, std::abs(m.values()(i) - dgp::true_function("step", m.knots()(i))));
  CHECK(worst <= 0.1);
  for (Eigen::Index i = 1; i < m.values().size(); ++i) CHECK(m.values()(i) >= m.values()(i - 1) - 1e-9);
}

TEST_CASE("zero iterations returns the flagged initialization") {
  const Vector x = test_util::gaussian_vector(10, 1);
  ShapeConfig cfg;
  cfg.iters = 0;
  const PiecewiseModel m = fit_shape_iv(scalar_dataset(x, x, x), cfg);
  CHECK(m.diagnostics.degenerate);
  CHECK(m.values().isZero(0.0));
}

TEST_CASE("fitted values respect their shape") {
  dgp::DgpConfig dc;
  dc.n = 200;
  dc.fname = "sigmoid";
  dc.seed = 3;
  const dgp::Generated g = dgp::generate(dc);
  for (ShapeKind kind : {ShapeKind::monotone_inc, ShapeKind::monotone_dec, ShapeKind::tv, ShapeKind::lipschitz_tv,
                         ShapeKind::convex_lipschitz}) {
    ShapeConfig cfg;
    cfg.kind = kind;
    cfg.iters = 300;
    cfg.lipschitz = 1.0;
    const PiecewiseModel m = fit_shape_iv(g.data, cfg);
    const Vector& v = m.values();
    const Vector& k = m.knots();
    for (Eigen::Index i = 1; i < v.size(); ++i) {
      if (kind == ShapeKind::monotone_inc) CHECK(v(i) >= v(i - 1) - 1e-9);
      if (kind == ShapeKind::monotone_dec) CHECK(v(i) <= v(i - 1) + 1e-9);
      // Both parts are nondecreasing with slopes in [0, L], so their difference has |slope| <= L.
      if (kind == ShapeKind::lipschitz_tv) CHECK(std::abs(v(i) - v(i - 1)) <= 1.0 * (k(i) - k(i - 1)) + 1e-6);
      if (kind == ShapeKind::convex_lipschitz) CHECK(std::abs(v(i) - v(i - 1)) <= 1.0 * (k(i) - k(i - 1)) + 1e-6);
    }
    if (kind == ShapeKind::convex_lipschitz) {
      CHECK(k.size() <= 200);
      for (Eigen::Index i = 1; i + 1 < v.size(); ++i) {
        const double s0 = (v(i) - v(i - 1)) / (k(i) - k(i - 1)), s1 = (v(i + 1) - v(i)) / (k(i + 1) - k(i));
        CHECK(s1 >= s0 - 1e-6);
      }
    }
    CHECK(m.diagnostics.gap >= -1e-9);
  }
}

TEST_CASE("decreasing fit mirrors the increasing fit of the reflected treatment") {
  const Vector x = test_util::gaussian_vector(80, 11);
  const Vector z = x + 0.3 * test_util::gaussian_vector(80, 12);
  const Vector y = (-x).array().tanh() + 0.1 * test_util::gaussian_vector(80, 13).array();
  ShapeConfig dec;
  dec.kind = ShapeKind::monotone_dec;
  dec.iters = 500;
  ShapeConfig inc = dec;
  inc.kind = ShapeKind::monotone_inc;
  const PiecewiseModel md = fit_shape_iv(scalar_dataset(x, z, y), dec);
  const PiecewiseModel mi = fit_shape_iv(scalar_dataset(-x, z, y), inc);
  for (Eigen::Index i = 0; i < 80; ++i) CHECK(md.predict_scalar(x(i)) == doctest::Approx(mi.predict_scalar(-x(i))).epsilon(1e-8));
}

TEST_CASE("shape config checks") {
  ShapeConfig c;
  c.eta = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = ShapeConfig{};
  c.theta_plus_box = Box{1.0, 0.0};
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  const Matrix x2 = test_util::gaussian_matrix(10, 2, 1);
  CHECK_THROWS_AS(fit_shape_iv(Dataset(Vector::Zero(10), x2, x2), ShapeConfig{}), InvalidInput);
  for (ShapeKind k : {ShapeKind::monotone_inc, ShapeKind::monotone_dec, ShapeKind::tv, ShapeKind::lipschitz_tv,
                      ShapeKind::convex_lipschitz})
    CHECK(shape_kind_from_string(to_string(k)) == k);
}
