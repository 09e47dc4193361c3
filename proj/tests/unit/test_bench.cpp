#include "minimax_iv/bench.hpp"

#include <doctest.h>

#include <cmath>

using namespace minimax_iv;
using namespace minimax_iv::bench;

namespace {

BenchSpec tiny_spec() {
  BenchSpec s;
  s.name = "tiny";
  s.reps = 3;
  s.seed = 11;
  s.n_test = 500;
  CellSpec a;
  a.function = "abs";
  a.n = 60;
  CellSpec b;
  b.function = "sin";
  b.n = 60;
  s.cells = {a, b};
  EstimatorSpec tsls = default_spec(EstimatorKind::twosls);
  EstimatorSpec ny = default_spec(EstimatorKind::nystrom);
  ny.rank = 20;
  ny.tune = false;
  ny.lambda_mu = 1.0;
  s.estimators = {tsls, ny};
  return s;
}

}  // namespace

TEST_CASE("estimator kinds") {
  for (const std::string& name : estimator_kind_names())
    CHECK(to_string(estimator_kind_from_string(name)) == name);
  CHECK(estimator_kind_names().size() == 7);
  CHECK_THROWS_AS(estimator_kind_from_string("lasso"), InvalidInput);
  CHECK(default_spec(EstimatorKind::sparse_ell2).saddle.adversary_norm == sparse::AdversaryNorm::ell2);
}

TEST_CASE("fit_estimator runs every kind and reports its diagnostic") {
  dgp::DgpConfig cfg;
  cfg.n = 80;
  cfg.seed = 2;
  const dgp::Generated g = dgp::generate(cfg);
  for (const std::string& name : estimator_kind_names()) {
    EstimatorSpec s = default_spec(estimator_kind_from_string(name));
    s.rank = 20;
    s.saddle.iters = 100;
    s.shape.iters = 100;
    s.rfiv.iters = 10;
    s.rfiv.forest.tree.min_leaf = 5;
    s.rfiv.classifier.min_leaf = 5;
    const FitResult r = fit_estimator(g.data, s, 5);
    REQUIRE(r.model);
    CHECK(std::isfinite(dgp::evaluate_mse(*r.model, cfg, g.h0, 200, 1)));
    const FitResult again = fit_estimator(g.data, s, 5);
    CHECK(again.model->predict_rows(g.data.x()) == r.model->predict_rows(g.data.x()));
    auto has = [&](const std::string& key) {
      for (const auto& [k, v] : r.diagnostics)
        if (k == key) return std::isfinite(v);
      return false;
    };
    if (name == "kernel") CHECK(has("normal_equation_residual"));
    if (name == "sparse_ell1" || name == "sparse_ell2") CHECK(has("duality_gap"));
    if (name == "rfiv") CHECK(has("minimax_gap"));
  }
}

TEST_CASE("spec validation") {
  BenchSpec s = tiny_spec();
  CHECK_NOTHROW(s.validate());
  s.reps = 1;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = tiny_spec();
  s.estimators.push_back(s.estimators[0]);
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = tiny_spec();
  s.cells[1].function = "abs";
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = tiny_spec();
  s.estimators[1].lambda_mu.reset();
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  CHECK_THROWS_AS(run_benchmark(s, 1), InvalidInput);
}

TEST_CASE("benchmark statistics and determinism") {
  const BenchSpec s = tiny_spec();
  const BenchResult r1 = run_benchmark(s, 1);
  REQUIRE(r1.cells.size() == 4);
  CHECK(r1.total_failures() == 0);
  for (const CellResult& c : r1.cells) {
    REQUIRE(c.mse.size() == 3);
    double mean = 0.0;
    for (double v : c.mse) mean += v / 3.0;
    double ss = 0.0;
    for (double v : c.mse) ss += (v - mean) * (v - mean);
    CHECK(c.mean_mse == doctest::Approx(mean).epsilon(1e-12));
    CHECK(c.half_width == doctest::Approx(2.0 * std::sqrt(ss / 2.0) / std::sqrt(3.0)).epsilon(1e-12));
  }
  CHECK(r1.at("sin", "nystrom").function == "sin");
  CHECK_THROWS(r1.at("sin", "kernel"));

  const BenchResult r2 = run_benchmark(s, 3);
  CHECK(results_csv(r1, true) == results_csv(r2, true));
  CHECK(results_csv(r1, true).rfind("function,estimator,mean_mse,half_width,failures,reps,seconds\n", 0) == 0);
  const std::string table = results_table(r1);
  CHECK(table.find("abs,") != std::string::npos);
  CHECK(table.find(" ± ") != std::string::npos);
  const std::string man = manifest(s, r1, 1);
  CHECK(man.find(kLibraryVersion) != std::string::npos);
  CHECK(man.find("seed") != std::string::npos);
}

TEST_CASE("seeds depend on the cell, not on its position") {
  BenchSpec s = tiny_spec();
  const std::uint64_t a = data_seed(s, s.cells[1], 0);
  std::swap(s.cells[0], s.cells[1]);
  CHECK(data_seed(s, s.cells[0], 0) == a);
  CHECK(data_seed(s, s.cells[0], 1) != a);
  CHECK(estimator_seed(a, s.estimators[0]) != estimator_seed(a, s.estimators[1]));

  // The same cell in a different grid reproduces its numbers.
  BenchSpec one = tiny_spec();
  one.cells = {tiny_spec().cells[1]};
  const BenchResult full = run_benchmark(tiny_spec(), 1);
  const BenchResult part = run_benchmark(one, 1);
  CHECK(part.at("sin", "twosls").mse == full.at("sin", "twosls").mse);
}

TEST_CASE("failed reps are counted and excluded") {
  BenchSpec s = tiny_spec();
  CellSpec wide;
  wide.function = "abs";
  wide.n = 40;
  wide.n_x = wide.n_z = 2;
  wide.label = "abs2d";
  s.cells = {wide};
  s.estimators = {default_spec(EstimatorKind::shape), default_spec(EstimatorKind::twosls)};
  const BenchResult r = run_benchmark(s, 2);
  const CellResult& bad = r.at("abs2d", "shape");
  CHECK(bad.failures == 3);
  CHECK(std::isnan(bad.mean_mse));
  CHECK(bad.errors.size() == 3);
  CHECK(r.at("abs2d", "twosls").failures == 0);
  CHECK(r.total_failures() == 3);
  CHECK(results_csv(r, true).find("abs2d,shape,NA,NA,3,3,NA") != std::string::npos);
  CHECK(results_table(r).find("(3 failed)") != std::string::npos);
}

TEST_CASE("presets") {
  for (const std::string& name : preset_names()) {
    const BenchSpec p = preset(name);
    CHECK(p.name == name);
    CHECK_NOTHROW(p.validate());
  }
  CHECK(preset("fig1-desk").cells.size() == 9);
  CHECK(preset("fig3-desk").cells[0].n_x == 1000);
  CHECK_THROWS_AS(preset("fig9"), InvalidInput);
}
