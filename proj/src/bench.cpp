#include "minimax_iv/bench.hpp"

#include "minimax_iv/config_io.hpp"
#include "minimax_iv/dgp.hpp"
#include "minimax_iv/rkhs.hpp"
#include "minimax_iv/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <sstream>
#include <thread>

namespace minimax_iv::bench {

namespace {

const std::vector<std::string> kKindNames = {"kernel", "nystrom", "sparse_ell1", "sparse_ell2",
                                             "shape",  "rfiv",    "twosls"};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t double_bits(double v) {
  std::uint64_t b = 0;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

}  // namespace

const std::vector<std::string>& estimator_kind_names() { return kKindNames; }

std::string to_string(EstimatorKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

EstimatorKind estimator_kind_from_string(const std::string& name) {
  const auto it = std::find(kKindNames.begin(), kKindNames.end(), name);
  if (it == kKindNames.end()) {
    std::string all;
    for (const auto& k : kKindNames) all += (all.empty() ? "" : ", ") + k;
    throw InvalidInput("unknown estimator '" + name + "'; expected one of: " + all);
  }
  return static_cast<EstimatorKind>(it - kKindNames.begin());
}

void EstimatorSpec::validate() const {
  switch (kind) {
    case EstimatorKind::kernel:
    case EstimatorKind::nystrom:
      kernel_h.validate();
      kernel_f.validate();
      if (kind == EstimatorKind::nystrom && rank < 1) throw InvalidInput("estimator: rank must be >= 1");
      if (!tune && !lambda_mu) throw InvalidInput("estimator: lambda_mu is required when tune is false");
      if (lambda_mu && !(*lambda_mu > 0.0)) throw InvalidInput("estimator: lambda_mu must be positive");
      if (cv_folds < 2) throw InvalidInput("estimator: cv_folds must be >= 2");
      if (cv_repeats < 1) throw InvalidInput("estimator: cv_repeats must be >= 1");
      break;
    case EstimatorKind::sparse_ell1:
    case EstimatorKind::sparse_ell2:
      saddle.validate();
      break;
    case EstimatorKind::shape:
      shape.validate();
      break;
    case EstimatorKind::rfiv:
      rfiv.validate();
      break;
    case EstimatorKind::twosls:
      if (poly_degree < 1) throw InvalidInput("estimator: poly_degree must be >= 1");
      break;
  }
}

EstimatorSpec default_spec(EstimatorKind kind) {
  EstimatorSpec s;
  s.kind = kind;
  if (kind == EstimatorKind::sparse_ell2) s.saddle.adversary_norm = sparse::AdversaryNorm::ell2;
  return s;
}

FitResult fit_estimator(const Dataset& data, const EstimatorSpec& spec, std::uint64_t seed) {
  spec.validate();
  FitResult out;
  switch (spec.kind) {
    case EstimatorKind::kernel:
    case EstimatorKind::nystrom: {
      const bool nys = spec.kind == EstimatorKind::nystrom;
      rkhs::NystromOptions nopts;
      nopts.rank = std::min(spec.rank, data.n());
      nopts.center_rule = spec.center_rule;
      nopts.seed = derive_seed(seed, {1});
      double lambda_mu = 0.0;
      if (spec.tune) {
        rkhs::TuneOptions topts;
        topts.approximation = nys ? rkhs::Approximation::nystrom : rkhs::Approximation::exact;
        topts.nystrom = nopts;
        topts.k_folds = spec.cv_folds;
        topts.repeats = spec.cv_repeats;
        topts.seed = derive_seed(seed, {2});
        lambda_mu = rkhs::tune_lambda_mu(data, spec.kernel_h, spec.kernel_f, rkhs::default_ridge_multipliers(), topts)
                        .lambda_mu;
      } else {
        lambda_mu = *spec.lambda_mu;
      }
      const HyperParams hyper = rkhs::default_hyper(data.n(), 4.0 * lambda_mu);
      out.diagnostics.emplace_back("lambda_mu", lambda_mu);
      if (nys) {
        out.model = std::make_unique<rkhs::NystromModel>(
            rkhs::fit_nystrom_iv(data, spec.kernel_h, spec.kernel_f, nopts, hyper));
      } else {
        auto fit = rkhs::fit_kernel_iv_detailed(data, spec.kernel_h, spec.kernel_f, hyper);
        out.diagnostics.emplace_back("normal_equation_residual", fit.normal_equation_residual);
        out.model = std::make_unique<rkhs::KernelModel>(std::move(fit.model));
      }
      break;
    }
    case EstimatorKind::sparse_ell1:
    case EstimatorKind::sparse_ell2: {
      sparse::SaddleConfig cfg = spec.saddle;
      cfg.adversary_norm =
          spec.kind == EstimatorKind::sparse_ell1 ? sparse::AdversaryNorm::ell1 : sparse::AdversaryNorm::ell2;
      cfg.seed = seed;
      auto m = std::make_unique<sparse::SparseLinearModel>(sparse::fit_sparse(data, cfg));
      out.diagnostics.emplace_back("duality_gap", m->gap());
      out.diagnostics.emplace_back("gap_bound", m->diagnostics.gap_bound);
      out.model = std::move(m);
      break;
    }
    case EstimatorKind::shape: {
      auto m = std::make_unique<shape::PiecewiseModel>(shape::fit_shape_iv(data, spec.shape));
      out.diagnostics.emplace_back("approximate_gap", m->diagnostics.gap);
      out.diagnostics.emplace_back("projections_converged", m->diagnostics.projections_converged ? 1.0 : 0.0);
      out.model = std::move(m);
      break;
    }
    case EstimatorKind::rfiv: {
      rfiv::RfivConfig cfg = spec.rfiv;
      cfg.seed = seed;
      auto m = std::make_unique<rfiv::EnsembleModel>(rfiv::fit_rfiv(data, cfg));
      out.diagnostics.emplace_back("minimax_gap", rfiv::minimax_gap(*m, data, cfg));
      out.diagnostics.emplace_back("gap_bound", rfiv::rfiv_bound(cfg.iters));
      out.model = std::move(m);
      break;
    }
    case EstimatorKind::twosls:
      out.model = std::make_unique<dgp::TwoSlsModel>(dgp::fit_2sls(data, spec.poly_degree));
      break;
  }
  return out;
}

dgp::DgpConfig CellSpec::dgp(std::uint64_t seed) const {
  dgp::DgpConfig c;
  c.fname = function;
  c.n = n;
  c.n_x = n_x;
  c.n_z = n_z;
  c.strength = strength;
  c.seed = seed;
  return c;
}

void BenchSpec::validate() const {
  if (reps < 2) throw InvalidInput("benchmark: reps must be >= 2");
  if (n_test < 1) throw InvalidInput("benchmark: n_test must be >= 1");
  if (cells.empty()) throw InvalidInput("benchmark: no cells");
  if (estimators.empty()) throw InvalidInput("benchmark: no estimators");
  std::vector<std::string> seen;
  for (const auto& c : cells) {
    c.dgp(0).validate();
    if (std::find(seen.begin(), seen.end(), c.display_label()) != seen.end())
      throw InvalidInput("benchmark: duplicate cell label '" + c.display_label() + "'");
    seen.push_back(c.display_label());
  }
  seen.clear();
  for (const auto& e : estimators) {
    e.validate();
    if (std::find(seen.begin(), seen.end(), e.display_label()) != seen.end())
      throw InvalidInput("benchmark: duplicate estimator label '" + e.display_label() + "'");
    seen.push_back(e.display_label());
  }
}

std::uint64_t data_seed(const BenchSpec& spec, const CellSpec& cell, int rep) {
  return derive_seed(spec.seed, {hash_name(cell.function), static_cast<std::uint64_t>(cell.n),
                                 static_cast<std::uint64_t>(cell.n_x), static_cast<std::uint64_t>(cell.n_z),
                                 double_bits(cell.strength), static_cast<std::uint64_t>(rep)});
}

std::uint64_t estimator_seed(std::uint64_t data_seed, const EstimatorSpec& estimator) {
  return derive_seed(data_seed, {hash_name(estimator.display_label())});
}

int BenchResult::total_failures() const {
  int f = 0;
  for (const auto& c : cells) f += c.failures;
  return f;
}

const CellResult& BenchResult::at(const std::string& function, const std::string& estimator) const {
  for (const auto& c : cells)
    if (c.function == function && c.estimator == estimator) return c;
  throw InvalidInput("benchmark result has no cell (" + function + ", " + estimator + ")");
}

namespace {

struct TaskOutcome {
  double mse = kNaN;
  double seconds = 0.0;
  std::string error;
};

TaskOutcome run_task(const BenchSpec& spec, const CellSpec& cell, const EstimatorSpec& est, int rep) {
  TaskOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const std::uint64_t ds = data_seed(spec, cell, rep);
    const dgp::DgpConfig cfg = cell.dgp(ds);
    const dgp::Generated g = dgp::generate(cfg);
    const FitResult fit = fit_estimator(g.data, est, estimator_seed(ds, est));
    out.mse = dgp::evaluate_mse(*fit.model, cfg, g.h0, spec.n_test, derive_seed(ds, {hash_name("test")}));
  } catch (const std::exception& e) {
    out.mse = kNaN;
    out.error = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace

BenchResult run_benchmark(const BenchSpec& spec, int jobs) {
  spec.validate();
  if (jobs < 0) throw InvalidInput("benchmark: jobs must be >= 0");
  if (jobs == 0) jobs = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));

  const std::size_t n_cells = spec.cells.size(), n_est = spec.estimators.size();
  const auto reps = static_cast<std::size_t>(spec.reps);
  const std::size_t n_tasks = n_cells * n_est * reps;
  std::vector<TaskOutcome> outcomes(n_tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < n_tasks; k = next++) {
      const std::size_t c = k / (n_est * reps), e = (k / reps) % n_est, r = k % reps;
      outcomes[k] = run_task(spec, spec.cells[c], spec.estimators[e], static_cast<int>(r));
    }
  };
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::thread> pool;
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), n_tasks);
  for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  BenchResult result;
  result.name = spec.name;
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (std::size_t c = 0; c < n_cells; ++c) {
    for (std::size_t e = 0; e < n_est; ++e) {
      CellResult cr;
      cr.function = spec.cells[c].display_label();
      cr.estimator = spec.estimators[e].display_label();
      cr.reps = spec.reps;
      double sum = 0.0;
      int ok = 0;
      for (std::size_t r = 0; r < reps; ++r) {
        const TaskOutcome& o = outcomes[(c * n_est + e) * reps + r];
        cr.mse.push_back(o.mse);
        cr.seconds += o.seconds;
        if (std::isnan(o.mse)) {
          ++cr.failures;
          cr.errors.push_back("rep " + std::to_string(r) + ": " + o.error);
        } else {
          sum += o.mse;
          ++ok;
        }
      }
      cr.mean_mse = ok > 0 ? sum / ok : kNaN;
      if (ok >= 2) {
        double ss = 0.0;
        for (double m : cr.mse)
          if (!std::isnan(m)) ss += (m - cr.mean_mse) * (m - cr.mean_mse);
        cr.half_width = 2.0 * std::sqrt(ss / (ok - 1)) / std::sqrt(static_cast<double>(ok));
      } else {
        cr.half_width = kNaN;
      }
      result.cells.push_back(std::move(cr));
    }
  }
  return result;
}

namespace {

std::string num_or_na(double v) { return std::isnan(v) ? "NA" : format_double(v); }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string results_csv(const BenchResult& result, bool omit_timing) {
  std::ostringstream out;
  out << "function,estimator,mean_mse,half_width,failures,reps,seconds\n";
  for (const auto& c : result.cells) {
    out << c.function << ',' << c.estimator << ',' << num_or_na(c.mean_mse) << ',' << num_or_na(c.half_width) << ','
        << c.failures << ',' << c.reps << ',' << (omit_timing ? std::string("NA") : fixed(c.seconds, 3)) << '\n';
  }
  return out.str();
}

std::string results_table(const BenchResult& result) {
  std::vector<std::string> rows, cols;
  for (const auto& c : result.cells) {
    if (std::find(rows.begin(), rows.end(), c.function) == rows.end()) rows.push_back(c.function);
    if (std::find(cols.begin(), cols.end(), c.estimator) == cols.end()) cols.push_back(c.estimator);
  }
  std::ostringstream out;
  out << "function";
  for (const auto& e : cols) out << ',' << e;
  out << '\n';
  for (const auto& f : rows) {
    out << f;
    for (const auto& e : cols) {
      const CellResult& c = result.at(f, e);
      out << ',';
      if (std::isnan(c.mean_mse)) {
        out << "NA";
      } else {
        out << fixed(c.mean_mse, 3) << " ± " << (std::isnan(c.half_width) ? "NA" : fixed(c.half_width, 3));
      }
      if (c.failures > 0) out << " (" << c.failures << " failed)";
    }
    out << '\n';
  }
  return out.str();
}

std::string manifest(const BenchSpec& spec, const BenchResult& result, int jobs) {
  std::ostringstream out;
  out << "minimax_iv " << kLibraryVersion << '\n';
  out << "benchmark " << spec.name << '\n';
  out << "seed " << spec.seed << '\n';
  out << "reps " << spec.reps << '\n';
  out << "n_test " << spec.n_test << '\n';
  out << "jobs " << jobs << '\n';
  out << "wall_seconds " << fixed(result.wall_seconds, 3) << '\n';
  out << "failures " << result.total_failures() << '\n';
  out << "config " << to_json(spec).dump() << '\n';
  for (const auto& cell : spec.cells) {
    out << "cell " << cell.display_label() << " data_seeds";
    for (int r = 0; r < spec.reps; ++r) out << ' ' << data_seed(spec, cell, r);
    out << '\n';
  }
  for (const auto& c : result.cells)
    for (const auto& e : c.errors) out << "error " << c.function << ' ' << c.estimator << ' ' << e << '\n';
  return out.str();
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"fig1-desk", "fig2-desk", "fig3-desk"};
  return names;
}

BenchSpec preset(const std::string& name) {
  BenchSpec s;
  s.name = name;
  if (name == "fig1-desk") {
    for (const char* f : {"abs", "2dpoly", "sigmoid", "sin", "frequentsin", "step", "3dpoly", "linear", "band"}) {
      CellSpec c;
      c.function = f;
      s.cells.push_back(c);
    }
    EstimatorSpec nys = default_spec(EstimatorKind::nystrom);
    nys.label = "NystromRKHS";
    EstimatorSpec sls = default_spec(EstimatorKind::twosls);
    sls.label = "2SLS";
    EstimatorSpec rf = default_spec(EstimatorKind::rfiv);
    rf.label = "RFIV";
    rf.rfiv.leaf_rule = rfiv::LeafRule::soft;
    s.estimators = {nys, sls, rf};
    s.reps = 20;
  } else if (name == "fig2-desk") {
    for (const char* f : {"abs", "sigmoid", "sin", "step", "linear", "band"}) {
      CellSpec c;
      c.function = f;
      c.n = 1000;
      c.n_x = 10;
      c.n_z = 10;
      s.cells.push_back(c);
    }
    EstimatorSpec rf = default_spec(EstimatorKind::rfiv);
    rf.label = "RFIV";
    rf.rfiv.leaf_rule = rfiv::LeafRule::soft;
    EstimatorSpec sls = default_spec(EstimatorKind::twosls);
    sls.label = "2SLS";
    s.estimators = {rf, sls};
    s.reps = 10;
  } else if (name == "fig3-desk") {
    CellSpec c;
    c.function = "linear";
    c.n = 400;
    c.n_x = 1000;
    c.n_z = 1000;
    s.cells.push_back(c);
    EstimatorSpec sp = default_spec(EstimatorKind::sparse_ell1);
    sp.label = "SpLin";
    sp.saddle.b_bound = 1.2;
    sp.saddle.iters = 3000;
    s.estimators = {sp};
    s.reps = 10;
  } else {
    std::string all;
    for (const auto& p : preset_names()) all += (all.empty() ? "" : ", ") + p;
    throw InvalidInput("unknown preset '" + name + "'; expected one of: " + all);
  }
  return s;
}

}  // namespace minimax_iv::bench
