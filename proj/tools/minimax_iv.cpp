// Command-line front end: generate, fit, predict, benchmark.
//
// Exit codes: 0 success, 2 configuration or input error, 3 estimator
// failure, 4 benchmark finished with failed reps.

#include "minimax_iv/bench.hpp"
#include "minimax_iv/config_io.hpp"
#include "minimax_iv/core.hpp"
#include "minimax_iv/dgp.hpp"
#include "minimax_iv/model_io.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace minimax_iv;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kEstimatorError = 3;
constexpr int kBenchmarkFailures = 4;

// Estimator failures are reported separately from bad input.
struct EstimatorFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MINIMAX_IV_SEED")) {
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(env, &pos);
      if (pos == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw InvalidInput(std::string("MINIMAX_IV_SEED is not an unsigned integer: '") + env + "'");
  }
  return 0;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw InvalidInput("write to '" + path + "' failed");
}

// ---- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string fname = "abs";
  Eigen::Index n = 300, n_x = 1, n_z = 1;
  double gamma = 0.6;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  dgp::DgpConfig cfg;
  cfg.fname = a.fname;
  cfg.n = a.n;
  cfg.n_x = a.n_x;
  cfg.n_z = a.n_z;
  cfg.strength = a.gamma;
  cfg.seed = resolve_seed(a.seed);
  const dgp::Generated g = dgp::generate(cfg);
  save_csv(g.data, a.out);
  return kOk;
}

// ---- fit -------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string estimator = "nystrom";
  std::string config;
  std::string out;
  std::string report;
  bool dump_config = false;
  std::optional<std::uint64_t> seed;
  // overrides
  std::optional<double> lambda_mu;
  std::optional<Eigen::Index> rank;
  std::optional<double> kernel_gamma;
  std::optional<int> iters;
  std::optional<double> b_bound;
  std::optional<double> u_bound;
  std::optional<double> mu;
  std::optional<std::string> shape_kind;
  std::optional<double> lipschitz;
  std::optional<int> poly_degree;
  std::optional<std::string> leaf_rule;
};

bench::EstimatorSpec resolve_estimator(const FitArgs& a) {
  bench::EstimatorSpec s;
  if (!a.config.empty()) {
    Json j = read_json_file(a.config);
    if (j.is_object() && !j.contains("kind")) j["kind"] = a.estimator;
    s = estimator_spec_from_json(j);
  } else {
    s = bench::default_spec(bench::estimator_kind_from_string(a.estimator));
  }
  using K = bench::EstimatorKind;
  const bool kern = s.kind == K::kernel || s.kind == K::nystrom;
  const bool sparse_kind = s.kind == K::sparse_ell1 || s.kind == K::sparse_ell2;
  auto reject = [&](bool applies, const char* flag) {
    if (!applies) throw InvalidInput(std::string(flag) + " does not apply to estimator " + bench::to_string(s.kind));
  };
  if (a.lambda_mu) {
    reject(kern, "--lambda-mu");
    s.lambda_mu = *a.lambda_mu;
    s.tune = false;
  }
  if (a.rank) {
    reject(s.kind == K::nystrom, "--rank");
    s.rank = *a.rank;
  }
  if (a.kernel_gamma) {
    reject(kern, "--kernel-gamma");
    s.kernel_h.gamma = s.kernel_f.gamma = *a.kernel_gamma;
  }
  if (a.iters) {
    reject(sparse_kind || s.kind == K::shape || s.kind == K::rfiv, "--iters");
    s.saddle.iters = s.shape.iters = s.rfiv.iters = *a.iters;
  }
  if (a.b_bound) {
    reject(sparse_kind, "--b-bound");
    s.saddle.b_bound = *a.b_bound;
  }
  if (a.u_bound) {
    reject(sparse_kind, "--u-bound");
    s.saddle.u_bound = *a.u_bound;
  }
  if (a.mu) {
    reject(sparse_kind, "--mu");
    s.saddle.mu = *a.mu;
  }
  if (a.shape_kind) {
    reject(s.kind == K::shape, "--shape");
    s.shape.kind = shape::shape_kind_from_string(*a.shape_kind);
  }
  if (a.lipschitz) {
    reject(s.kind == K::shape, "--lipschitz");
    s.shape.lipschitz = *a.lipschitz;
  }
  if (a.poly_degree) {
    reject(s.kind == K::twosls, "--degree");
    s.poly_degree = *a.poly_degree;
  }
  if (a.leaf_rule) {
    reject(s.kind == K::rfiv, "--leaf-rule");
    s.rfiv.leaf_rule = rfiv::leaf_rule_from_string(*a.leaf_rule);
  }
  s.validate();
  return s;
}

int cmd_fit(const FitArgs& a) {
  const bench::EstimatorSpec spec = resolve_estimator(a);
  const std::uint64_t seed = resolve_seed(a.seed);
  if (a.dump_config) {
    Json j = to_json(spec);
    j["seed"] = seed;
    std::cout << j.dump(2) << '\n';
    return kOk;
  }
  if (a.data.empty()) throw InvalidInput("fit: --data is required");
  if (a.out.empty()) throw InvalidInput("fit: --out is required");
  const Dataset data = load_csv(a.data);

  bench::FitResult fit;
  try {
    fit = bench::fit_estimator(data, spec, seed);
  } catch (const std::exception& e) {
    // The configuration and the data were already validated on their own, so
    // anything raised here means the estimator could not handle this input.
    Json dump{{"estimator", to_json(spec)}, {"seed", seed}, {"data", a.data},
              {"n", data.n()},              {"p", data.p()}, {"q", data.q()}};
    std::cerr << dump.dump(2) << '\n';
    throw EstimatorFailure(e.what());
  }
  save_model(*fit.model, a.out);

  Json report{{"estimator", to_json(spec)}, {"seed", seed}, {"data", a.data}, {"n", data.n()},
              {"p", data.p()},              {"q", data.q()}, {"model", a.out}};
  Json diag = Json::object();
  for (const auto& [k, v] : fit.diagnostics) diag[k] = v;
  const Vector psi = residuals(*fit.model, data);
  diag["train_mean_squared_residual"] = psi.squaredNorm() / static_cast<double>(data.n());
  report["diagnostics"] = diag;
  if (a.report.empty() || a.report == "-")
    std::cout << report.dump(2) << '\n';
  else
    write_text(a.report, report.dump(2) + "\n");
  return kOk;
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string data;
  std::string out;
};

int cmd_predict(const PredictArgs& a) {
  const auto model = load_model(a.model);
  const Matrix x = load_treatments_csv(a.data);
  if (x.cols() != model->input_dim())
    throw InvalidInput("predict: data has " + std::to_string(x.cols()) + " treatment columns, model expects " +
                       std::to_string(model->input_dim()));
  const Vector pred = model->predict_rows(x);
  std::string text = "prediction\n";
  for (Eigen::Index i = 0; i < pred.size(); ++i) text += format_double(pred(i)) + "\n";
  if (a.out.empty() || a.out == "-")
    std::cout << text;
  else
    write_text(a.out, text);
  return kOk;
}

// ---- benchmark -------------------------------------------------------------

struct BenchArgs {
  std::string preset;
  std::string spec;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::optional<Eigen::Index> n_test;
  int jobs = 0;
  std::string out;
  std::string table;
  std::string manifest;
  bool omit_timing = false;
  bool dump_config = false;
};

int cmd_benchmark(const BenchArgs& a) {
  if (a.preset.empty() == a.spec.empty()) throw InvalidInput("benchmark: give exactly one of --preset or --spec");
  bench::BenchSpec spec = a.preset.empty() ? bench_spec_from_json(read_json_file(a.spec)) : bench::preset(a.preset);
  if (a.reps) spec.reps = *a.reps;
  if (a.n_test) spec.n_test = *a.n_test;
  if (a.seed || std::getenv("MINIMAX_IV_SEED")) spec.seed = resolve_seed(a.seed);
  spec.validate();
  if (a.dump_config) {
    std::cout << to_json(spec).dump(2) << '\n';
    return kOk;
  }
  if (a.out.empty()) throw InvalidInput("benchmark: --out is required");
  // Fail on an unwritable destination before spending time on the run.
  {
    std::ofstream probe(a.out);
    if (!probe) throw InvalidInput("cannot open '" + a.out + "' for writing");
  }
  const bench::BenchResult result = bench::run_benchmark(spec, a.jobs);
  write_text(a.out, bench::results_csv(result, a.omit_timing));
  write_text(a.table.empty() ? a.out + ".table.csv" : a.table, bench::results_table(result));
  write_text(a.manifest.empty() ? a.out + ".manifest.txt" : a.manifest, bench::manifest(spec, result, a.jobs));
  std::cout << bench::results_table(result);
  if (result.total_failures() > 0) {
    for (const auto& c : result.cells)
      for (const auto& e : c.errors) std::cerr << "failure: " << c.function << " / " << c.estimator << " " << e << '\n';
    return kBenchmarkFailures;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimax estimators for conditional moment models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(bench::kLibraryVersion));

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Draw a synthetic IV dataset and write it as CSV");
  gen->add_option("--fname", ga.fname, "True function name")->capture_default_str();
  gen->add_option("--n", ga.n, "Sample count")->capture_default_str();
  gen->add_option("--n-x", ga.n_x, "Treatment dimension")->capture_default_str();
  gen->add_option("--n-z", ga.n_z, "Instrument dimension")->capture_default_str();
  gen->add_option("--gamma", ga.gamma, "Instrument strength in [0, 1]")->capture_default_str();
  gen->add_option("--seed", ga.seed, "Seed (falls back to MINIMAX_IV_SEED, then 0)");
  gen->add_option("--out", ga.out, "Output CSV")->required();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit an estimator on a CSV dataset");
  fit->add_option("--data", fa.data, "Dataset CSV");
  fit->add_option("--estimator", fa.estimator,
                  "kernel, nystrom, sparse_ell1, sparse_ell2, shape, rfiv or twosls")
      ->capture_default_str();
  fit->add_option("--config", fa.config, "Estimator configuration JSON (unknown keys are rejected)");
  fit->add_option("--out", fa.out, "Model file to write");
  fit->add_option("--report", fa.report, "Fit report JSON (default: stdout)");
  fit->add_option("--seed", fa.seed, "Seed (falls back to MINIMAX_IV_SEED, then 0)");
  fit->add_flag("--dump-config", fa.dump_config, "Print the resolved configuration and exit");
  fit->add_option("--lambda-mu", fa.lambda_mu, "kernel/nystrom: fixed lambda*mu (disables tuning)");
  fit->add_option("--rank", fa.rank, "nystrom: number of centers");
  fit->add_option("--kernel-gamma", fa.kernel_gamma, "kernel/nystrom: rbf gamma for both kernels");
  fit->add_option("--iters", fa.iters, "sparse/shape/rfiv: iteration count T");
  fit->add_option("--b-bound", fa.b_bound, "sparse: l1 budget B");
  fit->add_option("--u-bound", fa.u_bound, "sparse: adversary budget U");
  fit->add_option("--mu", fa.mu, "sparse: l1 penalty");
  fit->add_option("--shape", fa.shape_kind, "shape: monotone_inc, monotone_dec, tv, lipschitz_tv, convex_lipschitz");
  fit->add_option("--lipschitz", fa.lipschitz, "shape: Lipschitz bound L");
  fit->add_option("--degree", fa.poly_degree, "twosls: polynomial degree");
  fit->add_option("--leaf-rule", fa.leaf_rule, "rfiv: hard or soft learner leaves");

  PredictArgs pa;
  auto* pred = app.add_subcommand("predict", "Predict with a saved model");
  pred->add_option("--model", pa.model, "Model file")->required();
  pred->add_option("--data", pa.data, "CSV with x0..x{p-1} columns")->required();
  pred->add_option("--out", pa.out, "Output CSV (default: stdout)");

  BenchArgs ba;
  auto* bm = app.add_subcommand("benchmark", "Run a Monte-Carlo benchmark grid");
  bm->add_option("--preset", ba.preset, "fig1-desk, fig2-desk or fig3-desk");
  bm->add_option("--spec", ba.spec, "Benchmark specification JSON");
  bm->add_option("--reps", ba.reps, "Repetitions per cell (>= 2)");
  bm->add_option("--seed", ba.seed, "Master seed (falls back to MINIMAX_IV_SEED, then the spec's)");
  bm->add_option("--n-test", ba.n_test, "Fresh test draws per rep");
  bm->add_option("--jobs", ba.jobs, "Worker threads (0 = all cores)")->capture_default_str();
  bm->add_option("--out", ba.out, "Results CSV");
  bm->add_option("--table", ba.table, "Wide table CSV (default: <out>.table.csv)");
  bm->add_option("--manifest", ba.manifest, "Run manifest (default: <out>.manifest.txt)");
  bm->add_flag("--omit-timing", ba.omit_timing, "Write NA in the seconds column");
  bm->add_flag("--dump-config", ba.dump_config, "Print the resolved configuration and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) return cmd_generate(ga);
    if (*fit) return cmd_fit(fa);
    if (*pred) return cmd_predict(pa);
    if (*bm) return cmd_benchmark(ba);
  } catch (const EstimatorFailure& e) {
    std::cerr << "estimator failure: " << e.what() << '\n';
    return kEstimatorError;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEstimatorError;
  }
  return kConfigError;
}
