#pragma once

#include "minimax_iv/core.hpp"
#include "minimax_iv/dgp.hpp"
#include "minimax_iv/kernels.hpp"
#include "minimax_iv/rfiv.hpp"
#include "minimax_iv/shape.hpp"
#include "minimax_iv/sparse_linear.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace minimax_iv::bench {

enum class EstimatorKind { kernel, nystrom, sparse_ell1, sparse_ell2, shape, rfiv, twosls };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& name);
const std::vector<std::string>& estimator_kind_names();

/// Everything needed to fit one estimator. Only the block matching `kind` is
/// consulted; the others keep their defaults.
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::nystrom;
  std::string label;  // column name in tables; empty means the kind name

  // kernel / nystrom
  KernelConfig kernel_h = KernelConfig::rbf(0.1);
  KernelConfig kernel_f = KernelConfig::rbf(0.1);
  Eigen::Index rank = 100;
  CenterRule center_rule = CenterRule::kmeans;
  /// Cross-validate lambda*mu over the default multiplier grid when true;
  /// otherwise `lambda_mu` must be set.
  bool tune = true;
  std::optional<double> lambda_mu;
  int cv_folds = 5;
  int cv_repeats = 3;

  sparse::SaddleConfig saddle;
  shape::ShapeConfig shape;
  rfiv::RfivConfig rfiv;
  int poly_degree = 3;

  std::string display_label() const { return label.empty() ? to_string(kind) : label; }
  void validate() const;
};

/// Defaults for a kind (the sparse kinds set the adversary norm).
EstimatorSpec default_spec(EstimatorKind kind);

/// A fitted model plus the training diagnostic relevant to its estimator:
/// normal-equation residual (kernel), duality gap (sparse), approximate
/// best-response gap (shape), minimax gap (rfiv).
struct FitResult {
  std::unique_ptr<Model> model;
  std::vector<std::pair<std::string, double>> diagnostics;
};

/// Fits `spec` on `data`. Every stochastic component is seeded from `seed`.
FitResult fit_estimator(const Dataset& data, const EstimatorSpec& spec, std::uint64_t seed);

/// One row of the benchmark grid: a DGP setting.
struct CellSpec {
  std::string function = "abs";
  Eigen::Index n = 300;
  Eigen::Index n_x = 1;
  Eigen::Index n_z = 1;
  double strength = 0.6;
  std::string label;  // row name; empty means the function name

  std::string display_label() const { return label.empty() ? function : label; }
  dgp::DgpConfig dgp(std::uint64_t seed) const;
};

struct BenchSpec {
  std::string name = "custom";
  std::vector<CellSpec> cells;
  std::vector<EstimatorSpec> estimators;
  int reps = 20;
  std::uint64_t seed = 0;
  Eigen::Index n_test = 10000;

  void validate() const;
};

/// Seed of rep `rep` of `cell`; independent of the cell's position in the grid.
std::uint64_t data_seed(const BenchSpec& spec, const CellSpec& cell, int rep);
/// Seed handed to fit_estimator for `estimator` on that dataset.
std::uint64_t estimator_seed(std::uint64_t data_seed, const EstimatorSpec& estimator);

struct CellResult {
  std::string function;   // row label
  std::string estimator;  // column label
  double mean_mse = 0.0;  // over successful reps; NaN when none succeeded
  double half_width = 0.0;  // 2 sd / sqrt(successes); NaN below two successes
  int failures = 0;
  int reps = 0;
  double seconds = 0.0;   // summed fit + evaluation time of the reps
  std::vector<double> mse;  // per rep, NaN where the rep failed
  std::vector<std::string> errors;  // one message per failed rep
};

struct BenchResult {
  std::string name;
  std::vector<CellResult> cells;  // row-major: cell index, then estimator index
  double wall_seconds = 0.0;

  int total_failures() const;
  const CellResult& at(const std::string& function, const std::string& estimator) const;
};

/// Runs every (cell, rep, estimator) task on `jobs` threads (0 = hardware
/// concurrency). Results do not depend on `jobs`.
BenchResult run_benchmark(const BenchSpec& spec, int jobs = 0);

/// Long format: "function,estimator,mean_mse,half_width,failures,reps,seconds".
/// With omit_timing the seconds column holds NA, making the file a pure
/// function of the spec.
std::string results_csv(const BenchResult& result, bool omit_timing);
/// Wide format: rows are functions, columns estimators, cells "mean ± half_width".
std::string results_table(const BenchResult& result);
/// Plain-text run record: library version, resolved spec and seeds.
std::string manifest(const BenchSpec& spec, const BenchResult& result, int jobs);

/// Shipped presets: fig1-desk, fig2-desk, fig3-desk.
const std::vector<std::string>& preset_names();
BenchSpec preset(const std::string& name);

inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace minimax_iv::bench
