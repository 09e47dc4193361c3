#pragma once

#include "minimax_iv/core.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace minimax_iv::sparse {

enum class AdversaryNorm { ell1, ell2 };

std::string to_string(AdversaryNorm norm);
AdversaryNorm adversary_norm_from_string(const std::string& name);

enum class BatchMode {
  with_replacement,  // batch_size rows drawn i.i.d. each iteration
  all_rows           // every iteration uses the full sample (requires batch_size == n)
};

struct SaddleConfig {
  double b_bound = 2.0;  // l1 budget B on theta
  double u_bound = 1.0;  // adversary budget U
  double mu = 0.0;       // l1 penalty on theta
  std::optional<double> eta;  // step size; defaults from the data moments
  int iters = 1000;
  AdversaryNorm adversary_norm = AdversaryNorm::ell1;
  std::optional<Eigen::Index> batch_size;  // stochastic variant when set
  BatchMode batch_mode = BatchMode::with_replacement;
  std::uint64_t seed = 0;
  /// Zero out |theta_j| < threshold after training when set.
  std::optional<double> shrink_threshold;
  /// Track the duality gap of the running averages at these iteration counts.
  std::vector<int> gap_checkpoints;

  void validate() const;
};

/// h(x) = <theta, x>.
class SparseLinearModel final : public Model {
 public:
  SparseLinearModel() = default;
  SparseLinearModel(Vector theta, Vector rho, Vector dual, double gap, int iterations);

  Eigen::Index input_dim() const override { return theta_.size(); }
  double predict(const Eigen::Ref<const Vector>& x) const override;
  Vector predict_rows(const Matrix& x) const override;

  const Vector& theta() const { return theta_; }
  const Vector& rho() const { return rho_; }    // averaged lifted iterate (rho+; rho-)
  const Vector& dual() const { return dual_; }  // averaged w (ell1) or beta (ell2)
  double gap() const { return gap_; }
  int iterations() const { return iterations_; }

  struct Diagnostics {
    double eta = 0.0;
    double gap_bound = 0.0;  // epsilon(T) of the convergence guarantee
    long clipped_exponents = 0;
    std::vector<std::pair<int, double>> gap_trace;
  };
  Diagnostics diagnostics;

 private:
  Vector theta_;
  Vector rho_;
  Vector dual_;
  double gap_ = 0.0;
  int iterations_ = 0;
};

/// theta -> (theta+; theta-) with theta+ = max(theta, 0), theta- = max(-theta, 0).
Vector lift(const Vector& theta);
/// (rho+; rho-) -> rho+ - rho-.
Vector unlift(const Vector& rho);

/// Precomputed sample moments E_n[x z^T] (p x q) and E_n[z y] (q).
struct Moments {
  Matrix cross;  // E_n[x z^T]
  Vector zy;     // E_n[z y]

  static Moments from_data(const Dataset& data);
};

/// Default step sizes: 1/(4 ||E_n[v u^T]||_inf) for the l1 adversary,
/// 1/(4 ||E_n[z v^T]||_{2,inf}) for the l2 adversary.
double default_eta(const Moments& m, AdversaryNorm norm);

/// epsilon(T) such that T iterations yield an epsilon-approximate equilibrium.
double gap_bound(const Moments& m, const SaddleConfig& cfg, Eigen::Index p, Eigen::Index q, int iters);

/// Bilinear game value l(rho, dual); dual is w on the 2q-simplex (ell1) or
/// beta in the U-ball (ell2).
double saddle_loss(const Moments& m, const Vector& rho, const Vector& dual, const SaddleConfig& cfg);

/// max_dual l(rho_bar, .) - min_rho l(., dual_bar), with closed-form best
/// responses. Throws InvalidInput if an argument is infeasible.
double duality_gap(const Moments& m, const Vector& rho_bar, const Vector& dual_bar, const SaddleConfig& cfg);
double duality_gap(const Dataset& data, const Vector& rho_bar, const Vector& dual_bar, const SaddleConfig& cfg);

SparseLinearModel fit_sparse_ell1(const Dataset& data, const SaddleConfig& cfg);
SparseLinearModel fit_sparse_ell2(const Dataset& data, const SaddleConfig& cfg);
/// Mini-batch variant; cfg.batch_size must be set.
SparseLinearModel fit_sparse_stochastic(const Dataset& data, const SaddleConfig& cfg);
/// Dispatches on adversary_norm and batch_size.
SparseLinearModel fit_sparse(const Dataset& data, const SaddleConfig& cfg);

}  // namespace minimax_iv::sparse
