#pragma once

#include "minimax_iv/core.hpp"
#include "minimax_iv/kernels.hpp"

#include <cstdint>
#include <vector>

namespace minimax_iv::rkhs {

/// h(x) = sum_i alpha_i K_H(support_i, x).
class KernelModel final : public Model {
 public:
  KernelModel(Matrix support_x, Vector alpha, KernelConfig cfg_h, HyperParams hyper);

  Eigen::Index input_dim() const override { return support_x_.cols(); }
  double predict(const Eigen::Ref<const Vector>& x) const override;
  Vector predict_rows(const Matrix& x) const override;

  const Matrix& support_x() const { return support_x_; }
  const Vector& alpha() const { return alpha_; }
  const KernelConfig& kernel() const { return cfg_h_; }
  const HyperParams& hyper() const { return hyper_; }

 private:
  Matrix support_x_;
  Vector alpha_;
  KernelConfig cfg_h_;
  HyperParams hyper_;
};

/// h(x) = phi(x)^T gamma with phi the Nystrom feature map over treatments.
class NystromModel final : public Model {
 public:
  NystromModel(NystromFactor factor_h, Vector gamma_weights, HyperParams hyper);

  Eigen::Index input_dim() const override { return factor_h_.centers.cols(); }
  double predict(const Eigen::Ref<const Vector>& x) const override;
  Vector predict_rows(const Matrix& x) const override;

  const NystromFactor& factor() const { return factor_h_; }
  const Vector& gamma_weights() const { return gamma_; }
  const HyperParams& hyper() const { return hyper_; }

 private:
  NystromFactor factor_h_;
  Vector gamma_;
  HyperParams hyper_;
};

/// delta = 5 / n^0.4.
double default_delta(Eigen::Index n);

/// delta = 5/n^0.4, U = 1, lambda = delta^2 / U, and mu such that 4*lambda*mu = ridge.
HyperParams default_hyper(Eigen::Index n, double ridge);

/// c = U / (n delta^2), the weight of the empirical l2 penalty on test functions.
double l2_penalty_scale(const HyperParams& hyper, Eigen::Index n);

/// M = K_F (c K_F + I)^{-1} with c = U/(n delta^2).
Matrix adversary_operator(const Matrix& k_f, const HyperParams& hyper);

/// Closed-form minimizer alpha = (K_H M K_H + 4 lambda mu K_H)^+ K_H M y.
/// The diagnostic fields report the relative normal-equation residual.
struct KernelFit {
  KernelModel model;
  double normal_equation_residual = 0.0;
};

KernelFit fit_kernel_iv_detailed(const Dataset& data, const KernelConfig& cfg_h, const KernelConfig& cfg_f,
                                 const HyperParams& hyper);
KernelModel fit_kernel_iv(const Dataset& data, const KernelConfig& cfg_h, const KernelConfig& cfg_f,
                          const HyperParams& hyper);

/// Maximized adversary value (1/(4 lambda)) psi^T K_F (c K_F + I)^{-1} psi.
/// `psi` is used as given; see the model overload for the 1/n scaling.
double adversary_loss(const Vector& psi, const Matrix& k_f, const HyperParams& hyper);

/// Same, with psi_i = (y_i - h(x_i)) / n computed from `model` on `data`.
double adversary_loss(const Model& model, const Dataset& data, const KernelConfig& cfg_f, const HyperParams& hyper);

struct NystromOptions {
  Eigen::Index rank = 100;
  CenterRule center_rule = CenterRule::kmeans;
  std::uint64_t seed = 0;
};

/// gamma = (A Q A^T + 4 lambda mu I)^{-1} A Q D^T y, Q = (c D^T D + I)^{-1},
/// A = V^T D, with V (over x) and D (over z) Nystrom factors of rank r.
NystromModel fit_nystrom_iv(const Dataset& data, const KernelConfig& cfg_h, const KernelConfig& cfg_f,
                            const NystromOptions& opts, const HyperParams& hyper);

/// Smallest delta > 0 with B sqrt(2/n) sqrt(sum_j min(lambda_j, delta^2)) <= delta^2,
/// for eigenvalues of the 1/n-scaled kernel matrix. Bisection to 1e-10.
double empirical_critical_radius(const Vector& eigenvalues, double b_bound, Eigen::Index n);

/// Convenience: eigenvalues of K/n for the given points.
Vector scaled_kernel_eigenvalues(const KernelConfig& cfg, const Matrix& points);

enum class Approximation { exact, nystrom };

struct TuneOptions {
  Approximation approximation = Approximation::exact;
  NystromOptions nystrom;
  int k_folds = 5;
  int repeats = 3;  // independent reshuffles of the folds, averaged
  std::uint64_t seed = 0;
};

struct TuneResult {
  double multiplier = 0.0;  // selected grid value
  double lambda_mu = 0.0;   // multiplier * ridge_unit(n) for the full sample
  std::vector<double> mean_losses;  // per grid point, same order as the grid
};

/// n^2 delta^4 with the default delta: the sample-size scaling of lambda*mu in
/// the unnormalized normal equations.
double ridge_unit(Eigen::Index n);

/// Picks the multiplier s minimizing the mean held-out adversary loss, where
/// each training fold is fitted with lambda*mu = s * ridge_unit(n_train).
/// Folds are contiguous blocks of a seeded shuffle, repeated `repeats` times;
/// each held-out loss uses the default delta and lambda for its own size.
TuneResult tune_lambda_mu(const Dataset& data, const KernelConfig& cfg_h, const KernelConfig& cfg_f,
                          const std::vector<double>& multipliers, const TuneOptions& opts);

/// Multipliers 10^-7, 10^-6.5, ..., 10^-1.
std::vector<double> default_ridge_multipliers();

}  // namespace minimax_iv::rkhs
