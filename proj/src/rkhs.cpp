#include "minimax_iv/rkhs.hpp"

#include "minimax_iv/linalg.hpp"
#include "minimax_iv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace minimax_iv::rkhs {

KernelModel::KernelModel(Matrix support_x, Vector alpha, KernelConfig cfg_h, HyperParams hyper)
    : support_x_(std::move(support_x)), alpha_(std::move(alpha)), cfg_h_(cfg_h), hyper_(hyper) {
  if (support_x_.rows() != alpha_.size()) throw InvalidInput("KernelModel: alpha length must match support size");
  if (!alpha_.allFinite()) throw InvalidInput("KernelModel: alpha must be finite");
}

double KernelModel::predict(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != support_x_.cols()) throw InvalidInput("KernelModel: dimension mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < support_x_.rows(); ++i)
    acc += alpha_(i) * kernel_eval(cfg_h_, support_x_.row(i).transpose(), x);
  return acc;
}

Vector KernelModel::predict_rows(const Matrix& x) const {
  if (x.cols() != support_x_.cols()) throw InvalidInput("KernelModel: dimension mismatch");
  return cross_kernel(cfg_h_, x, support_x_) * alpha_;
}

NystromModel::NystromModel(NystromFactor factor_h, Vector gamma_weights, HyperParams hyper)
    : factor_h_(std::move(factor_h)), gamma_(std::move(gamma_weights)), hyper_(hyper) {
  if (factor_h_.rank() != gamma_.size()) throw InvalidInput("NystromModel: weight length must match rank");
}

double NystromModel::predict(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != factor_h_.centers.cols()) throw InvalidInput("NystromModel: dimension mismatch");
  return factor_h_.feature_map(x).dot(gamma_);
}

Vector NystromModel::predict_rows(const Matrix& x) const {
  if (x.cols() != factor_h_.centers.cols()) throw InvalidInput("NystromModel: dimension mismatch");
  return factor_h_.features(x) * gamma_;
}

double default_delta(Eigen::Index n) { return 5.0 / std::pow(static_cast<double>(n), 0.4); }

HyperParams default_hyper(Eigen::Index n, double ridge) {
  if (n < 1) throw InvalidInput("default_hyper: n must be positive");
  if (!(ridge >= 0.0)) throw InvalidInput("default_hyper: ridge must be nonnegative");
  HyperParams h;
  h.delta = default_delta(n);
  h.u_bound = 1.0;
  h.lambda = h.delta * h.delta / h.u_bound;
  h.mu = ridge / (4.0 * h.lambda);
  return h;
}

double l2_penalty_scale(const HyperParams& hyper, Eigen::Index n) {
  return hyper.u_bound / (static_cast<double>(n) * hyper.delta * hyper.delta);
}

Matrix adversary_operator(const Matrix& k_f, const HyperParams& hyper) {
  return linalg::regularized_kernel_operator(k_f, l2_penalty_scale(hyper, k_f.rows()));
}

namespace {

void validate_fit_inputs(const Dataset& data, const HyperParams& hyper) {
  hyper.validate();
  if (data.n() < 2) throw InvalidInput("kernel IV needs n >= 2");
  if (!(hyper.lambda > 0.0) || !(hyper.mu > 0.0))
    throw InvalidInput("kernel IV needs lambda > 0 and mu > 0");
}

}  // namespace

KernelFit fit_kernel_iv_detailed(const Dataset& data, const KernelConfig& cfg_h, const KernelConfig& cfg_f,
                                 const HyperParams& hyper) {
  validate_fit_inputs(data, hyper);
  const Matrix k_h = kernel_matrix(cfg_h, data.x());
  const Matrix m = adversary_operator(kernel_matrix(cfg_f, data.z()), hyper);
  const double ridge = 4.0 * hyper.lambda * hyper.mu;

  const Matrix mk = m * k_h;
  Matrix g = k_h * mk + ridge * k_h;
  g = 0.5 * (g + g.transpose());
  const Vector my = m * data.y();
  const Vector rhs = k_h * my;
  // Any alpha with (M K + ridge I) alpha = M y solves the normal equation, and
  // it differs from the pseudo-inverse solution only by a null(K) component,
  // which does not change predictions. This system avoids squaring the
  // condition number of K, so it is preferred whenever the ridge is positive.
  Vector alpha;
  if (ridge > 0.0) {
    Matrix sys = mk;
    sys.diagonal().array() += ridge;
    alpha = sys.partialPivLu().solve(my);
  } else {
    alpha = linalg::pinv(g) * rhs;
  }

  const double rhs_norm = rhs.norm();
  const double resid = (g * alpha - rhs).norm();
  KernelFit out{KernelModel(data.x(), std::move(alpha), cfg_h, hyper), rhs_norm > 0.0 ? resid / rhs_norm : resid};
  return out;
}

KernelModel fit_kernel_iv(const Dataset& data, const KernelConfig& cfg_h, const KernelConfig& cfg_f,
                          const HyperParams& hyper) {
  return fit_kernel_iv_detailed(data, cfg_h, cfg_f, hyper).model;
}

double adversary_loss(const Vector& psi, const Matrix& k_f, const HyperParams& hyper) {
  if (!(hyper.lambda > 0.0)) throw InvalidInput("adversary_loss: lambda must be positive");
  if (psi.size() != k_f.rows() || k_f.rows() != k_f.cols())
    throw InvalidInput("adversary_loss: residual length must match the kernel matrix");
  const Matrix m = adversary_operator(k_f, hyper);
  return std::max(0.0, psi.dot(m * psi)) / (4.0 * hyper.lambda);
}

double adversary_loss(const Model& model, const Dataset& data, const KernelConfig& cfg_f, const HyperParams& hyper) {
  const Vector psi = residuals(model, data) / static_cast<double>(data.n());
  return adversary_loss(psi, kernel_matrix(cfg_f, data.z()), hyper);
}

NystromModel fit_nystrom_iv(const Dataset& data, const KernelConfig& cfg_h, const KernelConfig& cfg_f,
                            const NystromOptions& opts, const HyperParams& hyper) {
  validate_fit_inputs(data, hyper);
  const Eigen::Index n = data.n();
  if (opts.rank < 1 || opts.rank > n) throw InvalidInput("nystrom: need 1 <= r <= n");

  NystromFactor fh = nystrom_factorize(cfg_h, data.x(), opts.rank, opts.center_rule, derive_seed(opts.seed, {0}));
  const NystromFactor ff = nystrom_factorize(cfg_f, data.z(), opts.rank, opts.center_rule, derive_seed(opts.seed, {1}));
  const Matrix v = fh.features(data.x());
  const Matrix d = ff.features(data.z());

  const double c = l2_penalty_scale(hyper, n);
  Matrix q_sys = c * (d.transpose() * d);
  q_sys.diagonal().array() += 1.0;
  const Matrix a = v.transpose() * d;                          // r x r
  const Matrix qat = linalg::solve_spd(q_sys, a.transpose());  // Q A^T
  Matrix lhs = a * qat;
  lhs = 0.5 * (lhs + lhs.transpose());
  lhs.diagonal().array() += 4.0 * hyper.lambda * hyper.mu;
  const Vector rhs = qat.transpose() * (d.transpose() * data.y());  // A Q D^T y
  Vector gamma = linalg::solve_spd(lhs, rhs);
  return NystromModel(std::move(fh), std::move(gamma), hyper);
}

double empirical_critical_radius(const Vector& eigenvalues, double b_bound, Eigen::Index n) {
  if (n < 1) throw InvalidInput("critical radius: n must be positive");
  if (!(b_bound > 0.0)) throw InvalidInput("critical radius: B must be positive");
  if ((eigenvalues.array() < 0.0).any()) throw InvalidInput("critical radius: eigenvalues must be nonnegative");
  if (eigenvalues.size() == 0 || eigenvalues.maxCoeff() <= 0.0) return 0.0;

  const double scale = b_bound * std::sqrt(2.0 / static_cast<double>(n));
  // In t = delta^2 the slack t - scale * sqrt(sum min(lambda, t)) is convex,
  // zero at t = 0 and negative just after, so it has one positive root.
  auto slack = [&](double delta) {
    const double t = delta * delta;
    const double s = eigenvalues.array().min(t).sum();
    return t - scale * std::sqrt(s);
  };
  double hi = std::sqrt(eigenvalues.maxCoeff()) + scale * std::sqrt(static_cast<double>(eigenvalues.size()));
  hi = std::max(hi, 1e-300);
  while (slack(hi) < 0.0) hi *= 2.0;
  double lo = 0.0;
  while (hi - lo > 1e-10 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (slack(mid) >= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

Vector scaled_kernel_eigenvalues(const KernelConfig& cfg, const Matrix& points) {
  const Matrix k = kernel_matrix(cfg, points) / static_cast<double>(points.rows());
  Vector ev = linalg::sym_eig(k).eigenvalues;
  return ev.cwiseMax(0.0);
}

namespace {

std::vector<std::vector<Eigen::Index>> make_folds(Eigen::Index n, int k, std::uint64_t seed) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<Eigen::Index>> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    const Eigen::Index lo = n * f / k;
    const Eigen::Index hi = n * (f + 1) / k;
    folds[static_cast<std::size_t>(f)].assign(perm.begin() + lo, perm.begin() + hi);
  }
  return folds;
}

}  // namespace

double ridge_unit(Eigen::Index n) {
  const double delta = default_delta(n);
  return static_cast<double>(n) * static_cast<double>(n) * std::pow(delta, 4);
}

std::vector<double> default_ridge_multipliers() {
  std::vector<double> grid;
  for (int i = 0; i <= 12; ++i) grid.push_back(std::pow(10.0, -7.0 + 0.5 * i));
  return grid;
}

TuneResult tune_lambda_mu(const Dataset& data, const KernelConfig& cfg_h, const KernelConfig& cfg_f,
                          const std::vector<double>& multipliers, const TuneOptions& opts) {
  if (multipliers.empty()) throw InvalidInput("tune_lambda_mu: empty grid");
  if (opts.k_folds < 2) throw InvalidInput("tune_lambda_mu: need at least 2 folds");
  if (opts.repeats < 1) throw InvalidInput("tune_lambda_mu: need at least 1 repeat");
  if (data.n() < 2 * opts.k_folds) throw InvalidInput("tune_lambda_mu: too few rows for the requested folds");
  for (double g : multipliers)
    if (!(g > 0.0)) throw InvalidInput("tune_lambda_mu: grid values must be positive");

  TuneResult out;
  out.mean_losses.assign(multipliers.size(), 0.0);
  const double splits = static_cast<double>(opts.k_folds * opts.repeats);
  for (int rep = 0; rep < opts.repeats; ++rep) {
    const std::uint64_t rep_seed = derive_seed(opts.seed, {static_cast<std::uint64_t>(rep)});
    const auto folds = make_folds(data.n(), opts.k_folds, rep_seed);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<Eigen::Index> train;
      for (std::size_t g = 0; g < folds.size(); ++g)
        if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
      std::sort(train.begin(), train.end());
      std::vector<Eigen::Index> held = folds[f];
      std::sort(held.begin(), held.end());
      const Dataset tr = data.subset(train);
      const Dataset va = data.subset(held);
      const HyperParams val_hyper = default_hyper(va.n(), 1.0);
      const Matrix m_val = adversary_operator(kernel_matrix(cfg_f, va.z()), val_hyper);
      const double unit = ridge_unit(tr.n());
      NystromOptions nopt = opts.nystrom;
      nopt.rank = std::min(nopt.rank, tr.n());
      nopt.seed = derive_seed(rep_seed, {static_cast<std::uint64_t>(f)});

      for (std::size_t gi = 0; gi < multipliers.size(); ++gi) {
        const HyperParams hyper = default_hyper(tr.n(), 4.0 * unit * multipliers[gi]);
        const Vector pred = opts.approximation == Approximation::exact
                                ? fit_kernel_iv(tr, cfg_h, cfg_f, hyper).predict_rows(va.x())
                                : fit_nystrom_iv(tr, cfg_h, cfg_f, nopt, hyper).predict_rows(va.x());
        const Vector psi = (va.y() - pred) / static_cast<double>(va.n());
        const double loss = std::max(0.0, psi.dot(m_val * psi)) / (4.0 * val_hyper.lambda);
        out.mean_losses[gi] += loss / splits;
      }
    }
  }
  const auto best = std::min_element(out.mean_losses.begin(), out.mean_losses.end());
  out.multiplier = multipliers[static_cast<std::size_t>(best - out.mean_losses.begin())];
  out.lambda_mu = out.multiplier * ridge_unit(data.n());
  return out;
}

}  // namespace minimax_iv::rkhs
