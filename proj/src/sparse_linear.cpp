#include "minimax_iv/sparse_linear.hpp"

#include "minimax_iv/rng.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace minimax_iv::sparse {

namespace {

constexpr double kExponentClip = 50.0;
constexpr double kFeasTol = 1e-9;

double log_sum_exp(const Vector& l) {
  const double m = l.maxCoeff();
  return m + std::log((l.array() - m).exp().sum());
}

// rho = rho_tilde * min(1, B / |rho_tilde|_1) with rho_tilde = exp(log_rho).
Vector project_rho(const Vector& log_rho, double b) {
  const double lse = log_sum_exp(log_rho);
  const double shift = std::min(0.0, std::log(b) - lse);
  return (log_rho.array() + shift).exp().matrix();
}

double clip_exponent(double v, long& clipped) {
  if (v > kExponentClip) {
    ++clipped;
    return kExponentClip;
  }
  if (v < -kExponentClip) {
    ++clipped;
    return -kExponentClip;
  }
  return v;
}

// Gradients of the bilinear loss. For the l1 adversary the dual lives on the
// 2q-simplex over u = (z; -z); for l2 it is beta in R^q.
class GradientOracle {
 public:
  virtual ~GradientOracle() = default;
  virtual void next_iteration() {}
  // d l / d rho, length 2p.
  virtual Vector rho_grad(const Vector& dual) = 0;
  // d l / d dual: length 2q (ell1) or q (ell2).
  virtual Vector dual_grad(const Vector& rho) = 0;
};

Vector signed_dual(const Vector& dual, AdversaryNorm norm) {
  if (norm == AdversaryNorm::ell2) return dual;
  const Eigen::Index q = dual.size() / 2;
  return dual.head(q) - dual.tail(q);
}

Vector lifted_rho_grad(const Vector& cross_s, double penalty) {
  const Eigen::Index p = cross_s.size();
  Vector g(2 * p);
  g.head(p) = -cross_s.array() + penalty;
  g.tail(p) = cross_s.array() + penalty;
  return g;
}

Vector dual_grad_from_residual(const Vector& r, AdversaryNorm norm) {
  if (norm == AdversaryNorm::ell2) return r;
  Vector g(2 * r.size());
  g.head(r.size()) = r;
  g.tail(r.size()) = -r;
  return g;
}

class FullSampleOracle final : public GradientOracle {
 public:
  FullSampleOracle(const Moments& m, const SaddleConfig& cfg) : m_(m), cfg_(cfg) {}

  Vector rho_grad(const Vector& dual) override {
    return lifted_rho_grad(m_.cross * signed_dual(dual, cfg_.adversary_norm), cfg_.mu / cfg_.u_bound);
  }
  Vector dual_grad(const Vector& rho) override {
    return dual_grad_from_residual(m_.zy - m_.cross.transpose() * unlift(rho), cfg_.adversary_norm);
  }

 private:
  const Moments& m_;
  const SaddleConfig& cfg_;
};

class MiniBatchOracle final : public GradientOracle {
 public:
  MiniBatchOracle(const Dataset& data, const SaddleConfig& cfg)
      : data_(data), cfg_(cfg), rng_(cfg.seed), pick_(0, data.n() - 1) {
    batch_ = *cfg.batch_size;
    xb_.resize(batch_, data.p());
    zb_.resize(batch_, data.q());
    yb_.resize(batch_);
  }

  void next_iteration() override {
    for (Eigen::Index j = 0; j < batch_; ++j) {
      const Eigen::Index r = pick_(rng_);
      xb_.row(j) = data_.x().row(r);
      zb_.row(j) = data_.z().row(r);
      yb_(j) = data_.y()(r);
    }
  }

  Vector rho_grad(const Vector& dual) override {
    const Vector zs = zb_ * signed_dual(dual, cfg_.adversary_norm);
    const Vector cross_s = xb_.transpose() * zs / static_cast<double>(batch_);
    return lifted_rho_grad(cross_s, cfg_.mu / cfg_.u_bound);
  }
  Vector dual_grad(const Vector& rho) override {
    const Vector resid = yb_ - xb_ * unlift(rho);
    return dual_grad_from_residual(zb_.transpose() * resid / static_cast<double>(batch_), cfg_.adversary_norm);
  }

 private:
  const Dataset& data_;
  const SaddleConfig& cfg_;
  Rng rng_;
  std::uniform_int_distribution<Eigen::Index> pick_;
  Eigen::Index batch_ = 0;
  Matrix xb_, zb_;
  Vector yb_;
};

// Optimistic FTRL: entropic regularizer for rho over the lifted l1 ball, and
// entropic (simplex) or Euclidean (l2 ball) regularizer for the adversary.
SparseLinearModel run_oftrl(const Moments& moments, Eigen::Index p, Eigen::Index q, const SaddleConfig& cfg,
                            GradientOracle& oracle) {
  const bool ell1 = cfg.adversary_norm == AdversaryNorm::ell1;
  const double eta = cfg.eta ? *cfg.eta : default_eta(moments, cfg.adversary_norm);
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidInput("sparse: step size must be positive and finite");
  const double b = cfg.b_bound;
  const double u = cfg.u_bound;

  Vector log_rho = Vector::Constant(2 * p, -1.0);  // rho_tilde_0 = 1/e
  Vector rho = project_rho(log_rho, b);
  Vector log_w;
  Vector beta_tilde;
  Vector dual;
  if (ell1) {
    log_w = Vector::Constant(2 * q, -std::log(2.0 * static_cast<double>(q)));
    dual = log_w.array().exp().matrix();
  } else {
    beta_tilde = Vector::Zero(q);
    dual = beta_tilde;
  }

  long clipped = 0;
  Vector rho_sum = Vector::Zero(2 * p);
  Vector dual_sum = Vector::Zero(dual.size());
  Vector g_rho_prev, g_dual_prev;

  SparseLinearModel::Diagnostics diag;
  diag.eta = eta;
  std::vector<int> checkpoints = cfg.gap_checkpoints;
  std::sort(checkpoints.begin(), checkpoints.end());
  auto next_cp = checkpoints.begin();

  for (int t = 0; t < cfg.iters; ++t) {
    oracle.next_iteration();
    const Vector g_rho = oracle.rho_grad(dual);
    const Vector g_dual = oracle.dual_grad(rho);
    if (t == 0) {
      g_rho_prev = g_rho;
      g_dual_prev = g_dual;
    }

    for (Eigen::Index i = 0; i < log_rho.size(); ++i)
      log_rho(i) += clip_exponent(-(eta / b) * (2.0 * g_rho(i) - g_rho_prev(i)), clipped);
    rho = project_rho(log_rho, b);

    if (ell1) {
      for (Eigen::Index i = 0; i < log_w.size(); ++i)
        log_w(i) += clip_exponent(eta * (2.0 * g_dual(i) - g_dual_prev(i)), clipped);
      log_w.array() -= log_sum_exp(log_w);
      dual = log_w.array().exp().matrix();
    } else {
      beta_tilde += eta * (2.0 * g_dual - g_dual_prev);
      const double norm = beta_tilde.norm();
      dual = norm > u ? Vector(beta_tilde * (u / norm)) : beta_tilde;
    }
    assert(rho.minCoeff() >= 0.0 && rho.sum() <= b * (1.0 + kFeasTol));

    g_rho_prev = g_rho;
    g_dual_prev = g_dual;
    rho_sum += rho;
    dual_sum += dual;

    while (next_cp != checkpoints.end() && *next_cp == t + 1) {
      const double inv = 1.0 / static_cast<double>(t + 1);
      diag.gap_trace.emplace_back(t + 1, duality_gap(moments, rho_sum * inv, dual_sum * inv, cfg));
      ++next_cp;
    }
  }

  Vector rho_bar, dual_bar;
  if (cfg.iters > 0) {
    rho_bar = rho_sum / static_cast<double>(cfg.iters);
    dual_bar = dual_sum / static_cast<double>(cfg.iters);
  } else {
    rho_bar = rho;
    dual_bar = dual;
  }
  Vector theta = unlift(rho_bar);
  if (cfg.shrink_threshold) theta = (theta.array().abs() < *cfg.shrink_threshold).select(0.0, theta);
  const double gap = duality_gap(moments, rho_bar, dual_bar, cfg);
  diag.gap_bound = gap_bound(moments, cfg, p, q, std::max(cfg.iters, 1));
  diag.clipped_exponents = clipped;
  SparseLinearModel model(std::move(theta), std::move(rho_bar), std::move(dual_bar), gap, cfg.iters);
  model.diagnostics = std::move(diag);
  return model;
}

void check_data(const Dataset& data) {
  if (data.p() < 1 || data.q() < 1) throw InvalidInput("sparse: need p >= 1 and q >= 1");
}

}  // namespace

std::string to_string(AdversaryNorm norm) { return norm == AdversaryNorm::ell1 ? "ell1" : "ell2"; }

AdversaryNorm adversary_norm_from_string(const std::string& name) {
  if (name == "ell1" || name == "l1") return AdversaryNorm::ell1;
  if (name == "ell2" || name == "l2") return AdversaryNorm::ell2;
  throw InvalidInput("unknown adversary norm '" + name + "' (expected ell1, ell2)");
}

void SaddleConfig::validate() const {
  if (!(b_bound > 0.0) || !(u_bound > 0.0)) throw InvalidInput("sparse: B and U must be positive");
  if (!(mu >= 0.0)) throw InvalidInput("sparse: mu must be nonnegative");
  if (eta && !(*eta > 0.0)) throw InvalidInput("sparse: eta must be positive");
  if (iters < 1) throw InvalidInput("sparse: need at least one iteration");
}

SparseLinearModel::SparseLinearModel(Vector theta, Vector rho, Vector dual, double gap, int iterations)
    : theta_(std::move(theta)), rho_(std::move(rho)), dual_(std::move(dual)), gap_(gap), iterations_(iterations) {}

double SparseLinearModel::predict(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != theta_.size()) throw InvalidInput("SparseLinearModel: dimension mismatch");
  return theta_.dot(x);
}

Vector SparseLinearModel::predict_rows(const Matrix& x) const {
  if (x.cols() != theta_.size()) throw InvalidInput("SparseLinearModel: dimension mismatch");
  return x * theta_;
}

Vector lift(const Vector& theta) {
  Vector rho(2 * theta.size());
  rho.head(theta.size()) = theta.cwiseMax(0.0);
  rho.tail(theta.size()) = (-theta).cwiseMax(0.0);
  return rho;
}

Vector unlift(const Vector& rho) {
  if (rho.size() % 2 != 0) throw InvalidInput("unlift: lifted vector must have even length");
  const Eigen::Index p = rho.size() / 2;
  return rho.head(p) - rho.tail(p);
}

Moments Moments::from_data(const Dataset& data) {
  const double n = static_cast<double>(data.n());
  return {data.x().transpose() * data.z() / n, data.z().transpose() * data.y() / n};
}

double default_eta(const Moments& m, AdversaryNorm norm) {
  if (norm == AdversaryNorm::ell1) {
    const double sup = m.cross.cwiseAbs().maxCoeff();
    return sup > 0.0 ? 1.0 / (4.0 * sup) : 1.0;
  }
  // ||E_n[z v^T]||_{2,inf} = sqrt(sum_i max_j A_ij^2), rows indexed by z.
  const double norm2inf = std::sqrt(m.cross.cwiseAbs2().colwise().maxCoeff().sum());
  return norm2inf > 0.0 ? 1.0 / (4.0 * norm2inf) : 1.0;
}

double gap_bound(const Moments& m, const SaddleConfig& cfg, Eigen::Index p, Eigen::Index q, int iters) {
  const double b = cfg.b_bound;
  const double log_b = 4.0 * b * b * std::log(std::max(b, 1.0));
  const double log_2p = std::log(2.0 * static_cast<double>(p));
  if (cfg.adversary_norm == AdversaryNorm::ell1) {
    const double sup = m.cross.cwiseAbs().maxCoeff();
    const double log_2q = std::log(2.0 * static_cast<double>(q));
    return 16.0 * sup * (log_b + b * log_2p + log_2q) / static_cast<double>(iters);
  }
  const double norm2inf = std::sqrt(m.cross.cwiseAbs2().colwise().maxCoeff().sum());
  return 16.0 * norm2inf * (log_b + b * log_2p + cfg.u_bound * cfg.u_bound / 2.0) / static_cast<double>(iters);
}

namespace {

void check_feasible(const Moments& m, const Vector& rho, const Vector& dual, const SaddleConfig& cfg) {
  const Eigen::Index p = m.cross.rows();
  const Eigen::Index q = m.cross.cols();
  if (rho.size() != 2 * p) throw InvalidInput("duality_gap: rho must have length 2p");
  if (rho.minCoeff() < -kFeasTol || rho.sum() > cfg.b_bound * (1.0 + kFeasTol) + kFeasTol)
    throw InvalidInput("duality_gap: rho outside the lifted l1 ball");
  if (cfg.adversary_norm == AdversaryNorm::ell1) {
    if (dual.size() != 2 * q) throw InvalidInput("duality_gap: w must have length 2q");
    if (dual.minCoeff() < -kFeasTol || std::abs(dual.sum() - 1.0) > 1e-8)
      throw InvalidInput("duality_gap: w is not on the simplex");
  } else {
    if (dual.size() != q) throw InvalidInput("duality_gap: beta must have length q");
    if (dual.norm() > cfg.u_bound * (1.0 + kFeasTol) + kFeasTol)
      throw InvalidInput("duality_gap: beta outside the l2 ball");
  }
}

}  // namespace

double saddle_loss(const Moments& m, const Vector& rho, const Vector& dual, const SaddleConfig& cfg) {
  const Vector s = signed_dual(dual, cfg.adversary_norm);
  const Vector r = m.zy - m.cross.transpose() * unlift(rho);
  return s.dot(r) + cfg.mu / cfg.u_bound * rho.sum();
}

double duality_gap(const Moments& m, const Vector& rho_bar, const Vector& dual_bar, const SaddleConfig& cfg) {
  check_feasible(m, rho_bar, dual_bar, cfg);
  const double penalty = cfg.mu / cfg.u_bound;
  const Vector r = m.zy - m.cross.transpose() * unlift(rho_bar);
  // Best adversary response to rho_bar.
  const double best_max = (cfg.adversary_norm == AdversaryNorm::ell1 ? r.cwiseAbs().maxCoeff() : cfg.u_bound * r.norm()) +
                          penalty * rho_bar.sum();
  // Best learner response to dual_bar: linear in rho over {rho >= 0, |rho|_1 <= B},
  // minimized at a vertex or at the origin.
  const Vector s = signed_dual(dual_bar, cfg.adversary_norm);
  const Vector cs = m.cross * s;
  const double min_coef = penalty - (cs.size() > 0 ? cs.cwiseAbs().maxCoeff() : 0.0);
  const double best_min = s.dot(m.zy) + cfg.b_bound * std::min(0.0, min_coef);
  return best_max - best_min;
}

double duality_gap(const Dataset& data, const Vector& rho_bar, const Vector& dual_bar, const SaddleConfig& cfg) {
  return duality_gap(Moments::from_data(data), rho_bar, dual_bar, cfg);
}

SparseLinearModel fit_sparse_ell1(const Dataset& data, const SaddleConfig& cfg) {
  cfg.validate();
  if (cfg.adversary_norm != AdversaryNorm::ell1) throw InvalidInput("fit_sparse_ell1: adversary_norm must be ell1");
  check_data(data);
  const Moments m = Moments::from_data(data);
  FullSampleOracle oracle(m, cfg);
  return run_oftrl(m, data.p(), data.q(), cfg, oracle);
}

SparseLinearModel fit_sparse_ell2(const Dataset& data, const SaddleConfig& cfg) {
  cfg.validate();
  if (cfg.adversary_norm != AdversaryNorm::ell2) throw InvalidInput("fit_sparse_ell2: adversary_norm must be ell2");
  check_data(data);
  const Moments m = Moments::from_data(data);
  FullSampleOracle oracle(m, cfg);
  return run_oftrl(m, data.p(), data.q(), cfg, oracle);
}

SparseLinearModel fit_sparse_stochastic(const Dataset& data, const SaddleConfig& cfg) {
  cfg.validate();
  check_data(data);
  if (!cfg.batch_size) throw InvalidInput("fit_sparse_stochastic: batch_size is required");
  const Eigen::Index bs = *cfg.batch_size;
  if (bs < 1 || bs > data.n()) throw InvalidInput("fit_sparse_stochastic: batch_size must be in [1, n]");
  const Moments m = Moments::from_data(data);
  if (cfg.batch_mode == BatchMode::all_rows) {
    if (bs != data.n()) throw InvalidInput("fit_sparse_stochastic: all_rows mode requires batch_size == n");
    FullSampleOracle oracle(m, cfg);
    return run_oftrl(m, data.p(), data.q(), cfg, oracle);
  }
  MiniBatchOracle oracle(data, cfg);
  return run_oftrl(m, data.p(), data.q(), cfg, oracle);
}

SparseLinearModel fit_sparse(const Dataset& data, const SaddleConfig& cfg) {
  if (cfg.batch_size) return fit_sparse_stochastic(data, cfg);
  return cfg.adversary_norm == AdversaryNorm::ell1 ? fit_sparse_ell1(data, cfg) : fit_sparse_ell2(data, cfg);
}

}  // namespace minimax_iv::sparse
