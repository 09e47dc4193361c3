#include "minimax_iv/dgp.hpp"

#include "minimax_iv/linalg.hpp"
#include "minimax_iv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace minimax_iv::dgp {

namespace {

constexpr double kNoiseSd = 0.1;
const double kVar2Sd = std::sqrt(2.0);

const std::vector<std::string> kNames = {"abs",      "2dpoly", "sigmoid", "sin",    "frequentsin", "abssqrt",
                                         "step",     "3dpoly", "linear",  "randpw", "abspos",      "sqrpos",
                                         "band",     "invband", "steplinear", "pwlinear"};

double ind(bool b) { return b ? 1.0 : 0.0; }

[[noreturn]] void throw_unknown(const std::string& name) {
  std::string all;
  for (const auto& n : kNames) all += (all.empty() ? "" : ", ") + n;
  throw InvalidInput("unknown function '" + name + "'; registered: " + all);
}

}  // namespace

const std::vector<std::string>& function_names() { return kNames; }

bool is_function_name(const std::string& name) {
  return std::find(kNames.begin(), kNames.end(), name) != kNames.end();
}

TrueFunction::TrueFunction(std::string name, std::uint64_t seed) : name_(std::move(name)) {
  const auto it = std::find(kNames.begin(), kNames.end(), name_);
  if (it == kNames.end()) throw_unknown(name_);
  id_ = static_cast<int>(it - kNames.begin());
  if (name_ == "randpw") {
    Rng rng(derive_seed(seed, {hash_name("randpw")}));
    std::uniform_real_distribution<double> knot(-3.0, 3.0), slope(-2.0, 2.0);
    for (int k = 0; k < 5; ++k) breaks_.push_back(knot(rng));
    std::sort(breaks_.begin(), breaks_.end());
    for (int k = 0; k < 6; ++k) slopes_.push_back(slope(rng));
    // Continuous assembly anchored at h0(first knot) = 0.
    values_.push_back(0.0);
    for (std::size_t k = 1; k < breaks_.size(); ++k)
      values_.push_back(values_.back() + slopes_[k] * (breaks_[k] - breaks_[k - 1]));
  }
}

double TrueFunction::operator()(double x) const {
  switch (id_) {
    case 0:
      return std::abs(x);
    case 1:
      return -1.5 * x + 0.9 * x * x;
    case 2:
      return 2.0 / (1.0 + std::exp(-2.0 * x));
    case 3:
      return std::sin(x);
    case 4:
      return std::sin(3.0 * x);
    case 5:
      return std::sqrt(std::abs(x));
    case 6:
      return ind(x < 0.0) + 2.5 * ind(x >= 0.0);
    case 7:
      return -1.5 * x + 0.9 * x * x + x * x * x;
    case 8:
      return x;
    case 9: {
      if (x < breaks_.front()) return slopes_.front() * (x - breaks_.front());
      std::size_t k = static_cast<std::size_t>(std::upper_bound(breaks_.begin(), breaks_.end(), x) - breaks_.begin()) - 1;
      return values_[k] + slopes_[k + 1] * (x - breaks_[k]);
    }
    case 10:
      return x * ind(x >= 0.0);
    case 11:
      return x * x * ind(x >= 0.0);
    case 12:
      return ind(-0.75 <= x && x <= 0.75);
    case 13:
      return 1.0 - ind(-0.75 <= x && x <= 0.75);
    case 14:
      return 2.0 * ind(x >= 0.0) - x;
    case 15:
      return (x + 1.0) * ind(x <= -1.0) + (x - 1.0) * ind(x >= 1.0);
  }
  return 0.0;
}

double true_function(const std::string& name, double x, std::uint64_t seed) { return TrueFunction(name, seed)(x); }

void DgpConfig::validate() const {
  if (n < 1) throw InvalidInput("dgp: n must be >= 1");
  if (n_x < 1 || n_z < 1) throw InvalidInput("dgp: n_x and n_z must be >= 1");
  if (n_x > 1 && n_x != n_z) throw InvalidInput("dgp: n_x > 1 requires n_x == n_z");
  if (!(strength >= 0.0 && strength <= 1.0)) throw InvalidInput("dgp: strength must lie in [0, 1]");
  if (!is_function_name(fname)) throw_unknown(fname);
}

namespace {

struct Draw {
  Matrix z;
  Vector e;
  Matrix x;
};

// Draw order is fixed: z (column-major), e, xi (column-major).
Draw draw_structural(const DgpConfig& cfg, Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> wide(0.0, kVar2Sd), narrow(0.0, kNoiseSd);
  Draw d;
  d.z.resize(n, cfg.n_z);
  for (Eigen::Index j = 0; j < cfg.n_z; ++j)
    for (Eigen::Index i = 0; i < n; ++i) d.z(i, j) = wide(rng);
  d.e.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) d.e(i) = wide(rng);
  d.x.resize(n, cfg.n_x);
  const double g = cfg.strength;
  for (Eigen::Index j = 0; j < cfg.n_x; ++j)
    for (Eigen::Index i = 0; i < n; ++i) d.x(i, j) = g * d.z(i, cfg.n_x == 1 ? 0 : j) + (1.0 - g) * d.e(i) + narrow(rng);
  return d;
}

}  // namespace

Generated generate(const DgpConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, {hash_name("data")}));
  Draw d = draw_structural(cfg, cfg.n, rng);
  TrueFunction h0(cfg.fname, cfg.seed);
  std::normal_distribution<double> narrow(0.0, kNoiseSd);
  Vector y(cfg.n);
  for (Eigen::Index i = 0; i < cfg.n; ++i) y(i) = h0(d.x(i, 0)) + d.e(i) + narrow(rng);
  return {Dataset(std::move(y), std::move(d.x), std::move(d.z)), std::move(h0)};
}

Matrix draw_treatments(const DgpConfig& cfg, Eigen::Index n, std::uint64_t seed) {
  cfg.validate();
  if (n < 1) throw InvalidInput("draw_treatments: n must be >= 1");
  Rng rng(seed);
  return draw_structural(cfg, n, rng).x;
}

double evaluate_mse(const Model& model, const DgpConfig& cfg, const TrueFunction& h0, Eigen::Index n_test,
                    std::uint64_t seed) {
  if (n_test < 1) throw InvalidInput("evaluate_mse: n_test must be >= 1");
  const Matrix x = draw_treatments(cfg, n_test, seed);
  const Vector pred = model.predict_rows(x);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n_test; ++i) {
    const double d = pred(i) - h0(x(i, 0));
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(n_test);
  if (!std::isfinite(mse)) throw std::runtime_error("evaluate_mse: non-finite predictions");
  return mse;
}

Matrix polynomial_features(const Matrix& x, int degree) {
  if (degree < 0) throw InvalidInput("polynomial_features: degree must be >= 0");
  const Eigen::Index n = x.rows(), p = x.cols();
  std::vector<std::vector<int>> exps;
  if (p <= 3) {
    std::vector<int> cur(static_cast<std::size_t>(p), 0);
    // Graded order: total degree 0, 1, ..., degree; lexicographic within a degree.
    std::function<void(Eigen::Index, int)> rec = [&](Eigen::Index j, int left) {
      if (j == p - 1) {
        cur[static_cast<std::size_t>(j)] = left;
        exps.push_back(cur);
        return;
      }
      for (int k = left; k >= 0; --k) {
        cur[static_cast<std::size_t>(j)] = k;
        rec(j + 1, left - k);
      }
    };
    for (int d = 0; d <= degree; ++d) rec(0, d);
  } else {
    exps.push_back(std::vector<int>(static_cast<std::size_t>(p), 0));
    for (Eigen::Index j = 0; j < p; ++j)
      for (int d = 1; d <= degree; ++d) {
        std::vector<int> e(static_cast<std::size_t>(p), 0);
        e[static_cast<std::size_t>(j)] = d;
        exps.push_back(e);
      }
  }
  Matrix out(n, static_cast<Eigen::Index>(exps.size()));
  for (std::size_t c = 0; c < exps.size(); ++c) {
    Vector col = Vector::Ones(n);
    for (Eigen::Index j = 0; j < p; ++j)
      for (int k = 0; k < exps[c][static_cast<std::size_t>(j)]; ++k) col.array() *= x.col(j).array();
    out.col(static_cast<Eigen::Index>(c)) = col;
  }
  return out;
}

TwoSlsModel::TwoSlsModel(Eigen::Index input_dim, int degree, Vector coef)
    : input_dim_(input_dim), degree_(degree), coef_(std::move(coef)) {
  if (polynomial_features(Matrix::Zero(1, input_dim), degree).cols() != coef_.size())
    throw InvalidInput("TwoSlsModel: coefficient count does not match the feature map");
}

double TwoSlsModel::predict(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != input_dim_) throw InvalidInput("TwoSlsModel: dimension mismatch");
  return (polynomial_features(x.transpose(), degree_) * coef_)(0);
}

Vector TwoSlsModel::predict_rows(const Matrix& x) const {
  if (x.cols() != input_dim_) throw InvalidInput("TwoSlsModel: dimension mismatch");
  return polynomial_features(x, degree_) * coef_;
}

namespace {

Matrix gram(const Matrix& a) {
  Matrix g = a.transpose() * a;
  return 0.5 * (g + g.transpose());
}

}  // namespace

TwoSlsModel fit_2sls(const Dataset& data, int degree) {
  if (degree < 1) throw InvalidInput("fit_2sls: degree must be >= 1");
  const Matrix phi = polynomial_features(data.x(), degree);
  const Matrix psi = polynomial_features(data.z(), degree);
  if (data.n() <= phi.cols()) throw InvalidInput("fit_2sls: need more rows than treatment features");
  const Matrix phi_hat = psi * (linalg::pinv(gram(psi)) * (psi.transpose() * phi));
  Vector coef = linalg::pinv(gram(phi_hat)) * (phi_hat.transpose() * data.y());
  return TwoSlsModel(data.p(), degree, std::move(coef));
}

}  // namespace minimax_iv::dgp
