#include "minimax_iv/shape.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <optional>

namespace minimax_iv::shape {

namespace {

constexpr double kFeasTol = 1e-9;

bool is_lipschitz(ShapeKind k) { return k == ShapeKind::lipschitz_tv || k == ShapeKind::convex_lipschitz; }

Vector clip(Vector v, const Box& box) { return v.cwiseMax(box.lo).cwiseMin(box.hi); }

Vector antitonic(const Vector& values) { return -pav(Vector(-values)); }

}  // namespace

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::monotone_inc:
      return "monotone_inc";
    case ShapeKind::monotone_dec:
      return "monotone_dec";
    case ShapeKind::tv:
      return "tv";
    case ShapeKind::lipschitz_tv:
      return "lipschitz_tv";
    case ShapeKind::convex_lipschitz:
      return "convex_lipschitz";
  }
  return "unknown";
}

ShapeKind shape_kind_from_string(const std::string& name) {
  for (auto k : {ShapeKind::monotone_inc, ShapeKind::monotone_dec, ShapeKind::tv, ShapeKind::lipschitz_tv,
                 ShapeKind::convex_lipschitz})
    if (to_string(k) == name) return k;
  throw InvalidInput("unknown shape '" + name +
                     "' (expected monotone_inc, monotone_dec, tv, lipschitz_tv, convex_lipschitz)");
}

void ShapeConfig::validate() const {
  if (!(lipschitz >= 0.0) || !std::isfinite(lipschitz)) throw InvalidInput("shape: L must be finite and >= 0");
  if (!(lambda > 0.0)) throw InvalidInput("shape: lambda must be positive");
  if (eta && !(*eta > 0.0)) throw InvalidInput("shape: eta must be positive");
  if (iters < 0) throw InvalidInput("shape: iters must be >= 0");
  if (convex_knots < 2) throw InvalidInput("shape: convex_knots must be >= 2");
  if (dykstra_max_iter < 1) throw InvalidInput("shape: dykstra_max_iter must be >= 1");
  for (const auto* b : {&theta_plus_box, &theta_minus_box, &adversary_box})
    if (*b && !((*b)->lo <= (*b)->hi)) throw InvalidInput("shape: box needs lo <= hi");
}

PiecewiseModel::PiecewiseModel(Vector knots, Vector values, ShapeKind kind, std::optional<double> lipschitz)
    : knots_(std::move(knots)), values_(std::move(values)), kind_(kind), lipschitz_(lipschitz) {
  if (knots_.size() != values_.size() || knots_.size() < 1)
    throw InvalidInput("PiecewiseModel: knots and values must be nonempty and equally long");
  for (Eigen::Index i = 1; i < knots_.size(); ++i)
    if (knots_(i) < knots_(i - 1)) throw InvalidInput("PiecewiseModel: knots must be sorted");
}

double PiecewiseModel::predict_scalar(double x) const {
  const Eigen::Index m = knots_.size();
  const Eigen::Index hi = std::upper_bound(knots_.data(), knots_.data() + m, x) - knots_.data();
  if (hi == 0) return values_(0);
  if (hi == m) return values_(m - 1);
  const Eigen::Index lo = hi - 1;
  if (x == knots_(lo)) return values_(lo);
  const double t = (x - knots_(lo)) / (knots_(hi) - knots_(lo));
  return (1.0 - t) * values_(lo) + t * values_(hi);
}

double PiecewiseModel::predict(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != 1) throw InvalidInput("PiecewiseModel: expects scalar treatment");
  return predict_scalar(x(0));
}

double predict_piecewise(const PiecewiseModel& model, double x) { return model.predict_scalar(x); }

Vector pav(const Vector& values, const Vector& weights) {
  const Eigen::Index n = values.size();
  if (weights.size() != n) throw InvalidInput("pav: values and weights differ in length");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(weights(i) > 0.0)) throw InvalidInput("pav: weights must be positive");

  // Blocks on a stack: weighted mean, total weight, length.
  std::vector<double> mean, weight;
  std::vector<Eigen::Index> len;
  mean.reserve(static_cast<std::size_t>(n));
  weight.reserve(static_cast<std::size_t>(n));
  len.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = values(i), w = weights(i);
    Eigen::Index l = 1;
    while (!mean.empty() && mean.back() >= m) {
      const double w2 = weight.back() + w;
      m = (mean.back() * weight.back() + m * w) / w2;
      w = w2;
      l += len.back();
      mean.pop_back();
      weight.pop_back();
      len.pop_back();
    }
    mean.push_back(m);
    weight.push_back(w);
    len.push_back(l);
  }
  Vector out(n);
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < mean.size(); ++b) {
    out.segment(pos, len[b]).setConstant(mean[b]);
    pos += len[b];
  }
  return out;
}

Vector pav(const Vector& values) { return pav(values, Vector::Ones(values.size())); }

Vector isotonic_box(const Vector& values, const Box& box) { return clip(pav(values), box); }

ProjectionResult lipschitz_isotonic(const Vector& values, const Vector& knots, double lipschitz,
                                    const std::optional<Box>& box, int max_iter) {
  const Eigen::Index n = values.size();
  if (knots.size() != n) throw InvalidInput("lipschitz_isotonic: knots and values differ in length");
  if (!(lipschitz >= 0.0)) throw InvalidInput("lipschitz_isotonic: L must be >= 0");
  const Vector ramp = lipschitz * (knots.array() - knots(0)).matrix();
  auto proj_a = [&](const Vector& v) { return box ? isotonic_box(v, *box) : pav(v); };
  // {v_{i+1} - v_i <= L (x_{i+1} - x_i)} is {v - L x nonincreasing}.
  auto proj_b = [&](const Vector& v) { return Vector(antitonic(v - ramp) + ramp); };

  ProjectionResult res;
  Vector x = values;
  Vector p = Vector::Zero(n), q = Vector::Zero(n);
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  res.converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    const Vector y = proj_a(x + p);
    p = x + p - y;
    const Vector x_new = proj_b(y + q);
    q = y + q - x_new;
    const double change = (x_new - x).cwiseAbs().maxCoeff();
    x = x_new;
    res.iterations = it;
    if (change <= 1e-13 * scale && (x - y).cwiseAbs().maxCoeff() <= 1e-11 * scale) {
      res.converged = true;
      break;
    }
  }
  res.values = std::move(x);
  return res;
}

namespace {

// a^T v <= b over at most three consecutive coordinates starting at `start`.
struct HalfSpace {
  Eigen::Index start;
  int width;
  double a[3];
  double b;
  double norm2;
};

double dot(const HalfSpace& h, const Vector& v) {
  double s = 0.0;
  for (int k = 0; k < h.width; ++k) s += h.a[k] * v(h.start + k);
  return s;
}

// Cholesky factor of a symmetric positive definite pentadiagonal matrix given
// by its diagonal d0 and first two superdiagonals d1, d2 (overwritten in place).
void band_cholesky(Vector& d0, Vector& d1, Vector& d2) {
  const Eigen::Index n = d0.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    double diag = d0(i);
    if (i >= 1) diag -= d1(i - 1) * d1(i - 1);
    if (i >= 2) diag -= d2(i - 2) * d2(i - 2);
    // Near the end of an interior point run the scaling spans many orders of
    // magnitude and cancellation can eat a pivot. Replacing it by a huge value
    // zeroes the corresponding direction component, which is the standard
    // remedy and keeps the step usable.
    d0(i) = diag > 1e-30 * std::abs(d0(i)) && diag > 0.0 ? std::sqrt(diag) : 1e64;
    if (i + 1 < n) {
      double off = d1(i);
      if (i >= 1) off -= d2(i - 1) * d1(i - 1);
      d1(i) = off / d0(i);
    }
    if (i + 2 < n) d2(i) /= d0(i);
  }
}

Vector band_solve(const Vector& l0, const Vector& l1, const Vector& l2, Vector rhs) {
  const Eigen::Index n = l0.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i >= 1) rhs(i) -= l1(i - 1) * rhs(i - 1);
    if (i >= 2) rhs(i) -= l2(i - 2) * rhs(i - 2);
    rhs(i) /= l0(i);
  }
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    if (i + 1 < n) rhs(i) -= l1(i) * rhs(i + 1);
    if (i + 2 < n) rhs(i) -= l2(i) * rhs(i + 2);
    rhs(i) /= l0(i);
  }
  return rhs;
}

double max_step(const Vector& x, const Vector& dx) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (dx(i) < 0.0) a = std::min(a, -x(i) / dx(i));
  return a;
}

// Least squares min |B u - y| subject to C u = d, by a particular solution
// plus a null-space correction. Returns nullopt when the equalities are
// inconsistent.
std::optional<Vector> constrained_lstsq(const Matrix& b, const Vector& y, const Matrix& c, const Vector& d) {
  if (c.rows() == 0) return Vector(b.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y));
  Eigen::JacobiSVD<Matrix> svd(c, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double tol = 1e-10 * std::max(1.0, svd.singularValues()(0));
  svd.setThreshold(tol / std::max(1.0, svd.singularValues()(0)));
  const Eigen::Index rank = svd.rank();
  const Vector up = svd.solve(d);
  if ((c * up - d).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, d.cwiseAbs().maxCoeff())) return std::nullopt;
  const Eigen::Index free = c.cols() - rank;
  if (free == 0) return up;
  const Matrix null = svd.matrixV().rightCols(free);
  const Matrix bn = b * null;
  const Vector zc = bn.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y - b * up);
  return Vector(up + null * zc);
}

}  // namespace

// Every constraint row touches at most three consecutive coordinates, so the
// Newton systems of a primal-dual interior point method are pentadiagonal and
// each iteration costs O(n). Mehrotra's predictor-corrector typically needs a
// few dozen iterations regardless of how many constraints end up active.
ProjectionResult project_convex_lipschitz(const Vector& values, const Vector& knots, double lipschitz, int max_iter,
                                          const std::optional<Box>& box) {
  const Eigen::Index n = values.size();
  if (knots.size() != n) throw InvalidInput("project_convex_lipschitz: knots and values differ in length");
  if (!(lipschitz >= 0.0)) throw InvalidInput("project_convex_lipschitz: L must be >= 0");
  for (Eigen::Index i = 1; i < n; ++i)
    if (!(knots(i) > knots(i - 1))) throw InvalidInput("project_convex_lipschitz: knots must be strictly increasing");

  ProjectionResult res;
  res.converged = true;
  if (n == 0) return res;
  // A zero Lipschitz constant or a degenerate box leaves only constants, and
  // the nearest constant is the clipped mean.
  if (n == 1 || lipschitz == 0.0 || (box && box->lo == box->hi)) {
    double c = values.mean();
    if (box) c = std::clamp(c, box->lo, box->hi);
    res.values = Vector::Constant(n, c);
    return res;
  }

  std::vector<HalfSpace> hs;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double d = knots(i + 1) - knots(i);
    hs.push_back({i, 2, {-1.0, 1.0, 0.0}, lipschitz * d, 2.0});
    hs.push_back({i, 2, {1.0, -1.0, 0.0}, lipschitz * d, 2.0});
  }
  // Slopes nondecreasing: (v1 - v0)/d0 - (v2 - v1)/d1 <= 0.
  for (Eigen::Index i = 0; i + 2 < n; ++i) {
    const double d0 = knots(i + 1) - knots(i), d1 = knots(i + 2) - knots(i + 1);
    HalfSpace h{i, 3, {-1.0 / d0, 1.0 / d0 + 1.0 / d1, -1.0 / d1}, 0.0, 0.0};
    h.norm2 = h.a[0] * h.a[0] + h.a[1] * h.a[1] + h.a[2] * h.a[2];
    hs.push_back(h);
  }
  if (box) {
    for (Eigen::Index i = 0; i < n; ++i) {
      hs.push_back({i, 1, {1.0, 0.0, 0.0}, box->hi, 1.0});
      hs.push_back({i, 1, {-1.0, 0.0, 0.0}, -box->lo, 1.0});
    }
  }
  const Eigen::Index m = static_cast<Eigen::Index>(hs.size());

  auto apply = [&](const Vector& v) {
    Vector out(m);
    for (Eigen::Index k = 0; k < m; ++k) out(k) = dot(hs[k], v);
    return out;
  };
  auto apply_t = [&](const Vector& w) {
    Vector out = Vector::Zero(n);
    for (Eigen::Index k = 0; k < m; ++k)
      for (int j = 0; j < hs[k].width; ++j) out(hs[k].start + j) += hs[k].a[j] * w(k);
    return out;
  };
  Vector b(m);
  for (Eigen::Index k = 0; k < m; ++k) b(k) = hs[k].b;

  const Vector& y = values;
  double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
  if (box) scale = std::max({scale, std::abs(box->lo), std::abs(box->hi)});

  Vector v = y;
  Vector slack = (b - apply(v)).cwiseMax(1.0);
  Vector lam = Vector::Ones(m);
  res.converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    const Vector av = apply(v);
    const Vector r_d = v - y + apply_t(lam);
    const Vector r_p = av + slack - b;
    const double mu = lam.dot(slack) / static_cast<double>(m);
    res.iterations = it - 1;
    // Only the active set has to be identified here; the crossover below
    // produces the exact point. The dual residual cannot go much lower anyway
    // because it cancels against large multipliers.
    if (r_d.cwiseAbs().maxCoeff() <= 1e-7 * scale && r_p.cwiseAbs().maxCoeff() <= 1e-9 * scale &&
        mu <= 1e-11 * scale * scale) {
      res.converged = true;
      break;
    }

    const Vector dw = lam.cwiseQuotient(slack);
    Vector l0 = Vector::Ones(n), l1 = Vector::Zero(std::max<Eigen::Index>(n - 1, 0)),
           l2 = Vector::Zero(std::max<Eigen::Index>(n - 2, 0));
    for (Eigen::Index k = 0; k < m; ++k) {
      const HalfSpace& h = hs[k];
      for (int p = 0; p < h.width; ++p) {
        const Eigen::Index i = h.start + p;
        l0(i) += dw(k) * h.a[p] * h.a[p];
        if (p + 1 < h.width) l1(i) += dw(k) * h.a[p] * h.a[p + 1];
        if (p + 2 < h.width) l2(i) += dw(k) * h.a[p] * h.a[p + 2];
      }
    }
    band_cholesky(l0, l1, l2);

    // Newton direction for complementarity target r_c (lam_k s_k - target).
    auto direction = [&](const Vector& r_c, Vector& dv, Vector& ds, Vector& dl) {
      const Vector t = (lam.cwiseProduct(r_p) - r_c).cwiseQuotient(slack);
      dv = band_solve(l0, l1, l2, -r_d - apply_t(t));
      ds = -r_p - apply(dv);
      dl = (-r_c - lam.cwiseProduct(ds)).cwiseQuotient(slack);
    };
    Vector dv, ds, dl;
    direction(lam.cwiseProduct(slack), dv, ds, dl);
    const double a_aff = std::min(max_step(slack, ds), max_step(lam, dl));
    const double mu_aff =
        (lam + a_aff * dl).dot(slack + a_aff * ds) / static_cast<double>(m);
    const double sigma = std::pow(mu_aff / mu, 3.0);
    direction(lam.cwiseProduct(slack) + ds.cwiseProduct(dl) - Vector::Constant(m, sigma * mu), dv, ds, dl);
    const double a = std::min(1.0, 0.995 * std::min(max_step(slack, ds), max_step(lam, dl)));
    v += a * dv;
    slack += a * ds;
    lam += a * dl;
    res.iterations = it;
  }

  // Crossover: the rows the interior point run considers binding define a
  // face of the feasible set, and the projection onto that face's affine hull
  // is exact. Between binding convexity rows the solution is linear, so the
  // face is parameterized by an intercept, a slope and one hinge per kink.
  std::vector<Eigen::Index> kinks;
  std::vector<Eigen::Index> binding;
  for (Eigen::Index k = 0; k < m; ++k) {
    const bool active = slack(k) < lam(k);
    if (hs[k].width == 3) {
      if (!active) kinks.push_back(hs[k].start + 1);
    } else if (active) {
      binding.push_back(k);
    }
  }
  Matrix basis(n, 2 + static_cast<Eigen::Index>(kinks.size()));
  basis.col(0).setOnes();
  basis.col(1) = (knots.array() - knots(0)).matrix();
  for (std::size_t j = 0; j < kinks.size(); ++j)
    basis.col(2 + j) = (knots.array() - knots(kinks[j])).cwiseMax(0.0).matrix();
  Matrix c(binding.size(), basis.cols());
  Vector d(binding.size());
  for (std::size_t r = 0; r < binding.size(); ++r) {
    const HalfSpace& h = hs[binding[r]];
    c.row(r).setZero();
    for (int j = 0; j < h.width; ++j) c.row(r) += h.a[j] * basis.row(h.start + j);
    d(r) = h.b;
  }
  if (const auto u = constrained_lstsq(basis, y, c, d)) {
    const Vector polished = basis * *u;
    const Vector viol = apply(polished) - b;
    if (viol.maxCoeff() <= 1e-11 * scale && (polished - v).cwiseAbs().maxCoeff() <= 1e-4 * scale) {
      res.values = polished;
      res.converged = true;
      return res;
    }
  }
  res.values = std::move(v);
  return res;
}

namespace {

// Projects one monotone part according to the shape kind. Returns the
// convergence status of iterative projections.
bool project_part(Eigen::Ref<Vector> part, const Vector& knots, ShapeKind kind, double lipschitz, const Box& box,
                  int max_iter) {
  switch (kind) {
    case ShapeKind::monotone_inc:
    case ShapeKind::monotone_dec:
    case ShapeKind::tv:
      part = isotonic_box(part, box);
      return true;
    case ShapeKind::lipschitz_tv: {
      auto r = lipschitz_isotonic(part, knots, lipschitz, box, max_iter);
      part = r.values;
      return r.converged;
    }
    case ShapeKind::convex_lipschitz: {
      if (box.lo == box.hi) {
        part.setConstant(box.lo);
        return true;
      }
      auto r = project_convex_lipschitz(part, knots, lipschitz, max_iter, box);
      part = r.values;
      return r.converged;
    }
  }
  return true;
}

bool project_stacked(Vector& theta, const Vector& knots, ShapeKind kind, double lipschitz, const Box& plus,
                     const Box& minus, int max_iter) {
  const Eigen::Index m = knots.size();
  if (theta.size() != 2 * m) throw InvalidInput("project_theta: expected a vector of length 2 * knots");
  const bool a = project_part(theta.head(m), knots, kind, lipschitz, plus, max_iter);
  const bool b = project_part(theta.tail(m), knots, kind, lipschitz, minus, max_iter);
  return a && b;
}

}  // namespace

Vector project_theta(const Vector& theta_tilde, const Vector& knots, const ShapeConfig& cfg) {
  if (!cfg.theta_plus_box || !cfg.theta_minus_box) throw InvalidInput("project_theta: theta boxes must be set");
  Vector theta = theta_tilde;
  project_stacked(theta, knots, cfg.kind, cfg.lipschitz, *cfg.theta_plus_box, *cfg.theta_minus_box,
                  cfg.dykstra_max_iter);
  return theta;
}

namespace {

// Maps samples to piecewise-linear coordinates over knots:
// value(i) = (1 - wt_i) v[lo_i] + wt_i v[lo_i + 1].
struct Interp {
  Vector knots;
  std::vector<Eigen::Index> lo;
  std::vector<double> wt;

  Vector apply(const Vector& v) const {
    Vector out(static_cast<Eigen::Index>(lo.size()));
    for (std::size_t i = 0; i < lo.size(); ++i) {
      const Eigen::Index j = lo[i];
      out(static_cast<Eigen::Index>(i)) = wt[i] == 0.0 ? v(j) : (1.0 - wt[i]) * v(j) + wt[i] * v(j + 1);
    }
    return out;
  }
  Vector adjoint(const Vector& r) const {
    Vector out = Vector::Zero(knots.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
      const Eigen::Index j = lo[i];
      const double ri = r(static_cast<Eigen::Index>(i));
      out(j) += (1.0 - wt[i]) * ri;
      if (wt[i] != 0.0) out(j + 1) += wt[i] * ri;
    }
    return out;
  }
  // Largest column sum, an upper bound on ||P^T P||.
  double max_load() const {
    const Vector load = adjoint(Vector::Ones(static_cast<Eigen::Index>(lo.size())));
    return load.maxCoeff();
  }
};

std::vector<Eigen::Index> stable_order(const Vector& v) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
  return idx;
}

// One knot per sample in stable sorted order.
Interp rank_interp(const Vector& v) {
  const auto order = stable_order(v);
  Interp ip;
  ip.knots.resize(v.size());
  ip.lo.assign(order.size(), 0);
  ip.wt.assign(order.size(), 0.0);
  for (std::size_t r = 0; r < order.size(); ++r) {
    ip.knots(static_cast<Eigen::Index>(r)) = v(order[r]);
    ip.lo[static_cast<std::size_t>(order[r])] = static_cast<Eigen::Index>(r);
  }
  return ip;
}

// At most s strictly increasing knots spread over the distinct sample values,
// always including both extremes.
Interp subsampled_interp(const Vector& v, Eigen::Index s) {
  std::vector<double> uniq(v.data(), v.data() + v.size());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  const auto u = static_cast<Eigen::Index>(uniq.size());
  if (u < 2) throw InvalidInput("fit_shape_iv: convex fits need at least two distinct values");
  const Eigen::Index m = std::min(u, s);
  Interp ip;
  ip.knots.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto pos = static_cast<std::size_t>(std::llround(static_cast<double>(k) * static_cast<double>(u - 1) /
                                                           static_cast<double>(m - 1)));
    ip.knots(k) = uniq[pos];
  }
  ip.lo.resize(static_cast<std::size_t>(v.size()));
  ip.wt.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    Eigen::Index hi = std::upper_bound(ip.knots.data(), ip.knots.data() + m, v(i)) - ip.knots.data();
    if (hi >= m) hi = m - 1;
    const Eigen::Index lo = hi - 1;
    const double t = (v(i) - ip.knots(lo)) / (ip.knots(hi) - ip.knots(lo));
    if (t >= 1.0) {
      ip.lo[static_cast<std::size_t>(i)] = hi;
      ip.wt[static_cast<std::size_t>(i)] = 0.0;
    } else {
      ip.lo[static_cast<std::size_t>(i)] = lo;
      ip.wt[static_cast<std::size_t>(i)] = t;
    }
  }
  return ip;
}

Vector signed_part(const Vector& stacked) {
  const Eigen::Index m = stacked.size() / 2;
  return stacked.head(m) - stacked.tail(m);
}

Vector stack(const Vector& g) {
  Vector out(2 * g.size());
  out << g, -g;
  return out;
}

struct Game {
  const Vector& y;
  Interp px, qz;
  double lambda;

  double loss(const Vector& theta, const Vector& w) const {
    const Vector h = px.apply(signed_part(theta));
    const Vector f = qz.apply(signed_part(w));
    return (y - h).dot(f) - lambda * f.squaredNorm();
  }
  // Gradient with respect to theta (stacked), given w.
  Vector grad_theta(const Vector& w) const { return stack(-px.adjoint(qz.apply(signed_part(w)))); }
  Vector grad_w(const Vector& theta, const Vector& w) const {
    const Vector h = px.apply(signed_part(theta));
    const Vector f = qz.apply(signed_part(w));
    return stack(qz.adjoint(y - h - 2.0 * lambda * f));
  }
};

}  // namespace

PiecewiseModel fit_shape_iv(const Dataset& data, const ShapeConfig& cfg_in) {
  cfg_in.validate();
  if (data.p() != 1 || data.q() != 1) throw InvalidInput("fit_shape_iv: needs scalar treatment and instrument");
  if (data.n() < 2) throw InvalidInput("fit_shape_iv: needs n >= 2");

  ShapeConfig cfg = cfg_in;
  const double ymin = data.y().minCoeff(), ymax = data.y().maxCoeff();
  const double range = ymax - ymin;
  const bool convex = cfg.kind == ShapeKind::convex_lipschitz;
  if (!cfg.theta_plus_box) {
    cfg.theta_plus_box = cfg.kind == ShapeKind::monotone_dec ? Box{0.0, 0.0} : Box{ymin, ymax};
  }
  if (!cfg.theta_minus_box) {
    switch (cfg.kind) {
      case ShapeKind::monotone_dec:
        cfg.theta_minus_box = Box{-ymax, -ymin};
        break;
      case ShapeKind::tv:
      case ShapeKind::lipschitz_tv:
        cfg.theta_minus_box = Box{0.0, range};
        break;
      default:
        cfg.theta_minus_box = Box{0.0, 0.0};
    }
  }
  if (!cfg.adversary_box) cfg.adversary_box = Box{0.0, 2.0 * range};

  const Vector x = data.x().col(0);
  const Vector z = data.z().col(0);
  Game game{data.y(), convex ? subsampled_interp(x, cfg.convex_knots) : rank_interp(x),
            convex ? subsampled_interp(z, cfg.convex_knots) : rank_interp(z), cfg.lambda};
  const Vector& knots = game.px.knots;
  const Eigen::Index mx = knots.size(), mz = game.qz.knots.size();
  const std::optional<double> lip = is_lipschitz(cfg.kind) ? std::optional<double>(cfg.lipschitz) : std::nullopt;

  if (cfg.iters == 0) {
    PiecewiseModel model(knots, Vector::Zero(mx), cfg.kind, lip);
    model.diagnostics.degenerate = true;
    return model;
  }

  // The adversary mirrors the hypothesis shape with both parts free and a 2L
  // Lipschitz constant.
  const ShapeKind adv_kind = (cfg.kind == ShapeKind::monotone_inc || cfg.kind == ShapeKind::monotone_dec)
                                 ? ShapeKind::tv
                                 : cfg.kind;
  const double adv_lip = 2.0 * cfg.lipschitz;
  const Box& adv_box = *cfg.adversary_box;

  bool converged = true;
  auto proj_theta = [&](Vector& th) {
    converged &= project_stacked(th, knots, cfg.kind, cfg.lipschitz, *cfg.theta_plus_box, *cfg.theta_minus_box,
                                 cfg.dykstra_max_iter);
  };
  auto proj_w = [&](Vector& w) {
    converged &= project_stacked(w, game.qz.knots, adv_kind, adv_lip, adv_box, adv_box, cfg.dykstra_max_iter);
  };

  // Scale-free default: the gradient already carries the scale of y, so the
  // per-step movement is proportional to the value range. The knot/sample
  // ratio accounts for several samples sharing a knot.
  const double density = static_cast<double>(std::max(mx, mz)) / static_cast<double>(data.n());
  const double eta = cfg.eta ? *cfg.eta : density / std::sqrt(static_cast<double>(cfg.iters));

  Vector theta = Vector::Zero(2 * mx);
  Vector w = Vector::Zero(2 * mz);
  proj_theta(theta);
  proj_w(w);
  Vector theta_sum = Vector::Zero(2 * mx), w_sum = Vector::Zero(2 * mz);
  for (int t = 0; t < cfg.iters; ++t) {
    const Vector g_theta = game.grad_theta(w);
    const Vector g_w = game.grad_w(theta, w);
    theta -= eta * g_theta;
    w += eta * g_w;
    proj_theta(theta);
    proj_w(w);
    assert(theta.head(mx).minCoeff() >= cfg.theta_plus_box->lo - kFeasTol);
    assert(w.maxCoeff() <= adv_box.hi + kFeasTol);
    theta_sum += theta;
    w_sum += w;
  }
  const double inv_t = 1.0 / static_cast<double>(cfg.iters);
  const Vector theta_bar = theta_sum * inv_t;
  const Vector w_bar = w_sum * inv_t;

  PiecewiseModel model(knots, signed_part(theta_bar), cfg.kind, lip);
  model.diagnostics.projections_converged = converged;

  if (cfg.gap_iters > 0) {
    // Approximate best responses by projected gradient from the averages. The
    // value found for each player bounds its exact best response from the
    // inside, so the reported gap never exceeds the true one.
    double best_max = game.loss(theta_bar, w_bar);
    Vector wr = w_bar;
    const double step_w = 1.0 / (4.0 * cfg.lambda * game.qz.max_load());
    for (int k = 0; k < cfg.gap_iters; ++k) {
      wr += step_w * game.grad_w(theta_bar, wr);
      proj_w(wr);
      best_max = std::max(best_max, game.loss(theta_bar, wr));
    }
    double best_min = game.loss(theta_bar, w_bar);
    Vector tr = theta_bar;
    const Vector g = game.grad_theta(w_bar);
    const double gmax = g.cwiseAbs().maxCoeff();
    const double width = std::max({cfg.theta_plus_box->hi - cfg.theta_plus_box->lo,
                                   cfg.theta_minus_box->hi - cfg.theta_minus_box->lo, 1e-12});
    const double step_t = gmax > 0.0 ? width / gmax : 0.0;
    for (int k = 0; k < cfg.gap_iters && step_t > 0.0; ++k) {
      tr -= step_t * g;
      proj_theta(tr);
      best_min = std::min(best_min, game.loss(tr, w_bar));
    }
    model.diagnostics.gap = best_max - best_min;
    model.diagnostics.gap_constant = model.diagnostics.gap * std::sqrt(static_cast<double>(cfg.iters));
  }
  return model;
}

}  // namespace minimax_iv::shape
