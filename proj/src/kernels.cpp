#include "minimax_iv/kernels.hpp"

#include "minimax_iv/linalg.hpp"
#include "minimax_iv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace minimax_iv {

void KernelConfig::validate() const {
  if (kind == KernelKind::rbf && !(gamma > 0.0 && std::isfinite(gamma)))
    throw InvalidInput("rbf kernel needs gamma > 0");
  if (kind == KernelKind::polynomial && degree < 1) throw InvalidInput("polynomial kernel needs degree >= 1");
}

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::rbf:
      return "rbf";
    case KernelKind::linear:
      return "linear";
    case KernelKind::polynomial:
      return "polynomial";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "rbf") return KernelKind::rbf;
  if (name == "linear") return KernelKind::linear;
  if (name == "polynomial" || name == "poly") return KernelKind::polynomial;
  throw InvalidInput("unknown kernel '" + name + "' (expected rbf, linear, polynomial)");
}

double kernel_eval(const KernelConfig& cfg, const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  if (a.size() != b.size()) throw InvalidInput("kernel_eval: dimension mismatch");
  switch (cfg.kind) {
    case KernelKind::rbf:
      return std::exp(-cfg.gamma * (a - b).squaredNorm());
    case KernelKind::linear:
      return a.dot(b);
    case KernelKind::polynomial:
      return std::pow(a.dot(b) + 1.0, cfg.degree);
  }
  return 0.0;
}

Matrix kernel_matrix(const KernelConfig& cfg, const Matrix& points) {
  cfg.validate();
  const Eigen::Index n = points.rows();
  if (n < 1) throw InvalidInput("kernel_matrix: need at least one point");
  Matrix k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vector pj = points.row(j).transpose();
    for (Eigen::Index i = 0; i <= j; ++i) k(i, j) = kernel_eval(cfg, points.row(i).transpose(), pj);
  }
  linalg::mirror_upper(k);
  return k;
}

Matrix cross_kernel(const KernelConfig& cfg, const Matrix& a, const Matrix& b) {
  cfg.validate();
  if (a.cols() != b.cols()) throw InvalidInput("cross_kernel: dimension mismatch");
  Matrix k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const Vector bj = b.row(j).transpose();
    for (Eigen::Index i = 0; i < a.rows(); ++i) k(i, j) = kernel_eval(cfg, a.row(i).transpose(), bj);
  }
  return k;
}

Matrix product_kernel_matrix(const KernelConfig& cfg_h, const Matrix& x, const KernelConfig& cfg_f, const Matrix& z) {
  if (x.rows() != z.rows()) throw InvalidInput("product_kernel_matrix: row-count mismatch");
  return kernel_matrix(cfg_h, x).cwiseProduct(kernel_matrix(cfg_f, z));
}

KMeansResult kmeans_centers(const Matrix& points, Eigen::Index r, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (r <= 0) throw InvalidInput("kmeans: r must be positive");
  if (r > n) throw InvalidInput("kmeans: r must not exceed the number of points");

  Rng rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);

  // Farthest-point seeding: random first center, then repeatedly the point
  // farthest from all chosen centers (lowest index on ties).
  std::vector<Eigen::Index> chosen{pick(rng)};
  Vector dist = (points.rowwise() - points.row(chosen[0])).rowwise().squaredNorm();
  while (static_cast<Eigen::Index>(chosen.size()) < r) {
    Eigen::Index far = 0;
    dist.maxCoeff(&far);
    chosen.push_back(far);
    dist = dist.cwiseMin((points.rowwise() - points.row(far)).rowwise().squaredNorm());
  }

  KMeansResult out;
  out.centroids.resize(r, points.cols());
  for (Eigen::Index c = 0; c < r; ++c) out.centroids.row(c) = points.row(chosen[static_cast<std::size_t>(c)]);
  out.assignment.assign(static_cast<std::size_t>(n), -1);

  constexpr int kMaxIter = 100;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (out.centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      auto& slot = out.assignment[static_cast<std::size_t>(i)];
      if (slot != best) {
        slot = best;
        changed = true;
      }
    }
    out.iterations = iter + 1;
    if (!changed) break;
    Matrix sums = Matrix::Zero(r, points.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(r), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index c = out.assignment[static_cast<std::size_t>(i)];
      sums.row(c) += points.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    // Empty clusters keep their previous centroid.
    for (Eigen::Index c = 0; c < r; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        out.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  return out;
}

Vector NystromFactor::feature_map(const Eigen::Ref<const Vector>& x) const {
  Vector kx(centers.rows());
  for (Eigen::Index j = 0; j < centers.rows(); ++j) kx(j) = kernel_eval(cfg, centers.row(j).transpose(), x);
  return m_half * kx;
}

Matrix NystromFactor::features(const Matrix& points) const { return cross_kernel(cfg, points, centers) * m_half; }

namespace {

NystromFactor factor_from_centers(const KernelConfig& cfg, Matrix centers) {
  NystromFactor f;
  f.cfg = cfg;
  f.m_half = linalg::pinv_sqrt(kernel_matrix(cfg, centers));
  f.centers = std::move(centers);
  return f;
}

}  // namespace

NystromFactor nystrom_factorize(const KernelConfig& cfg, const Matrix& points,
                                const std::vector<Eigen::Index>& center_indices) {
  cfg.validate();
  const auto r = static_cast<Eigen::Index>(center_indices.size());
  if (r < 1) throw InvalidInput("nystrom: need at least one center");
  if (r > points.rows()) throw InvalidInput("nystrom: r must not exceed n");
  std::set<Eigen::Index> seen;
  Matrix centers(r, points.cols());
  for (Eigen::Index j = 0; j < r; ++j) {
    const Eigen::Index idx = center_indices[static_cast<std::size_t>(j)];
    if (idx < 0 || idx >= points.rows()) throw InvalidInput("nystrom: center index out of range");
    if (!seen.insert(idx).second) throw InvalidInput("nystrom: duplicate center index");
    centers.row(j) = points.row(idx);
  }
  return factor_from_centers(cfg, std::move(centers));
}

NystromFactor nystrom_factorize(const KernelConfig& cfg, const Matrix& points, Eigen::Index r, CenterRule rule,
                                std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (r < 1 || r > n) throw InvalidInput("nystrom: need 1 <= r <= n");
  switch (rule) {
    case CenterRule::kmeans:
      cfg.validate();
      return factor_from_centers(cfg, kmeans_centers(points, r, seed).centroids);
    case CenterRule::uniform: {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      Rng rng(seed);
      for (Eigen::Index i = 0; i < r; ++i) {
        std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
      }
      idx.resize(static_cast<std::size_t>(r));
      return nystrom_factorize(cfg, points, idx);
    }
    case CenterRule::all_points: {
      if (r != n) throw InvalidInput("nystrom: all_points rule requires r == n");
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      return nystrom_factorize(cfg, points, idx);
    }
  }
  throw InvalidInput("nystrom: unknown center rule");
}

std::string to_string(CenterRule rule) {
  switch (rule) {
    case CenterRule::kmeans:
      return "kmeans";
    case CenterRule::uniform:
      return "uniform";
    case CenterRule::all_points:
      return "all";
  }
  return "unknown";
}

CenterRule center_rule_from_string(const std::string& name) {
  if (name == "kmeans") return CenterRule::kmeans;
  if (name == "uniform") return CenterRule::uniform;
  if (name == "all") return CenterRule::all_points;
  throw InvalidInput("unknown center rule '" + name + "' (expected kmeans, uniform, all)");
}

}  // namespace minimax_iv
