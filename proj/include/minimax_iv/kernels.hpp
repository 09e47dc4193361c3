#pragma once

#include "minimax_iv/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace minimax_iv {

enum class KernelKind { rbf, linear, polynomial };

/// rbf:        exp(-gamma * |a - b|^2)
/// linear:     <a, b>
/// polynomial: (<a, b> + 1)^degree
struct KernelConfig {
  KernelKind kind = KernelKind::rbf;
  double gamma = 0.1;
  int degree = 2;

  static KernelConfig rbf(double gamma) { return {KernelKind::rbf, gamma, 2}; }
  static KernelConfig linear() { return {KernelKind::linear, 1.0, 1}; }
  static KernelConfig polynomial(int degree) { return {KernelKind::polynomial, 1.0, degree}; }

  void validate() const;
};

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

double kernel_eval(const KernelConfig& cfg, const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

/// Symmetric n x n Gram matrix; upper triangle computed, lower mirrored.
Matrix kernel_matrix(const KernelConfig& cfg, const Matrix& points);

/// Rectangular matrix K(a_i, b_j).
Matrix cross_kernel(const KernelConfig& cfg, const Matrix& a, const Matrix& b);

/// Hadamard product K_H(X) .* K_F(Z): the Gram matrix of the product kernel
/// on (x, z) pairs.
Matrix product_kernel_matrix(const KernelConfig& cfg_h, const Matrix& x, const KernelConfig& cfg_f, const Matrix& z);

/// Lloyd k-means with farthest-point initialization. Deterministic for a
/// given seed; stops at an assignment fixpoint or after 100 iterations.
struct KMeansResult {
  Matrix centroids;                    // r x d
  std::vector<Eigen::Index> assignment;  // length n
  int iterations = 0;
};

KMeansResult kmeans_centers(const Matrix& points, Eigen::Index r, std::uint64_t seed);

/// Low-rank factor K ~= V V^T with V = K(X, C) * m_half, m_half = (K(C, C))^{+1/2}.
struct NystromFactor {
  KernelConfig cfg;
  Matrix centers;  // r x d
  Matrix m_half;   // r x r, symmetric PSD

  Eigen::Index rank() const { return centers.rows(); }

  /// phi(x) = m_half * (K(c_j, x))_j.
  Vector feature_map(const Eigen::Ref<const Vector>& x) const;

  /// Row i is phi(points_i)^T; equals V when `points` are the training points.
  Matrix features(const Matrix& points) const;
};

enum class CenterRule { kmeans, uniform, all_points };

/// Nystrom factor with explicit center row indices (must be distinct).
NystromFactor nystrom_factorize(const KernelConfig& cfg, const Matrix& points,
                                const std::vector<Eigen::Index>& center_indices);

/// Nystrom factor with r centers chosen by `rule` from the seeded RNG.
NystromFactor nystrom_factorize(const KernelConfig& cfg, const Matrix& points, Eigen::Index r, CenterRule rule,
                                std::uint64_t seed);

std::string to_string(CenterRule rule);
CenterRule center_rule_from_string(const std::string& name);

}  // namespace minimax_iv
