#pragma once

#include "minimax_iv/core.hpp"

#include <optional>
#include <string>

namespace minimax_iv::shape {

enum class ShapeKind { monotone_inc, monotone_dec, tv, lipschitz_tv, convex_lipschitz };

std::string to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);

/// Closed interval [lo, hi].
struct Box {
  double lo = 0.0;
  double hi = 1.0;
};

struct ShapeConfig {
  ShapeKind kind = ShapeKind::monotone_inc;
  double lipschitz = 2.0;  // L; the adversary parts use 2L
  double lambda = 1.0;     // adversary l2 penalty, >= 1 for the guarantee
  std::optional<double> eta;  // default 1/sqrt(T)
  int iters = 2000;
  /// Value boxes for theta+ / theta- and for each adversary part. Unset means
  /// data-driven defaults derived from the range of y (see fit_shape_iv).
  std::optional<Box> theta_plus_box;
  std::optional<Box> theta_minus_box;
  std::optional<Box> adversary_box;
  /// Maximum knot count for convex fits.
  Eigen::Index convex_knots = 200;
  /// Iteration cap for the iterative projections (Dykstra for Lipschitz
  /// monotone parts, interior point for convex parts).
  int dykstra_max_iter = 2000;
  /// Inner iterations used to approximate best responses for the gap
  /// diagnostic; 0 skips the diagnostic.
  int gap_iters = 200;

  void validate() const;
};

class PiecewiseModel final : public Model {
 public:
  PiecewiseModel() = default;
  PiecewiseModel(Vector knots, Vector values, ShapeKind kind, std::optional<double> lipschitz);

  Eigen::Index input_dim() const override { return 1; }
  double predict(const Eigen::Ref<const Vector>& x) const override;
  double predict_scalar(double x) const;

  const Vector& knots() const { return knots_; }
  const Vector& values() const { return values_; }
  ShapeKind kind() const { return kind_; }
  const std::optional<double>& lipschitz() const { return lipschitz_; }

  struct Diagnostics {
    bool degenerate = false;          // T = 0: initialization returned
    double gap = 0.0;                 // approximate best-response gap at the averages
    double gap_constant = 0.0;        // gap * sqrt(T)
    bool projections_converged = true;
  };
  Diagnostics diagnostics;

 private:
  Vector knots_;
  Vector values_;
  ShapeKind kind_ = ShapeKind::monotone_inc;
  std::optional<double> lipschitz_;
};

/// Weighted isotonic (nondecreasing) least squares by pool-adjacent-violators.
Vector pav(const Vector& values, const Vector& weights);
Vector pav(const Vector& values);

/// Isotonic regression restricted to a box: PAV followed by clipping, which is
/// the exact projection onto the intersection.
Vector isotonic_box(const Vector& values, const Box& box);

/// Projection onto {nondecreasing, 0 <= v_{i+1}-v_i <= L (x_{i+1}-x_i), box}.
/// Computed with Dykstra's method over two sets that PAV can project onto.
struct ProjectionResult {
  Vector values;
  bool converged = true;
  int iterations = 0;
};
ProjectionResult lipschitz_isotonic(const Vector& values, const Vector& knots, double lipschitz,
                                    const std::optional<Box>& box, int max_iter = 2000);

/// Projects the stacked (theta+; theta-) onto the hypothesis set of `cfg.kind`
/// for the given sorted knots. Boxes must be set in `cfg`.
Vector project_theta(const Vector& theta_tilde, const Vector& knots, const ShapeConfig& cfg);

/// Euclidean projection onto {convex, L-Lipschitz (and box, when given)}
/// piecewise-linear values over strictly increasing knots. `max_iter` caps
/// the interior-point iterations.
ProjectionResult project_convex_lipschitz(const Vector& values, const Vector& knots, double lipschitz, int max_iter,
                                          const std::optional<Box>& box = std::nullopt);

/// Simultaneous projected gradient descent/ascent on the shape-constrained
/// game; returns the averaged hypothesis.
PiecewiseModel fit_shape_iv(const Dataset& data, const ShapeConfig& cfg);

double predict_piecewise(const PiecewiseModel& model, double x);

}  // namespace minimax_iv::shape
