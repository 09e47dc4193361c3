#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace minimax_iv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised for malformed inputs: dimension mismatches, non-finite values,
/// out-of-range hyperparameters.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a text file cannot be parsed. The message carries the
/// offending row/column.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a linear system stays singular after regularization.
class SingularMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Observations (y_i, x_i, z_i) for i = 1..n: outcome, treatments, instruments.
/// Immutable after construction.
class Dataset {
 public:
  Dataset(Vector y, Matrix x, Matrix z);

  const Vector& y() const { return y_; }
  const Matrix& x() const { return x_; }
  const Matrix& z() const { return z_; }

  Eigen::Index n() const { return y_.size(); }
  Eigen::Index p() const { return x_.cols(); }
  Eigen::Index q() const { return z_.cols(); }

  /// Rows selected by `rows`, in that order (used by CV folds and batching).
  Dataset subset(const std::vector<Eigen::Index>& rows) const;

  bool operator==(const Dataset& other) const;

 private:
  Vector y_;
  Matrix x_;
  Matrix z_;
};

/// Regularization constants of the penalized minimax criterion.
///   lambda  - adversary norm penalty (may be 0 for unregularized variants)
///   mu      - learner norm penalty (may be 0)
///   delta   - critical-radius scale
///   u_bound - test-function norm budget U
///   b_bound - hypothesis norm budget B
struct HyperParams {
  double lambda = 1.0;
  double mu = 1.0;
  double delta = 1.0;
  double u_bound = 1.0;
  double b_bound = 1.0;

  void validate() const;
};

/// A fitted hypothesis h mapping a treatment row to a real.
class Model {
 public:
  virtual ~Model() = default;

  virtual Eigen::Index input_dim() const = 0;
  virtual double predict(const Eigen::Ref<const Vector>& x) const = 0;

  /// Row-wise prediction. Overridden where a batched path is cheaper.
  virtual Vector predict_rows(const Matrix& x) const;
};

/// Wraps a plain function; used for ground-truth functions and tests.
class FunctionModel final : public Model {
 public:
  FunctionModel(Eigen::Index dim, std::function<double(const Eigen::Ref<const Vector>&)> fn)
      : dim_(dim), fn_(std::move(fn)) {}

  Eigen::Index input_dim() const override { return dim_; }
  double predict(const Eigen::Ref<const Vector>& x) const override { return fn_(x); }

 private:
  Eigen::Index dim_;
  std::function<double(const Eigen::Ref<const Vector>&)> fn_;
};

/// psi_i = y_i - h(x_i).
Vector residuals(const Model& model, const Dataset& data);

/// (1/n) sum_i psi_i f_i for the residuals of `model` and test-function values f.
double empirical_moment(const Model& model, const Vector& test_values, const Dataset& data);

/// Same moment computed from residuals directly.
double empirical_moment(const Vector& psi, const Vector& test_values);

/// Reads a dataset from CSV with header "y,x0..x{p-1},z0..z{q-1}".
Dataset load_csv(const std::string& path);

/// Writes with 17 significant digits so that load_csv(save_csv(d)) == d.
void save_csv(const Dataset& data, const std::string& path);

/// Reads only the x0..x{p-1} columns of a CSV (other columns ignored).
Matrix load_treatments_csv(const std::string& path);

/// Shortest form that parses back to the same double (17 significant digits).
std::string format_double(double v);

}  // namespace minimax_iv
