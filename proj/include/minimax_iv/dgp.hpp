#pragma once

#include "minimax_iv/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace minimax_iv::dgp {

/// The sixteen registered structural functions h0.
const std::vector<std::string>& function_names();
bool is_function_name(const std::string& name);

/// A registered h0. `randpw` carries its random breakpoints, drawn from the
/// seed passed at construction; the other forms ignore the seed.
class TrueFunction {
 public:
  TrueFunction(std::string name, std::uint64_t seed = 0);

  double operator()(double x) const;
  const std::string& name() const { return name_; }
  const std::vector<double>& breakpoints() const { return breaks_; }
  const std::vector<double>& slopes() const { return slopes_; }

 private:
  std::string name_;
  int id_ = 0;
  std::vector<double> breaks_;  // randpw only: 5 sorted knots in [-3, 3]
  std::vector<double> slopes_;  // randpw only: 6 slopes in [-2, 2]
  std::vector<double> values_;  // randpw only: h0 at each knot
};

double true_function(const std::string& name, double x, std::uint64_t seed = 0);

struct DgpConfig {
  Eigen::Index n = 300;
  Eigen::Index n_x = 1;
  Eigen::Index n_z = 1;
  double strength = 0.6;  // gamma
  std::string fname = "abs";
  std::uint64_t seed = 0;

  void validate() const;
};

/// z ~ N(0, 2 I), e ~ N(0, 2) shared by the treatment and outcome equations,
/// x = gamma z[0] + (1 - gamma) e + xi (or gamma z + (1 - gamma) e + xi when
/// n_x = n_z > 1), y = h0(x[0]) + e + delta, with xi, delta ~ N(0, 0.1^2).
struct Generated {
  Dataset data;
  TrueFunction h0;
};

Generated generate(const DgpConfig& cfg);

/// Fresh treatment draws from the structural equations (no outcomes).
Matrix draw_treatments(const DgpConfig& cfg, Eigen::Index n, std::uint64_t seed);

/// (1/n_test) sum (model(x*) - h0(x*[0]))^2 over fresh treatment draws.
double evaluate_mse(const Model& model, const DgpConfig& cfg, const TrueFunction& h0, Eigen::Index n_test,
                    std::uint64_t seed);

/// Polynomial features with a leading constant: all monomials of total degree
/// <= degree when the dimension is at most 3, per-coordinate powers otherwise.
Matrix polynomial_features(const Matrix& x, int degree);

class TwoSlsModel final : public Model {
 public:
  TwoSlsModel(Eigen::Index input_dim, int degree, Vector coef);

  Eigen::Index input_dim() const override { return input_dim_; }
  double predict(const Eigen::Ref<const Vector>& x) const override;
  Vector predict_rows(const Matrix& x) const override;

  int degree() const { return degree_; }
  const Vector& coef() const { return coef_; }

 private:
  Eigen::Index input_dim_;
  int degree_;
  Vector coef_;
};

/// Two-stage least squares on polynomial features of x and z; normal
/// equations solved with the pseudo-inverse.
TwoSlsModel fit_2sls(const Dataset& data, int degree = 3);

}  // namespace minimax_iv::dgp
