#pragma once

#include "minimax_iv/core.hpp"
#include "minimax_iv/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace test_util {

using minimax_iv::Matrix;
using minimax_iv::Vector;

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  minimax_iv::Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

inline Vector gaussian_vector(Eigen::Index n, std::uint64_t seed) { return gaussian_matrix(n, 1, seed).col(0); }

/// Random symmetric PSD matrix of the given rank.
inline Matrix random_psd(Eigen::Index n, Eigen::Index rank, std::uint64_t seed) {
  const Matrix g = gaussian_matrix(n, rank, seed);
  Matrix k = g * g.transpose();
  return 0.5 * (k + k.transpose());
}

/// Unique scratch path under the system temp directory.
inline std::string temp_path(const std::string& stem) {
  static int counter = 0;
  return (std::filesystem::temp_directory_path() /
          ("minimax_iv_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + "_" + stem))
      .string();
}

}  // namespace test_util
