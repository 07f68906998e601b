#pragma once

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Core>

namespace vrp::test {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline double uniform(std::mt19937_64& gen, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(gen);
}

// Central finite difference of a scalar function.
inline double fd_derivative(const std::function<double(double)>& f, double x,
                            double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Relative error with an absolute floor, so near-zero pairs compare sanely.
inline double rel_error(double got, double want, double floor_ = 1.0) {
  const double scale = std::max({std::abs(got), std::abs(want), floor_});
  return std::abs(got - want) / scale;
}

inline double max_rel_error(const Eigen::MatrixXd& got,
                            const Eigen::MatrixXd& want, double floor_ = 1.0) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < got.cols(); ++j) {
    for (Eigen::Index i = 0; i < got.rows(); ++i) {
      worst = std::max(worst, rel_error(got(i, j), want(i, j), floor_));
    }
  }
  return worst;
}

}  // namespace vrp::test
