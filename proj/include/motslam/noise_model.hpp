#pragma once

#include <optional>

#include <Eigen/Dense>

#include "motslam/types.hpp"

namespace motslam {

// Gaussian noise model (covariance Sigma) with an optional Huber kernel applied
// to the whitened residual norm. The Huber threshold is in Mahalanobis units.
class NoiseModel {
 public:
  static NoiseModel isotropic(int dim, double sigma);
  static NoiseModel diagonal(const Eigen::VectorXd& sigmas);
  static NoiseModel covariance(const Eigen::MatrixXd& sigma);

  NoiseModel robust(double huber_k) const;

  int dim() const { return static_cast<int>(sqrt_info_.rows()); }
  bool isRobust() const { return huber_k_.has_value(); }
  double huberThreshold() const { return huber_k_.value(); }

  Eigen::VectorXd whiten(const Eigen::VectorXd& residual) const { return sqrt_info_ * residual; }
  Eigen::MatrixXd whitenJacobian(const Eigen::MatrixXd& jacobian) const {
    return sqrt_info_ * jacobian;
  }

  // Huber IRLS weight of a whitened residual norm: 1 at or below the threshold,
  // threshold/norm above it.
  double robustWeight(double whitened_norm) const;

  // Factor cost: s^2 below the threshold, k(2s - k) above (continuous, C^1).
  double robustCost(double whitened_norm) const;

 private:
  explicit NoiseModel(const Eigen::MatrixXd& sqrt_info) : sqrt_info_(sqrt_info) {}

  Eigen::MatrixXd sqrt_info_;  // L with L^T L = Sigma^{-1}
  std::optional<double> huber_k_;
};

// Standalone Huber weight, exposed for tests and diagnostics.
double huberWeight(double huber_k, double norm);

}  // namespace motslam
