#include "motslam/noise_model.hpp"

#include <cmath>

namespace motslam {

NoiseModel NoiseModel::isotropic(int dim, double sigma) {
  if (sigma <= 0.0) throw NonPsdCovarianceError("isotropic sigma must be positive");
  return NoiseModel(Eigen::MatrixXd::Identity(dim, dim) / sigma);
}

NoiseModel NoiseModel::diagonal(const Eigen::VectorXd& sigmas) {
  if ((sigmas.array() <= 0.0).any()) throw NonPsdCovarianceError("sigmas must be positive");
  return NoiseModel(sigmas.cwiseInverse().asDiagonal());
}

NoiseModel NoiseModel::covariance(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols()) throw NonPsdCovarianceError("covariance must be square");
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw NonPsdCovarianceError("covariance has no Cholesky factor");
  }
  // Sigma = L L^T  =>  sqrt information is L^{-1}.
  const Eigen::MatrixXd l = llt.matrixL();
  return NoiseModel(l.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(sigma.rows(), sigma.cols())));
}

NoiseModel NoiseModel::robust(double huber_k) const {
  if (huber_k <= 0.0) throw NonPsdCovarianceError("Huber threshold must be positive");
  NoiseModel out = *this;
  out.huber_k_ = huber_k;
  return out;
}

double huberWeight(double huber_k, double norm) {
  return norm <= huber_k ? 1.0 : huber_k / norm;
}

double NoiseModel::robustWeight(double whitened_norm) const {
  if (!huber_k_) return 1.0;
  return huberWeight(*huber_k_, whitened_norm);
}

double NoiseModel::robustCost(double whitened_norm) const {
  const double s = whitened_norm;
  if (!huber_k_ || s <= *huber_k_) return s * s;
  return *huber_k_ * (2.0 * s - *huber_k_);
}

}  // namespace motslam
