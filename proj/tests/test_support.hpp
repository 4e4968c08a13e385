#pragma once

#include <random>

#include "motslam/factors.hpp"
#include "motslam/scene.hpp"

namespace motslam::testing {

// Dense 4x4 homogeneous twist matrix for matrix-series oracles.
inline Matrix4 twistMatrix(const Twist& xi) {
  Matrix4 m = Matrix4::Zero();
  m.topLeftCorner<3, 3>() = skew(xi.angular);
  m.topRightCorner<3, 1>() = xi.linear;
  return m;
}

// Truncated matrix-exponential series, independent of the closed-form map.
inline Matrix4 expmSeries(const Matrix4& m, int terms = 20) {
  Matrix4 sum = Matrix4::Identity();
  Matrix4 power = Matrix4::Identity();
  double factorial = 1.0;
  for (int n = 1; n <= terms; ++n) {
    power = power * m;
    factorial *= n;
    sum += power / factorial;
  }
  return sum;
}

inline double maxAbs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

inline Vector3 randomVector(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline Twist randomTwist(std::mt19937_64& rng, double rot_scale, double trans_scale) {
  return {randomVector(rng, rot_scale), randomVector(rng, trans_scale)};
}

inline Pose3 randomPose(std::mt19937_64& rng, double rot_scale = 1.0, double trans_scale = 2.0) {
  return Pose3::exp(randomTwist(rng, rot_scale, trans_scale));
}

// Central finite differences of a factor residual w.r.t. one variable, using
// the solver's retraction.
inline Eigen::MatrixXd numericalJacobian(const Factor& factor, const Values& values,
                                         const VariableKey& key, double step = 1e-6) {
  const VariableValue& value = values.at(key);
  const int dim = tangentDim(value);
  const int rdim = factor.dim();
  Eigen::MatrixXd j(rdim, dim);
  for (int i = 0; i < dim; ++i) {
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(dim);
    Values forward = values;
    Values backward = values;
    delta[i] = step;
    forward.update(key, retract(value, delta));
    delta[i] = -step;
    backward.update(key, retract(value, delta));
    j.col(i) =
        (factor.evaluate(forward, nullptr) - factor.evaluate(backward, nullptr)) / (2.0 * step);
  }
  return j;
}

// Checks every analytic block of a factor against central differences.
inline double jacobianError(const Factor& factor, const Values& values) {
  std::vector<Eigen::MatrixXd> analytic;
  factor.evaluate(values, &analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < factor.keys().size(); ++i) {
    const Eigen::MatrixXd numeric = numericalJacobian(factor, values, factor.keys()[i]);
    const double rel = maxAbs(analytic[i] - numeric) / std::max(1.0, maxAbs(analytic[i]));
    worst = std::max(worst, rel);
  }
  return worst;
}

// A small scene with gently moving objects that stay in view. Constant-twist
// scripts keep the ground truth exactly consistent with the smoothing model.
inline SceneConfig standardScene(int frames, int objects, int points_per_object,
                                 int static_points, std::uint64_t seed) {
  SceneConfig cfg;
  cfg.frames = frames;
  cfg.seed = seed;
  cfg.static_points = static_points;
  cfg.camera_twist = Twist(Vector3(0.0, 0.002, 0.0), Vector3(0.02, 0.0, 0.03));
  cfg.noise.pixel_sigma = 0.0;
  cfg.noise.depth_sigma = 0.0;
  cfg.noise.flow_sigma = 0.0;
  cfg.noise.outlier_rate = 0.0;

  const Vector3 centers[] = {{-3.0, 0.5, 10.0}, {3.0, -0.5, 12.0}, {0.0, 2.0, 14.0},
                             {-1.5, -2.0, 9.0}};
  const Twist twists[] = {
      {Vector3(0.0, 0.03, 0.0), Vector3(0.08, 0.0, 0.02)},
      {Vector3(0.02, 0.0, 0.01), Vector3(-0.06, 0.03, 0.0)},
      {Vector3(0.01, -0.02, 0.03), Vector3(0.0, -0.05, 0.04)},
      {Vector3(-0.02, 0.01, 0.0), Vector3(0.05, 0.05, -0.02)},
  };
  for (int j = 0; j < objects; ++j) {
    ObjectConfig obj;
    obj.id = j + 1;
    obj.num_points = points_per_object;
    obj.center = centers[j % 4];
    obj.half_extent = 0.6;
    obj.twist = twists[j % 4];
    cfg.objects.push_back(obj);
  }
  return cfg;
}

}  // namespace motslam::testing
