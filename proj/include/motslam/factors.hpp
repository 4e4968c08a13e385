#pragma once

#include <memory>
#include <vector>

#include "motslam/camera.hpp"
#include "motslam/noise_model.hpp"
#include "motslam/values.hpp"

namespace motslam {

// ---------------------------------------------------------------------------
// Residual functions. 6-vector residuals use the (angular, linear) twist order.
// ---------------------------------------------------------------------------

// r = z3d - X^{-1} m : ties a world point to its camera-local measurement.
Vector3 pointMeasurementResidual(const Pose3& x, const Point3& m_world, const Vector3& z3d);

// r = log(odom^{-1} X_prev^{-1} X_curr) : between factor on consecutive camera poses.
Vector6 odometryBetweenResidual(const Pose3& x_prev, const Pose3& x_curr, const Pose3& odom);

// r = m_curr - H m_prev : one rigid-body motion moves every tracked point.
Vector3 ternaryMotionResidual(const Pose3& h_world, const Point3& m_prev, const Point3& m_curr);

// r = log(H_prev^{-1} H_curr) : constant-motion prior between consecutive motions.
Vector6 motionSmoothingResidual(const Pose3& h_prev, const Pose3& h_curr);

// r = m_curr - L_curr L_prev^{-1} m_prev : motion constraint written on poses.
Vector3 quaternaryMotionResidual(const Pose3& l_prev, const Pose3& l_curr, const Point3& m_prev,
                                 const Point3& m_curr);

// r = log((L_b L_a^{-1})^{-1} (L_c L_b^{-1})) : constant implied motion over a pose triple.
Vector6 poseSmoothingResidual(const Pose3& l_a, const Pose3& l_b, const Pose3& l_c);

// r = z_prev + flow - pi(T m) (or pi(T^{-1} m) when invert_pose). The camera
// stage uses the camera pose with invert_pose = true; the object stage uses the
// camera-adjusted motion G directly.
Vector2 flowReprojectionResidual(const Pose3& t, bool invert_pose, const Point3& m,
                                 const Vector2& z2d_prev, const Vector2& flow,
                                 const CameraModel& cam);

// r = log(prior^{-1} value) : zero iff equal; a right-composed offset exp(xi)
// yields exactly xi.
Vector6 priorResidual(const Pose3& value, const Pose3& prior);

// ---------------------------------------------------------------------------
// Graph factors. evaluate() returns the raw residual and, when requested, one
// Jacobian block per key: d(residual)/d(delta) for the left perturbation
// exp(delta) * value on poses and plain addition on points/flows.
// ---------------------------------------------------------------------------

class Factor {
 public:
  Factor(std::vector<VariableKey> keys, NoiseModel noise)
      : keys_(std::move(keys)), noise_(std::move(noise)) {}
  virtual ~Factor() = default;

  const std::vector<VariableKey>& keys() const { return keys_; }
  const NoiseModel& noiseModel() const { return noise_; }
  int dim() const { return noise_.dim(); }

  virtual Eigen::VectorXd evaluate(const Values& values,
                                   std::vector<Eigen::MatrixXd>* jacobians) const = 0;
  virtual const char* name() const = 0;

 private:
  std::vector<VariableKey> keys_;
  NoiseModel noise_;
};

using FactorPtr = std::unique_ptr<Factor>;

class PointMeasurementFactor : public Factor {
 public:
  PointMeasurementFactor(VariableKey pose_key, VariableKey point_key, const Vector3& z3d,
                         NoiseModel noise)
      : Factor({pose_key, point_key}, std::move(noise)), z3d_(z3d) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "PointMeasurement"; }

 private:
  Vector3 z3d_;
};

class OdometryBetweenFactor : public Factor {
 public:
  OdometryBetweenFactor(VariableKey prev_key, VariableKey curr_key, const Pose3& odom,
                        NoiseModel noise)
      : Factor({prev_key, curr_key}, std::move(noise)), odom_(odom) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "OdometryBetween"; }

 private:
  Pose3 odom_;
};

class TernaryMotionFactor : public Factor {
 public:
  TernaryMotionFactor(VariableKey motion_key, VariableKey point_prev_key,
                      VariableKey point_curr_key, NoiseModel noise)
      : Factor({motion_key, point_prev_key, point_curr_key}, std::move(noise)) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "TernaryMotion"; }
};

class MotionSmoothingFactor : public Factor {
 public:
  MotionSmoothingFactor(VariableKey prev_key, VariableKey curr_key, NoiseModel noise)
      : Factor({prev_key, curr_key}, std::move(noise)) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "MotionSmoothing"; }
};

class QuaternaryMotionFactor : public Factor {
 public:
  QuaternaryMotionFactor(VariableKey pose_prev_key, VariableKey pose_curr_key,
                         VariableKey point_prev_key, VariableKey point_curr_key, NoiseModel noise)
      : Factor({pose_prev_key, pose_curr_key, point_prev_key, point_curr_key}, std::move(noise)) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "QuaternaryMotion"; }
};

class PoseSmoothingFactor : public Factor {
 public:
  PoseSmoothingFactor(VariableKey a_key, VariableKey b_key, VariableKey c_key, NoiseModel noise)
      : Factor({a_key, b_key, c_key}, std::move(noise)) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "PoseSmoothing"; }
};

// 2D reprojection of a point variable seen from a pose variable: r = z2d - pi(X^{-1} m).
class ProjectionFactor : public Factor {
 public:
  ProjectionFactor(VariableKey pose_key, VariableKey point_key, const Vector2& z2d,
                   const CameraModel& cam, NoiseModel noise)
      : Factor({pose_key, point_key}, std::move(noise)), z2d_(z2d), cam_(cam) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "Projection"; }

 private:
  Vector2 z2d_;
  CameraModel cam_;
};

// Depth channel of an RGB-D measurement: r = (X^{-1} m).z - d. Pairs with
// ProjectionFactor so each sensor channel enters the estimation once.
class DepthFactor : public Factor {
 public:
  DepthFactor(VariableKey pose_key, VariableKey point_key, double depth, NoiseModel noise)
      : Factor({pose_key, point_key}, std::move(noise)), depth_(depth) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "Depth"; }

 private:
  double depth_;
};

// Pose-only reprojection of a known world point: r = z2d - pi(X^{-1} m). Used
// by the PnP stages where the map from the previous frame is held fixed.
class FixedPointProjectionFactor : public Factor {
 public:
  FixedPointProjectionFactor(VariableKey pose_key, const Point3& m_world, const Vector2& z2d,
                             const CameraModel& cam, NoiseModel noise)
      : Factor({pose_key}, std::move(noise)), m_(m_world), z2d_(z2d), cam_(cam) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "FixedPointProjection"; }

 private:
  Point3 m_;
  Vector2 z2d_;
  CameraModel cam_;
};

// Joint flow/transform refinement factor. The tracked world point is data; the
// transform and the flow are variables.
class FlowReprojectionFactor : public Factor {
 public:
  FlowReprojectionFactor(VariableKey pose_key, VariableKey flow_key, bool invert_pose,
                         const Point3& m_world, const Vector2& z2d_prev, const CameraModel& cam,
                         NoiseModel noise)
      : Factor({pose_key, flow_key}, std::move(noise)), invert_pose_(invert_pose), m_(m_world),
        z2d_prev_(z2d_prev), cam_(cam) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "FlowReprojection"; }

 private:
  bool invert_pose_;
  Point3 m_;
  Vector2 z2d_prev_;
  CameraModel cam_;
};

class PosePriorFactor : public Factor {
 public:
  PosePriorFactor(VariableKey key, const Pose3& prior, NoiseModel noise)
      : Factor({key}, std::move(noise)), prior_(prior) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "PosePrior"; }

 private:
  Pose3 prior_;
};

class FlowPriorFactor : public Factor {
 public:
  FlowPriorFactor(VariableKey key, const Vector2& measured, NoiseModel noise)
      : Factor({key}, std::move(noise)), measured_(measured) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override;
  const char* name() const override { return "FlowPrior"; }

 private:
  Vector2 measured_;
};

}  // namespace motslam
