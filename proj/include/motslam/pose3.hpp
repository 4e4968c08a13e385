#pragma once

#include <Eigen/Geometry>

#include "motslam/types.hpp"

namespace motslam {

// se(3) tangent element. Component order is fixed as (angular, linear) and every
// 6-vector residual/Jacobian in the library follows it.
struct Twist {
  Vector3 angular = Vector3::Zero();  // rad
  Vector3 linear = Vector3::Zero();   // m

  Twist() = default;
  Twist(const Vector3& w, const Vector3& v) : angular(w), linear(v) {}
  explicit Twist(const Vector6& xi) : angular(xi.head<3>()), linear(xi.tail<3>()) {}

  Vector6 vector() const {
    Vector6 xi;
    xi << angular, linear;
    return xi;
  }
};

// SE(3) element stored as unit quaternion + translation. Immutable value type;
// the quaternion is re-normalized with qw >= 0 on construction so equal poses
// serialize to equal bytes.
class Pose3 {
 public:
  Pose3() : q_(Eigen::Quaterniond::Identity()), t_(Vector3::Zero()) {}
  Pose3(const Eigen::Quaterniond& q, const Vector3& t) : q_(q), t_(t) { normalize(); }
  Pose3(const Matrix3& r, const Vector3& t) : q_(r), t_(t) { normalize(); }

  static Pose3 identity() { return {}; }

  // Exponential map. Closed form with a Taylor branch below 1e-8 rad.
  static Pose3 exp(const Twist& xi);

  // Principal-branch logarithm. Throws AngleNearPiError when the rotation angle
  // is within 1e-6 of pi; smoothing residuals between near-antipodal motions
  // must not silently pick an axis.
  Twist log() const;

  const Eigen::Quaterniond& rotation() const { return q_; }
  Matrix3 rotationMatrix() const { return q_.toRotationMatrix(); }
  const Vector3& translation() const { return t_; }

  // Rotation angle in [0, pi] (metric-safe, no branch restriction).
  double rotationAngle() const;

  Pose3 inverse() const {
    const Eigen::Quaterniond qi = q_.conjugate();
    return {qi, qi * (-t_)};
  }

  Pose3 operator*(const Pose3& other) const { return {q_ * other.q_, t_ + q_ * other.t_}; }

  Point3 operator*(const Point3& p) const { return q_ * p + t_; }
  Point3 transform(const Point3& p) const { return (*this) * p; }

  Matrix4 matrix() const;

  // Adjoint for (angular, linear) twist order: Exp(Ad_P xi) = P Exp(xi) P^{-1}.
  Matrix6 adjoint() const;

  // [tx, ty, tz, qx, qy, qz, qw]; rotation is the last four entries with the
  // scalar part qw last. Canonical sign qw >= 0 already holds.
  Eigen::Matrix<double, 7, 1> coeffs() const;
  static Pose3 fromCoeffs(const Eigen::Matrix<double, 7, 1>& c);

  bool isApprox(const Pose3& other, double tol = 1e-9) const;

 private:
  void normalize();

  Eigen::Quaterniond q_;
  Vector3 t_;
};

// Observed (absolute) motion of a rigid body from a local motion seen by a frame
// with pose `anchor` rigidly attached to it: anchor * local * anchor^{-1}.
// Independent of which attached frame is used.
Pose3 changeMotionFrame(const Pose3& local_motion, const Pose3& anchor);

// Moves a world-frame point under the observed motion of its rigid body. One
// shared motion moves every point on the body.
Point3 applyMotionToPoint(const Pose3& world_motion, const Point3& point_prev);

Matrix3 skew(const Vector3& v);

// SO(3) maps (used by Pose3 internals and by factor Jacobians).
Matrix3 so3LeftJacobian(const Vector3& omega);
Matrix3 so3LeftJacobianInverse(const Vector3& omega);

// SE(3) left Jacobian and inverse for the (angular, linear) order, so that
// log(exp(d) * exp(xi)) = xi + Jl^{-1}(xi) d + O(|d|^2).
Matrix6 se3LeftJacobian(const Twist& xi);
Matrix6 se3LeftJacobianInverse(const Twist& xi);

// Right-Jacobian inverse: log(exp(xi) * exp(d)) = xi + Jr^{-1}(xi) d + O(|d|^2).
inline Matrix6 se3RightJacobianInverse(const Twist& xi) {
  return se3LeftJacobianInverse(Twist(-xi.angular, -xi.linear));
}

}  // namespace motslam
