#include "motslam/pose3.hpp"

#include <cmath>

namespace motslam {

namespace {

constexpr double kSmallAngle = 1e-8;   // Taylor branch threshold
constexpr double kLogBranchGuard = 1e-6;

// Coefficients of the SO(3) exponential and the V-matrix, with Taylor branches
// that avoid cancellation for small angles.
struct RotationCoeffs {
  double a;  // sin(t)/t
  double b;  // (1-cos(t))/t^2
  double c;  // (t-sin(t))/t^3
};

RotationCoeffs rotationCoeffs(double theta) {
  const double t2 = theta * theta;
  if (theta < kSmallAngle) {
    return {1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0};
  }
  const double s = std::sin(theta);
  const double c = std::cos(theta);
  return {s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta)};
}

Matrix3 vMatrix(const Vector3& omega) {
  const double theta = omega.norm();
  const auto [a, b, c] = rotationCoeffs(theta);
  (void)a;
  const Matrix3 w = skew(omega);
  return Matrix3::Identity() + b * w + c * w * w;
}

Matrix3 vMatrixInverse(const Vector3& omega) {
  const double theta = omega.norm();
  const Matrix3 w = skew(omega);
  double eta;
  if (theta < kSmallAngle) {
    eta = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    eta = (1.0 - 0.5 * theta * std::sin(theta) / (1.0 - std::cos(theta))) / (theta * theta);
  }
  return Matrix3::Identity() - 0.5 * w + eta * w * w;
}

}  // namespace

Matrix3 skew(const Vector3& v) {
  Matrix3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

void Pose3::normalize() {
  q_.normalize();
  if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
}

Pose3 Pose3::exp(const Twist& xi) {
  const double theta = xi.angular.norm();
  Eigen::Quaterniond q;
  if (theta < kSmallAngle) {
    // First-order quaternion; renormalized in the constructor.
    q = Eigen::Quaterniond(1.0, 0.5 * xi.angular.x(), 0.5 * xi.angular.y(), 0.5 * xi.angular.z());
  } else {
    q = Eigen::Quaterniond(Eigen::AngleAxisd(theta, xi.angular / theta));
  }
  return {q, vMatrix(xi.angular) * xi.linear};
}

Twist Pose3::log() const {
  const Vector3 qv(q_.x(), q_.y(), q_.z());
  const double s = qv.norm();
  const double w = q_.w();  // >= 0 by normalization, so angle is in [0, pi]
  const double theta = 2.0 * std::atan2(s, w);
  if (theta > M_PI - kLogBranchGuard) throw AngleNearPiError(theta);

  Vector3 omega;
  if (s < kSmallAngle) {
    omega = qv * (2.0 / w) * (1.0 - s * s / (3.0 * w * w));
  } else {
    omega = qv * (theta / s);
  }
  return {omega, vMatrixInverse(omega) * t_};
}

double Pose3::rotationAngle() const {
  const Vector3 qv(q_.x(), q_.y(), q_.z());
  return 2.0 * std::atan2(qv.norm(), std::abs(q_.w()));
}

Matrix4 Pose3::matrix() const {
  Matrix4 m = Matrix4::Identity();
  m.topLeftCorner<3, 3>() = rotationMatrix();
  m.topRightCorner<3, 1>() = t_;
  return m;
}

Matrix6 Pose3::adjoint() const {
  const Matrix3 r = rotationMatrix();
  Matrix6 ad = Matrix6::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.bottomLeftCorner<3, 3>() = skew(t_) * r;
  ad.bottomRightCorner<3, 3>() = r;
  return ad;
}

Eigen::Matrix<double, 7, 1> Pose3::coeffs() const {
  Eigen::Matrix<double, 7, 1> c;
  c << t_.x(), t_.y(), t_.z(), q_.x(), q_.y(), q_.z(), q_.w();
  return c;
}

Pose3 Pose3::fromCoeffs(const Eigen::Matrix<double, 7, 1>& c) {
  Pose3 p;
  p.q_ = Eigen::Quaterniond(c[6], c[3], c[4], c[5]);
  p.t_ = Vector3(c[0], c[1], c[2]);
  // Keep exact bits for already-canonical input so file round trips are
  // byte-stable; anything further off gets renormalized.
  if (std::abs(p.q_.squaredNorm() - 1.0) > 1e-12 || p.q_.w() < 0.0) p.normalize();
  return p;
}

bool Pose3::isApprox(const Pose3& other, double tol) const {
  const Pose3 d = inverse() * other;
  return d.rotationAngle() <= tol && d.translation().norm() <= tol;
}

Pose3 changeMotionFrame(const Pose3& local_motion, const Pose3& anchor) {
  return anchor * local_motion * anchor.inverse();
}

Point3 applyMotionToPoint(const Pose3& world_motion, const Point3& point_prev) {
  return world_motion * point_prev;
}

Matrix3 so3LeftJacobian(const Vector3& omega) {
  // Identical to the V-matrix of the SE(3) exponential.
  return vMatrix(omega);
}

Matrix3 so3LeftJacobianInverse(const Vector3& omega) {
  return vMatrixInverse(omega);
}

namespace {

// Q block of the SE(3) left Jacobian (lower-left for (angular, linear) order).
Matrix3 se3JacobianQ(const Vector3& omega, const Vector3& v) {
  const double theta = omega.norm();
  const double t2 = theta * theta;
  double c1, c2, c3;
  if (theta < 1e-4) {
    c1 = 1.0 / 6.0 - t2 / 120.0;            // (t - sin t)/t^3
    c2 = -1.0 / 24.0 + t2 / 720.0;          // (1 - t^2/2 - cos t)/t^4
    c3 = -1.0 / 120.0 + t2 / 5040.0;        // (t - sin t - t^3/6)/t^5
  } else {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    c1 = (theta - s) / (t2 * theta);
    c2 = (1.0 - 0.5 * t2 - c) / (t2 * t2);
    c3 = (theta - s - t2 * theta / 6.0) / (t2 * t2 * theta);
  }
  const Matrix3 w = skew(omega);
  const Matrix3 p = skew(v);
  const Matrix3 wp = w * p;
  const Matrix3 pw = p * w;
  const Matrix3 wpw = wp * w;
  return 0.5 * p + c1 * (wp + pw + wpw) - c2 * (w * wp + pw * w - 3.0 * wpw) -
         0.5 * (c2 - 3.0 * c3) * (wpw * w + w * wpw);
}

}  // namespace

Matrix6 se3LeftJacobian(const Twist& xi) {
  const Matrix3 j = so3LeftJacobian(xi.angular);
  Matrix6 out = Matrix6::Zero();
  out.topLeftCorner<3, 3>() = j;
  out.bottomRightCorner<3, 3>() = j;
  out.bottomLeftCorner<3, 3>() = se3JacobianQ(xi.angular, xi.linear);
  return out;
}

Matrix6 se3LeftJacobianInverse(const Twist& xi) {
  const Matrix3 ji = so3LeftJacobianInverse(xi.angular);
  const Matrix3 q = se3JacobianQ(xi.angular, xi.linear);
  Matrix6 out = Matrix6::Zero();
  out.topLeftCorner<3, 3>() = ji;
  out.bottomRightCorner<3, 3>() = ji;
  out.bottomLeftCorner<3, 3>() = -ji * q * ji;
  return out;
}

}  // namespace motslam
