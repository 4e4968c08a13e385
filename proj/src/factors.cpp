#include "motslam/factors.hpp"

namespace motslam {

Vector3 pointMeasurementResidual(const Pose3& x, const Point3& m_world, const Vector3& z3d) {
  return z3d - x.inverse() * m_world;
}

Vector6 odometryBetweenResidual(const Pose3& x_prev, const Pose3& x_curr, const Pose3& odom) {
  return (odom.inverse() * x_prev.inverse() * x_curr).log().vector();
}

Vector3 ternaryMotionResidual(const Pose3& h_world, const Point3& m_prev, const Point3& m_curr) {
  return m_curr - h_world * m_prev;
}

Vector6 motionSmoothingResidual(const Pose3& h_prev, const Pose3& h_curr) {
  return (h_prev.inverse() * h_curr).log().vector();
}

Vector3 quaternaryMotionResidual(const Pose3& l_prev, const Pose3& l_curr, const Point3& m_prev,
                                 const Point3& m_curr) {
  return ternaryMotionResidual(l_curr * l_prev.inverse(), m_prev, m_curr);
}

Vector6 poseSmoothingResidual(const Pose3& l_a, const Pose3& l_b, const Pose3& l_c) {
  return motionSmoothingResidual(l_b * l_a.inverse(), l_c * l_b.inverse());
}

Vector2 flowReprojectionResidual(const Pose3& t, bool invert_pose, const Point3& m,
                                 const Vector2& z2d_prev, const Vector2& flow,
                                 const CameraModel& cam) {
  const Point3 local = invert_pose ? t.inverse() * m : t * m;
  return z2d_prev + flow - cam.projectLocal(local).pixel;
}

Vector6 priorResidual(const Pose3& value, const Pose3& prior) {
  return (prior.inverse() * value).log().vector();
}

namespace {

// d(X(d)^{-1} m)/dd for X(d) = exp(d) X, split as [d/d_omega, d/d_v].
Eigen::Matrix<double, 3, 6> invTransformJacobian(const Pose3& x, const Point3& m) {
  const Matrix3 rt = x.rotationMatrix().transpose();
  Eigen::Matrix<double, 3, 6> j;
  j.leftCols<3>() = rt * skew(m);
  j.rightCols<3>() = -rt;
  return j;
}

// d(T(d) m)/dd for T(d) = exp(d) T.
Eigen::Matrix<double, 3, 6> transformJacobian(const Point3& transformed) {
  Eigen::Matrix<double, 3, 6> j;
  j.leftCols<3>() = -skew(transformed);
  j.rightCols<3>() = Matrix3::Identity();
  return j;
}

}  // namespace

Eigen::VectorXd PointMeasurementFactor::evaluate(const Values& values,
                                                 std::vector<Eigen::MatrixXd>* jacobians) const {
  const Pose3& x = values.atPose(keys()[0]);
  const Vector3& m = values.atPoint(keys()[1]);
  if (jacobians) {
    jacobians->resize(2);
    (*jacobians)[0] = -invTransformJacobian(x, m);
    (*jacobians)[1] = -x.rotationMatrix().transpose();
  }
  return pointMeasurementResidual(x, m, z3d_);
}

Eigen::VectorXd OdometryBetweenFactor::evaluate(const Values& values,
                                                std::vector<Eigen::MatrixXd>* jacobians) const {
  const Pose3& prev = values.atPose(keys()[0]);
  const Pose3& curr = values.atPose(keys()[1]);
  const Pose3 error = odom_.inverse() * prev.inverse() * curr;
  const Twist r = error.log();
  if (jacobians) {
    const Matrix6 jr_inv_adj = se3RightJacobianInverse(r) * curr.inverse().adjoint();
    jacobians->resize(2);
    (*jacobians)[0] = -jr_inv_adj;
    (*jacobians)[1] = jr_inv_adj;
  }
  return r.vector();
}

Eigen::VectorXd TernaryMotionFactor::evaluate(const Values& values,
                                              std::vector<Eigen::MatrixXd>* jacobians) const {
  const Pose3& h = values.atPose(keys()[0]);
  const Vector3& m_prev = values.atPoint(keys()[1]);
  const Vector3& m_curr = values.atPoint(keys()[2]);
  if (jacobians) {
    jacobians->resize(3);
    (*jacobians)[0] = -transformJacobian(h * m_prev);
    (*jacobians)[1] = -h.rotationMatrix();
    (*jacobians)[2] = Matrix3::Identity();
  }
  return ternaryMotionResidual(h, m_prev, m_curr);
}

Eigen::VectorXd MotionSmoothingFactor::evaluate(const Values& values,
                                                std::vector<Eigen::MatrixXd>* jacobians) const {
  const Pose3& prev = values.atPose(keys()[0]);
  const Pose3& curr = values.atPose(keys()[1]);
  const Twist r = (prev.inverse() * curr).log();
  if (jacobians) {
    const Matrix6 jr_inv_adj = se3RightJacobianInverse(r) * curr.inverse().adjoint();
    jacobians->resize(2);
    (*jacobians)[0] = -jr_inv_adj;
    (*jacobians)[1] = jr_inv_adj;
  }
  return r.vector();
}

Eigen::VectorXd QuaternaryMotionFactor::evaluate(const Values& values,
                                                 std::vector<Eigen::MatrixXd>* jacobians) const {
  const Pose3& l_prev = values.atPose(keys()[0]);
  const Pose3& l_curr = values.atPose(keys()[1]);
  const Vector3& m_prev = values.atPoint(keys()[2]);
  const Vector3& m_curr = values.atPoint(keys()[3]);
  const Pose3 h = l_curr * l_prev.inverse();
  if (jacobians) {
    const Matrix3 rh = h.rotationMatrix();
    // Perturbing L_curr left-perturbs H; perturbing L_prev right-perturbs it:
    // H(d) = H exp(-d), so d(H(d) m)/dd = [rh skew(m), -rh].
    Eigen::Matrix<double, 3, 6> j_prev;
    j_prev.leftCols<3>() = -rh * skew(m_prev);
    j_prev.rightCols<3>() = rh;
    jacobians->resize(4);
    (*jacobians)[0] = j_prev;
    (*jacobians)[1] = -transformJacobian(h * m_prev);
    (*jacobians)[2] = -rh;
    (*jacobians)[3] = Matrix3::Identity();
  }
  return ternaryMotionResidual(h, m_prev, m_curr);
}

Eigen::VectorXd PoseSmoothingFactor::evaluate(const Values& values,
                                              std::vector<Eigen::MatrixXd>* jacobians) const {
  const Pose3& l_a = values.atPose(keys()[0]);
  const Pose3& l_b = values.atPose(keys()[1]);
  const Pose3& l_c = values.atPose(keys()[2]);
  const Pose3 m = l_c * l_b.inverse();
  const Pose3 error = l_a * l_b.inverse() * m;
  const Twist r = error.log();
  if (jacobians) {
    const Matrix6 jr_inv = se3RightJacobianInverse(r);
    const Matrix6 adj_m_inv = m.inverse().adjoint();
    jacobians->resize(3);
    (*jacobians)[0] = se3LeftJacobianInverse(r);
    (*jacobians)[1] = -jr_inv * (adj_m_inv + Matrix6::Identity());
    (*jacobians)[2] = jr_inv * adj_m_inv;
  }
  return r.vector();
}

Eigen::VectorXd ProjectionFactor::evaluate(const Values& values,
                                           std::vector<Eigen::MatrixXd>* jacobians) const {
  const Pose3& x = values.atPose(keys()[0]);
  const Vector3& m = values.atPoint(keys()[1]);
  const Point3 local = x.inverse() * m;
  if (local.z() <= 0.0) throw BehindCameraError();
  if (jacobians) {
    const Eigen::Matrix<double, 2, 3> dpi = cam_.projectionJacobian(local);
    jacobians->resize(2);
    (*jacobians)[0] = -dpi * invTransformJacobian(x, m);
    (*jacobians)[1] = -dpi * x.rotationMatrix().transpose();
  }
  return z2d_ - cam_.projectLocal(local).pixel;
}

Eigen::VectorXd DepthFactor::evaluate(const Values& values,
                                      std::vector<Eigen::MatrixXd>* jacobians) const {
  const Pose3& x = values.atPose(keys()[0]);
  const Vector3& m = values.atPoint(keys()[1]);
  if (jacobians) {
    jacobians->resize(2);
    (*jacobians)[0] = invTransformJacobian(x, m).row(2);
    (*jacobians)[1] = x.rotationMatrix().transpose().row(2);
  }
  Eigen::VectorXd r(1);
  r[0] = (x.inverse() * m).z() - depth_;
  return r;
}

Eigen::VectorXd FixedPointProjectionFactor::evaluate(
    const Values& values, std::vector<Eigen::MatrixXd>* jacobians) const {
  const Pose3& x = values.atPose(keys()[0]);
  const Point3 local = x.inverse() * m_;
  if (local.z() <= 0.0) throw BehindCameraError();
  if (jacobians) {
    jacobians->resize(1);
    (*jacobians)[0] = -cam_.projectionJacobian(local) * invTransformJacobian(x, m_);
  }
  return z2d_ - cam_.projectLocal(local).pixel;
}

Eigen::VectorXd FlowReprojectionFactor::evaluate(const Values& values,
                                                 std::vector<Eigen::MatrixXd>* jacobians) const {
  const Pose3& t = values.atPose(keys()[0]);
  const Vector2& flow = values.atFlow(keys()[1]);
  const Point3 local = invert_pose_ ? t.inverse() * m_ : t * m_;
  if (local.z() <= 0.0) throw BehindCameraError();
  if (jacobians) {
    const Eigen::Matrix<double, 2, 3> dpi = cam_.projectionJacobian(local);
    jacobians->resize(2);
    (*jacobians)[0] =
        invert_pose_ ? (-dpi * invTransformJacobian(t, m_)).eval()
                     : (-dpi * transformJacobian(local)).eval();
    (*jacobians)[1] = Eigen::Matrix2d::Identity();
  }
  return z2d_prev_ + flow - cam_.projectLocal(local).pixel;
}

Eigen::VectorXd PosePriorFactor::evaluate(const Values& values,
                                          std::vector<Eigen::MatrixXd>* jacobians) const {
  const Pose3& value = values.atPose(keys()[0]);
  const Twist r = (prior_.inverse() * value).log();
  if (jacobians) {
    jacobians->resize(1);
    (*jacobians)[0] = se3RightJacobianInverse(r) * value.inverse().adjoint();
  }
  return r.vector();
}

Eigen::VectorXd FlowPriorFactor::evaluate(const Values& values,
                                          std::vector<Eigen::MatrixXd>* jacobians) const {
  if (jacobians) {
    jacobians->resize(1);
    (*jacobians)[0] = Eigen::Matrix2d::Identity();
  }
  return values.atFlow(keys()[0]) - measured_;
}

}  // namespace motslam
