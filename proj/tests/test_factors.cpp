#include <doctest.h>

#include "test_support.hpp"

using namespace motslam;
using namespace motslam::testing;

namespace {

const CameraModel kCam(500.0, 500.0, 320.0, 240.0, 640, 480, 0.1, 100.0);

Values poseAndPoint(const Pose3& x, const Vector3& m, const VariableKey& xk,
                    const VariableKey& mk) {
  Values v;
  v.insert(xk, x);
  v.insert(mk, m);
  return v;
}

}  // namespace

TEST_CASE("point measurement residual") {
  const Vector3 z(1.0, 2.0, 3.0);
  CHECK(pointMeasurementResidual(Pose3::identity(), z, z).norm() == 0.0);

  // Perturbing the point with identity camera shifts the residual oppositely.
  const double eps = 0.01;
  const Vector3 r =
      pointMeasurementResidual(Pose3::identity(), z + Vector3(eps, 0.0, 0.0), z);
  CHECK((r - Vector3(-eps, 0.0, 0.0)).norm() < 1e-15);

  // Noise-free simulated measurements evaluate to zero.
  const Dataset data = makeDataset(standardScene(6, 1, 20, 10, 1));
  for (FrameId k = 0; k < 6; ++k) {
    const Pose3& x = data.scene.camera_trajectory[k];
    for (const auto& m : data.measurements.frames[k].staticSet()) {
      const Vector3 world = x * m->local;
      CHECK(pointMeasurementResidual(x, world, m->local).norm() < 1e-12);
    }
  }
}

TEST_CASE("odometry between residual") {
  std::mt19937_64 rng(2);
  const Pose3 prev = randomPose(rng);
  const Pose3 odom = randomPose(rng, 0.5, 1.0);
  CHECK(odometryBetweenResidual(prev, prev * odom, odom).norm() < 1e-12);

  const Twist xi = randomTwist(rng, 0.3, 0.5);
  const Vector6 r = odometryBetweenResidual(prev, prev * Pose3::exp(xi), Pose3::identity());
  CHECK((r - xi.vector()).norm() < 1e-9);

  const Pose3 flip = prev * Pose3::exp(Twist(Vector3(0.0, 0.0, M_PI), Vector3::Zero()));
  CHECK_THROWS_AS((void)odometryBetweenResidual(prev, flip, Pose3::identity()), AngleNearPiError);
}

TEST_CASE("ternary motion residual") {
  const Vector3 m(0.5, -0.2, 4.0);
  CHECK(ternaryMotionResidual(Pose3::identity(), m, m).norm() == 0.0);

  const Vector3 t(0.1, 0.2, -0.3);
  const Pose3 shift = Pose3::exp(Twist(Vector3::Zero(), t));
  CHECK((ternaryMotionResidual(shift, m, m) + t).norm() < 1e-15);

  const Dataset data = makeDataset(standardScene(6, 1, 20, 5, 3));
  const GtObject& obj = data.scene.objects.begin()->second;
  for (FrameId k = 1; k < 6; ++k) {
    for (std::size_t i = 0; i < obj.body_points.size(); ++i) {
      CHECK(ternaryMotionResidual(obj.motionAt(k), obj.worldPoint(i, k - 1), obj.worldPoint(i, k))
                .norm() < 1e-12);
    }
  }
}

TEST_CASE("motion smoothing residual") {
  std::mt19937_64 rng(4);
  const Pose3 h = randomPose(rng);
  CHECK(motionSmoothingResidual(h, h).norm() < 1e-12);

  const Twist xi = randomTwist(rng, 0.2, 0.4);
  CHECK((motionSmoothingResidual(h, h * Pose3::exp(xi)) - xi.vector()).norm() < 1e-9);

  // Constant local motion: world motions coincide, residual is exactly zero.
  const Pose3 l0 = randomPose(rng);
  const Pose3 c = randomPose(rng, 0.4, 0.8);
  const Pose3 l1 = l0 * c;
  const Pose3 l2 = l1 * c;
  CHECK(motionSmoothingResidual(l1 * l0.inverse(), l2 * l1.inverse()).norm() < 1e-12);
}

TEST_CASE("quaternary equals ternary under the implied motion") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Pose3 l_prev = randomPose(rng);
    const Pose3 l_curr = randomPose(rng);
    const Vector3 m_prev = randomVector(rng, 5.0);
    const Vector3 m_curr = randomVector(rng, 5.0);
    const Vector3 a = quaternaryMotionResidual(l_prev, l_curr, m_prev, m_curr);
    const Vector3 b = ternaryMotionResidual(l_curr * l_prev.inverse(), m_prev, m_curr);
    CHECK((a - b).norm() < 1e-12);
  }
  const Pose3 l = randomPose(rng);
  const Vector3 m = randomVector(rng, 3.0);
  CHECK(quaternaryMotionResidual(l, l, m, m).norm() < 1e-12);
}

TEST_CASE("pose smoothing residual") {
  CHECK(poseSmoothingResidual(Pose3::identity(), Pose3::identity(), Pose3::identity()).norm() ==
        0.0);

  // Poses propagated by one constant world motion have zero smoothing residual.
  std::mt19937_64 rng(6);
  const Pose3 h = randomPose(rng, 0.5, 1.0);
  const Pose3 l0 = randomPose(rng);
  const Pose3 l1 = h * l0;
  const Pose3 l2 = h * l1;
  CHECK(poseSmoothingResidual(l0, l1, l2).norm() < 1e-12);

  for (int i = 0; i < 100; ++i) {
    const Pose3 a = randomPose(rng, 0.4, 1.0);
    const Pose3 b = randomPose(rng, 0.4, 1.0);
    const Pose3 c = randomPose(rng, 0.4, 1.0);
    const Vector6 direct = poseSmoothingResidual(a, b, c);
    const Vector6 via_motions = motionSmoothingResidual(b * a.inverse(), c * b.inverse());
    CHECK((direct - via_motions).norm() < 1e-12);
  }
}

TEST_CASE("flow reprojection residual") {
  // Zero at a noise-free simulated configuration.
  const Dataset data = makeDataset(standardScene(5, 1, 20, 15, 7));
  for (FrameId k = 1; k < 5; ++k) {
    const Pose3& x_prev = data.scene.camera_trajectory[k - 1];
    const Pose3& x_curr = data.scene.camera_trajectory[k];
    for (const auto& m : data.measurements.frames[k].staticSet()) {
      if (!m->flow) continue;
      const TrackedMeasurement* prev = data.measurements.frames[k - 1].find(m->tracklet);
      const Point3 world = x_prev * prev->local;
      const Vector2 r =
          flowReprojectionResidual(x_curr, true, world, prev->pixel, *m->flow, kCam);
      CHECK(r.norm() < 1e-9);
    }
  }

  // Zero flow, identity pose: residual reduces to z_prev - pi(m).
  const Point3 m(0.4, -0.3, 5.0);
  const Vector2 z_prev(100.0, 200.0);
  const Vector2 r =
      flowReprojectionResidual(Pose3::identity(), false, m, z_prev, Vector2::Zero(), kCam);
  CHECK((r - (z_prev - kCam.projectLocal(m).pixel)).norm() < 1e-12);
}

TEST_CASE("prior residual and strong-prior dominance") {
  std::mt19937_64 rng(8);
  const Pose3 p = randomPose(rng);
  CHECK(priorResidual(p, p).norm() < 1e-12);

  const Twist xi = randomTwist(rng, 0.3, 0.5);
  CHECK((priorResidual(p * Pose3::exp(xi), p) - xi.vector()).norm() < 1e-9);

  // A 1 cm offset under the sigma = 1e-4 prior outweighs a 1 px reprojection
  // residual under sigma = 1 px.
  const NoiseModel prior_noise = NoiseModel::isotropic(6, 1e-4);
  const NoiseModel pixel_noise = NoiseModel::isotropic(2, 1.0);
  Vector6 offset = Vector6::Zero();
  offset[5] = 0.01;
  const double prior_cost = prior_noise.whiten(offset).squaredNorm();
  const double pixel_cost = pixel_noise.whiten(Vector2(1.0, 0.0)).squaredNorm();
  CHECK(prior_cost > pixel_cost);
  CHECK(prior_cost / pixel_cost == doctest::Approx(1e4).epsilon(1e-9));
}

TEST_CASE("noise model validation") {
  Eigen::Matrix2d not_psd;
  not_psd << 1.0, 2.0, 2.0, 1.0;  // indefinite
  CHECK_THROWS_AS(NoiseModel::covariance(not_psd), NonPsdCovarianceError);
  CHECK_THROWS_AS(NoiseModel::isotropic(3, 0.0), NonPsdCovarianceError);
  CHECK_THROWS_AS(NoiseModel::isotropic(3, 1.0).robust(-1.0), NonPsdCovarianceError);

  Eigen::Matrix2d psd;
  psd << 2.0, 0.5, 0.5, 1.0;
  const NoiseModel nm = NoiseModel::covariance(psd);
  // whiten^T whiten == Sigma^{-1}
  const Eigen::Vector2d r(0.3, -0.7);
  CHECK(nm.whiten(r).squaredNorm() ==
        doctest::Approx((r.transpose() * psd.inverse() * r)(0, 0)).epsilon(1e-12));
}

TEST_CASE("huber kernel shape") {
  const double k = 1.345;
  const NoiseModel robust = NoiseModel::isotropic(1, 1.0).robust(k);
  // Quadratic below, linear above, continuous and C1 at the threshold.
  CHECK(robust.robustCost(0.5) == doctest::Approx(0.25));
  CHECK(robust.robustCost(k) == doctest::Approx(k * k));
  const double eps = 1e-7;
  CHECK(robust.robustCost(k + eps) - robust.robustCost(k) == doctest::Approx(2.0 * k * eps));
  CHECK(robust.robustCost(3.0) == doctest::Approx(k * (2.0 * 3.0 - k)));
  CHECK(robust.robustWeight(0.0) == 1.0);
  CHECK(robust.robustWeight(k) == 1.0);
  CHECK(robust.robustWeight(2.0 * k) == doctest::Approx(0.5));
}

TEST_CASE("point measurement residual is invariant to a common frame change") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    const Pose3 x = randomPose(rng);
    const Vector3 m = randomVector(rng, 5.0);
    const Vector3 z = randomVector(rng, 5.0);
    const Pose3 w = randomPose(rng);  // world-frame change applied to x and m
    const Vector3 r0 = pointMeasurementResidual(x, m, z);
    const Vector3 r1 = pointMeasurementResidual(w * x, w * m, z);
    CHECK((r0 - r1).norm() < 1e-10);

    // The 3D motion residual is frame-covariant, not invariant: translating
    // the world moves it in general (the anchor-distance scaling effect).
    const Pose3 h = randomPose(rng, 0.5, 1.0);
    const Vector3 a = randomVector(rng, 5.0);
    const Vector3 b = randomVector(rng, 5.0);
    const Pose3 shift = Pose3::exp(Twist(Vector3::Zero(), Vector3(10.0, 0.0, 0.0)));
    const Vector3 s0 = ternaryMotionResidual(h, a, b);
    const Vector3 s1 = ternaryMotionResidual(changeMotionFrame(h, shift), shift * a, shift * b);
    CHECK((s1 - shift.rotationMatrix() * s0).norm() < 1e-9);
  }
}

// ---------------------------------------------------------------------------
// Jacobian contract: every analytic block matches central finite differences
// within 1e-5 relative over >= 100 random configurations per factor.
// ---------------------------------------------------------------------------

TEST_CASE("jacobians: point measurement") {
  std::mt19937_64 rng(100);
  const NoiseModel noise = NoiseModel::isotropic(3, 1.0);
  for (int i = 0; i < 120; ++i) {
    const VariableKey xk = VariableKey::cameraPose(0);
    const VariableKey mk = VariableKey::staticPoint(1);
    const PointMeasurementFactor f(xk, mk, randomVector(rng, 3.0), noise);
    const Values v = poseAndPoint(randomPose(rng), randomVector(rng, 5.0), xk, mk);
    CHECK(jacobianError(f, v) < 1e-5);
  }
}

TEST_CASE("jacobians: odometry between") {
  std::mt19937_64 rng(101);
  const NoiseModel noise = NoiseModel::isotropic(6, 1.0);
  for (int i = 0; i < 120; ++i) {
    Values v;
    v.insert(VariableKey::cameraPose(0), randomPose(rng));
    v.insert(VariableKey::cameraPose(1), randomPose(rng));
    const OdometryBetweenFactor f(VariableKey::cameraPose(0), VariableKey::cameraPose(1),
                                  randomPose(rng, 0.5, 1.0), noise);
    CHECK(jacobianError(f, v) < 1e-5);
  }
}

TEST_CASE("jacobians: ternary motion") {
  std::mt19937_64 rng(102);
  const NoiseModel noise = NoiseModel::isotropic(3, 1.0);
  for (int i = 0; i < 120; ++i) {
    Values v;
    v.insert(VariableKey::objectMotion(1, 1), randomPose(rng));
    v.insert(VariableKey::dynamicPoint(1, 0), Vector3(randomVector(rng, 5.0)));
    v.insert(VariableKey::dynamicPoint(1, 1), Vector3(randomVector(rng, 5.0)));
    const TernaryMotionFactor f(VariableKey::objectMotion(1, 1), VariableKey::dynamicPoint(1, 0),
                                VariableKey::dynamicPoint(1, 1), noise);
    CHECK(jacobianError(f, v) < 1e-5);
  }
}

TEST_CASE("jacobians: motion smoothing") {
  std::mt19937_64 rng(103);
  const NoiseModel noise = NoiseModel::isotropic(6, 1.0);
  for (int i = 0; i < 120; ++i) {
    Values v;
    v.insert(VariableKey::objectMotion(1, 1), randomPose(rng, 0.8, 2.0));
    v.insert(VariableKey::objectMotion(1, 2), randomPose(rng, 0.8, 2.0));
    const MotionSmoothingFactor f(VariableKey::objectMotion(1, 1),
                                  VariableKey::objectMotion(1, 2), noise);
    CHECK(jacobianError(f, v) < 1e-5);
  }
}

TEST_CASE("jacobians: quaternary motion") {
  std::mt19937_64 rng(104);
  const NoiseModel noise = NoiseModel::isotropic(3, 1.0);
  for (int i = 0; i < 120; ++i) {
    Values v;
    v.insert(VariableKey::objectPose(1, 0), randomPose(rng));
    v.insert(VariableKey::objectPose(1, 1), randomPose(rng));
    v.insert(VariableKey::dynamicPoint(1, 0), Vector3(randomVector(rng, 5.0)));
    v.insert(VariableKey::dynamicPoint(1, 1), Vector3(randomVector(rng, 5.0)));
    const QuaternaryMotionFactor f(VariableKey::objectPose(1, 0), VariableKey::objectPose(1, 1),
                                   VariableKey::dynamicPoint(1, 0),
                                   VariableKey::dynamicPoint(1, 1), noise);
    CHECK(jacobianError(f, v) < 1e-5);
  }
}

TEST_CASE("jacobians: pose smoothing") {
  std::mt19937_64 rng(105);
  const NoiseModel noise = NoiseModel::isotropic(6, 1.0);
  for (int i = 0; i < 120; ++i) {
    Values v;
    v.insert(VariableKey::objectPose(1, 0), randomPose(rng, 0.6, 1.5));
    v.insert(VariableKey::objectPose(1, 1), randomPose(rng, 0.6, 1.5));
    v.insert(VariableKey::objectPose(1, 2), randomPose(rng, 0.6, 1.5));
    const PoseSmoothingFactor f(VariableKey::objectPose(1, 0), VariableKey::objectPose(1, 1),
                                VariableKey::objectPose(1, 2), noise);
    CHECK(jacobianError(f, v) < 1e-5);
  }
}

TEST_CASE("jacobians: projection and fixed-point projection") {
  std::mt19937_64 rng(106);
  const NoiseModel noise = NoiseModel::isotropic(2, 1.0);
  int done = 0;
  while (done < 120) {
    const Pose3 x = randomPose(rng, 0.3, 1.0);
    const Vector3 m = x * Point3(randomVector(rng, 2.0) + Vector3(0.0, 0.0, 6.0));
    Values v;
    v.insert(VariableKey::cameraPose(0), x);
    v.insert(VariableKey::dynamicPoint(1, 0), m);
    const ProjectionFactor f(VariableKey::cameraPose(0), VariableKey::dynamicPoint(1, 0),
                             Vector2(300.0, 200.0), kCam, noise);
    const FixedPointProjectionFactor g(VariableKey::cameraPose(0), m, Vector2(310.0, 250.0), kCam,
                                       noise);
    CHECK(jacobianError(f, v) < 1e-5);
    CHECK(jacobianError(g, v) < 1e-5);
    ++done;
  }
}

TEST_CASE("jacobians: flow reprojection, both stages") {
  std::mt19937_64 rng(107);
  const NoiseModel noise = NoiseModel::isotropic(2, 1.0);
  for (int i = 0; i < 120; ++i) {
    const bool invert = i % 2 == 0;
    const Pose3 t = randomPose(rng, 0.3, 1.0);
    const Point3 local = randomVector(rng, 2.0) + Vector3(0.0, 0.0, 8.0);
    const Point3 m = invert ? t * local : t.inverse() * local;
    Values v;
    v.insert(VariableKey::cameraPose(0), t);
    v.insert(VariableKey::flow(1, 0), Vector2(randomVector(rng, 3.0).head<2>()));
    const FlowReprojectionFactor f(VariableKey::cameraPose(0), VariableKey::flow(1, 0), invert, m,
                                   Vector2(320.0, 240.0), kCam, noise);
    CHECK(jacobianError(f, v) < 1e-5);
  }
}

TEST_CASE("jacobians: pose prior and flow prior") {
  std::mt19937_64 rng(108);
  for (int i = 0; i < 120; ++i) {
    Values v;
    v.insert(VariableKey::cameraPose(0), randomPose(rng, 0.8, 2.0));
    const PosePriorFactor f(VariableKey::cameraPose(0), randomPose(rng, 0.8, 2.0),
                            NoiseModel::isotropic(6, 1.0));
    CHECK(jacobianError(f, v) < 1e-5);

    Values vf;
    vf.insert(VariableKey::flow(3, 2), Vector2(randomVector(rng, 5.0).head<2>()));
    const FlowPriorFactor g(VariableKey::flow(3, 2), Vector2(0.5, -0.25),
                            NoiseModel::isotropic(2, 0.3));
    CHECK(jacobianError(g, vf) < 1e-5);
  }
}
