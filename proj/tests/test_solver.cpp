#include <doctest.h>

#include <sstream>

#include <Eigen/Dense>

#include "motslam/backend.hpp"
#include "motslam/io.hpp"
#include "test_support.hpp"

using namespace motslam;
using namespace motslam::testing;

namespace {

// Scalar factor (x - target) on the x component of a point variable; the
// classic linear toy problem.
class AxisTargetFactor : public Factor {
 public:
  AxisTargetFactor(VariableKey key, double target, NoiseModel noise)
      : Factor({key}, std::move(noise)), target_(target) {}
  Eigen::VectorXd evaluate(const Values& values,
                           std::vector<Eigen::MatrixXd>* jacobians) const override {
    if (jacobians) {
      jacobians->resize(1);
      (*jacobians)[0] = Eigen::MatrixXd::Zero(1, 3);
      (*jacobians)[0](0, 0) = 1.0;
    }
    Eigen::VectorXd r(1);
    r[0] = values.atPoint(keys()[0]).x() - target_;
    return r;
  }
  const char* name() const override { return "AxisTarget"; }

 private:
  double target_;
};

}  // namespace

TEST_CASE("graph structure checks") {
  FactorGraph graph;
  Values values;
  values.insert(VariableKey::cameraPose(0), Pose3::identity());
  // Unconstrained variable rejected.
  CHECK_THROWS_AS(graph.checkStructure(values), GraphStructureError);

  graph.emplace<PosePriorFactor>(VariableKey::cameraPose(1), Pose3::identity(),
                                 NoiseModel::isotropic(6, 1.0));
  // Missing variable rejected.
  CHECK_THROWS_AS(graph.checkStructure(values), GraphStructureError);
}

TEST_CASE("linearize: single prior at its prior") {
  FactorGraph graph;
  Values values;
  values.insert(VariableKey::cameraPose(0), Pose3::identity());
  graph.emplace<PosePriorFactor>(VariableKey::cameraPose(0), Pose3::identity(),
                                 NoiseModel::isotropic(6, 1.0));
  const LinearizedSystem sys = linearize(graph, values);
  CHECK(sys.residual.norm() == 0.0);
  CHECK(maxAbs(Eigen::MatrixXd(sys.jacobian) - Matrix6::Identity()) < 1e-12);
}

TEST_CASE("linearize: cost identity and system shape") {
  std::mt19937_64 rng(31);
  FactorGraph graph;
  Values values;
  const auto x0 = VariableKey::cameraPose(0);
  const auto x1 = VariableKey::cameraPose(1);
  const auto p0 = VariableKey::staticPoint(1);
  values.insert(x0, randomPose(rng, 0.3, 1.0));
  values.insert(x1, randomPose(rng, 0.3, 1.0));
  values.insert(p0, Vector3(randomVector(rng, 3.0)));
  graph.emplace<PosePriorFactor>(x0, randomPose(rng, 0.3, 1.0), NoiseModel::isotropic(6, 0.1));
  graph.emplace<OdometryBetweenFactor>(x0, x1, randomPose(rng, 0.3, 1.0),
                                       NoiseModel::isotropic(6, 0.05));
  graph.emplace<PointMeasurementFactor>(x1, p0, randomVector(rng, 3.0),
                                        NoiseModel::isotropic(3, 0.02));

  const LinearizedSystem sys = linearize(graph, values);
  CHECK(sys.jacobian.rows() == 6 + 6 + 3);
  CHECK(sys.jacobian.cols() == 6 + 6 + 3);

  // Whitened residual norm equals the direct robust cost sum.
  const double direct = totalCost(graph, values);
  CHECK(sys.residual.squaredNorm() == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("robust weight") {
  CHECK(huberWeight(1.345, 0.0) == 1.0);
  CHECK(huberWeight(1.345, 1.345) == 1.0);
  CHECK(huberWeight(1.345, 2.0 * 1.345) == doctest::Approx(0.5));
  // IRLS scaling shows up in the linearized residual.
  FactorGraph graph;
  Values values;
  values.insert(VariableKey::staticPoint(1), Vector3(4.0, 0.0, 0.0));
  graph.emplace<AxisTargetFactor>(VariableKey::staticPoint(1), 0.0,
                                  NoiseModel::isotropic(1, 1.0).robust(1.0));
  const LinearizedSystem sys = linearize(graph, values);
  CHECK(sys.factor_weights[0] == doctest::Approx(0.25));
  CHECK(sys.residual[0] == doctest::Approx(std::sqrt(0.25) * 4.0));
}

TEST_CASE("already-optimal graph converges immediately") {
  FactorGraph graph;
  Values values;
  values.insert(VariableKey::cameraPose(0), Pose3::identity());
  graph.emplace<PosePriorFactor>(VariableKey::cameraPose(0), Pose3::identity(),
                                 NoiseModel::isotropic(6, 1.0));
  const SolveResult res = optimize(graph, values, SolverConfig{});
  CHECK(res.stats.iterations <= 1);
  CHECK(res.stats.final_cost == res.stats.initial_cost);
  CHECK((res.stats.reason == ConvergenceReason::GradientNorm));
}

TEST_CASE("linear toy problem solves exactly in one iteration") {
  FactorGraph graph;
  Values values;
  values.insert(VariableKey::staticPoint(1), Vector3(0.0, 1.0, 2.0));
  graph.emplace<AxisTargetFactor>(VariableKey::staticPoint(1), 5.0, NoiseModel::isotropic(1, 1.0));
  // Pin the otherwise-free y/z components with a consistent linear factor.
  values.insert(VariableKey::cameraPose(0), Pose3::identity());
  graph.emplace<PosePriorFactor>(VariableKey::cameraPose(0), Pose3::identity(),
                                 NoiseModel::isotropic(6, 1e-3));
  graph.emplace<PointMeasurementFactor>(VariableKey::cameraPose(0), VariableKey::staticPoint(1),
                                        Vector3(5.0, 1.0, 2.0), NoiseModel::isotropic(3, 1.0));

  const SolveResult res = optimize(graph, values, SolverConfig{});
  CHECK(res.stats.iterations == 1);
  CHECK(std::abs(res.values.atPoint(VariableKey::staticPoint(1)).x() - 5.0) < 1e-12);
  CHECK(std::abs(res.values.atPoint(VariableKey::staticPoint(1)).y() - 1.0) < 1e-12);
}

TEST_CASE("accepted steps never increase the cost") {
  std::mt19937_64 rng(32);
  FactorGraph graph;
  Values values;
  Pose3 truth;
  values.insert(VariableKey::cameraPose(0), Pose3::identity());
  graph.emplace<PosePriorFactor>(VariableKey::cameraPose(0), Pose3::identity(),
                                 NoiseModel::isotropic(6, 1e-4));
  for (int k = 1; k < 6; ++k) {
    const Pose3 odom = randomPose(rng, 0.3, 0.6);
    truth = truth * odom;
    values.insert(VariableKey::cameraPose(k), truth * randomPose(rng, 0.2, 0.3));
    graph.emplace<OdometryBetweenFactor>(VariableKey::cameraPose(k - 1),
                                         VariableKey::cameraPose(k), odom,
                                         NoiseModel::isotropic(6, 0.01));
    graph.emplace<PosePriorFactor>(VariableKey::cameraPose(k), truth * randomPose(rng, 0.05, 0.1),
                                   NoiseModel::isotropic(6, 0.5));
  }
  const SolveResult res = optimize(graph, values, SolverConfig{});
  for (std::size_t i = 1; i < res.stats.cost_trace.size(); ++i) {
    CHECK(res.stats.cost_trace[i] <= res.stats.cost_trace[i - 1]);
  }
  CHECK(res.stats.final_cost < res.stats.initial_cost);
}

TEST_CASE("gauge-fixed graph reaches its unique minimum from random starts") {
  // Single prior + relative factors; 100 random perturbations <= 0.1 tangent.
  std::mt19937_64 scenario_rng(33);
  std::vector<Pose3> truth(4);
  std::vector<Pose3> odom;
  truth[0] = Pose3::identity();
  for (int k = 1; k < 4; ++k) {
    odom.push_back(randomPose(scenario_rng, 0.4, 0.8));
    truth[k] = truth[k - 1] * odom.back();
  }
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    FactorGraph graph;
    Values values;
    values.insert(VariableKey::cameraPose(0), truth[0]);
    graph.emplace<PosePriorFactor>(VariableKey::cameraPose(0), truth[0],
                                   NoiseModel::isotropic(6, 1e-6));
    for (int k = 1; k < 4; ++k) {
      values.insert(VariableKey::cameraPose(k),
                    Pose3::exp(randomTwist(rng, 0.05, 0.05)) * truth[k]);
      graph.emplace<OdometryBetweenFactor>(VariableKey::cameraPose(k - 1),
                                           VariableKey::cameraPose(k), odom[k - 1],
                                           NoiseModel::isotropic(6, 0.01));
    }
    const SolveResult res = optimize(graph, values, SolverConfig{});
    for (int k = 0; k < 4; ++k) {
      CHECK(res.values.atPose(VariableKey::cameraPose(k)).isApprox(truth[k], 1e-6));
    }
  }
}

TEST_CASE("sparse solve equals dense solve") {
  // A moderately coupled graph (< 50 variables); compare the damped
  // normal-equation solutions.
  std::mt19937_64 rng(34);
  FactorGraph graph;
  Values values;
  values.insert(VariableKey::cameraPose(0), Pose3::identity());
  graph.emplace<PosePriorFactor>(VariableKey::cameraPose(0), Pose3::identity(),
                                 NoiseModel::isotropic(6, 1e-3));
  for (int k = 1; k < 8; ++k) {
    values.insert(VariableKey::cameraPose(k), randomPose(rng, 0.3, 1.0));
    graph.emplace<OdometryBetweenFactor>(VariableKey::cameraPose(k - 1),
                                         VariableKey::cameraPose(k), randomPose(rng, 0.3, 1.0),
                                         NoiseModel::isotropic(6, 0.05));
  }
  for (int i = 0; i < 30; ++i) {
    const VariableKey pk = VariableKey::staticPoint(i + 1);
    values.insert(pk, Vector3(randomVector(rng, 4.0)));
    for (int k = 0; k < 8; k += 3) {
      graph.emplace<PointMeasurementFactor>(VariableKey::cameraPose(k), pk,
                                            randomVector(rng, 4.0),
                                            NoiseModel::isotropic(3, 0.1));
    }
  }

  const LinearizedSystem sys = linearize(graph, values);
  const Eigen::SparseMatrix<double> h_sparse =
      Eigen::SparseMatrix<double>(sys.jacobian.transpose()) * sys.jacobian;
  const Eigen::VectorXd g = sys.jacobian.transpose() * sys.residual;

  const double lambda = 1e-4;
  Eigen::SparseMatrix<double> damped = h_sparse;
  for (int c = 0; c < damped.cols(); ++c) damped.coeffRef(c, c) += lambda;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> chol(damped);
  REQUIRE(chol.info() == Eigen::Success);
  const Eigen::VectorXd sparse_delta = chol.solve(-g);

  Eigen::MatrixXd h_dense = Eigen::MatrixXd(h_sparse);
  h_dense.diagonal().array() += lambda;
  const Eigen::VectorXd dense_delta = h_dense.ldlt().solve(-g);

  CHECK((sparse_delta - dense_delta).norm() / std::max(1.0, dense_delta.norm()) < 1e-8);
}

TEST_CASE("noise-free back-end graph recovers ground truth from a perturbed start") {
  const Dataset data = makeDataset(standardScene(10, 2, 40, 30, 35));
  FrontendParams fp;
  const Frontend fe_runner(fp, data.config.camera);
  const FrontendOutput fe = fe_runner.run(data.measurements);

  BackendParams params;
  WindowProblem wp = buildWcme(fe, 0, 9, params);

  std::mt19937_64 rng(36);
  Values perturbed;
  for (const auto& [key, value] : wp.initial) {
    if (key.kind == VariableKind::CameraPose && key.frame == 0) {
      perturbed.insert(key, value);  // keep the gauge anchor
    } else if (std::holds_alternative<Pose3>(value)) {
      perturbed.insert(key, Pose3::exp(randomTwist(rng, 0.05, 0.05)) * std::get<Pose3>(value));
    } else if (std::holds_alternative<Vector3>(value)) {
      perturbed.insert(key, Vector3(std::get<Vector3>(value) + randomVector(rng, 0.05)));
    } else {
      perturbed.insert(key, value);
    }
  }

  const SolveResult res = optimize(wp.graph, perturbed, params.solver);
  CHECK(res.stats.final_cost < 1e-16);
  for (FrameId k = 0; k < 10; ++k) {
    CHECK(res.values.atPose(VariableKey::cameraPose(k))
              .isApprox(data.scene.camera_trajectory[k], 1e-6));
  }
  for (const auto& [id, obj] : data.scene.objects) {
    for (FrameId k = 1; k < 10; ++k) {
      CHECK(res.values.atPose(VariableKey::objectMotion(id, k)).isApprox(obj.motionAt(k), 1e-6));
    }
  }
}

TEST_CASE("graph dump lists factors and whitened residuals") {
  FactorGraph graph;
  Values values;
  values.insert(VariableKey::cameraPose(0), Pose3::identity());
  graph.emplace<PosePriorFactor>(VariableKey::cameraPose(0),
                                 Pose3::exp(Twist(Vector3::Zero(), Vector3(1.0, 0.0, 0.0))),
                                 NoiseModel::isotropic(6, 0.5));
  std::ostringstream os;
  dumpGraph(graph, values, os);
  const std::string text = os.str();
  CHECK(text.find("PosePrior") != std::string::npos);
  CHECK(text.find("X(0)") != std::string::npos);
  CHECK(text.find("-2") != std::string::npos);  // whitened -1 m / 0.5 sigma
}
