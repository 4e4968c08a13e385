#include "motslam/solver.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <ostream>
#include <set>

#include <Eigen/SparseCholesky>

namespace motslam {

void FactorGraph::checkStructure(const Values& values) const {
  std::set<VariableKey> touched;
  for (const auto& factor : factors_) {
    for (const auto& key : factor->keys()) {
      if (!values.exists(key)) {
        throw GraphStructureError("factor " + std::string(factor->name()) +
                                  " references missing variable " + key.str());
      }
      touched.insert(key);
    }
  }
  for (const auto& [key, value] : values) {
    if (!touched.count(key)) {
      throw GraphStructureError("unconstrained variable " + key.str());
    }
  }
}

std::string toString(ConvergenceReason reason) {
  switch (reason) {
    case ConvergenceReason::RelativeCostDecrease: return "relative_cost_decrease";
    case ConvergenceReason::GradientNorm: return "gradient_norm";
    case ConvergenceReason::MaxIterations: return "max_iterations";
    case ConvergenceReason::StalledDamping: return "stalled_damping";
  }
  return "unknown";
}

int LinearizedSystem::columnOf(const VariableKey& key) const {
  const auto it = std::lower_bound(ordering.begin(), ordering.end(), key);
  if (it == ordering.end() || *it != key) throw GraphStructureError("key not in ordering");
  return offsets[static_cast<std::size_t>(it - ordering.begin())];
}

LinearizedSystem linearize(const FactorGraph& graph, const Values& values) {
  LinearizedSystem sys;
  sys.ordering.reserve(values.size());
  sys.offsets.reserve(values.size());
  sys.dims.reserve(values.size());
  int cols = 0;
  for (const auto& [key, value] : values) {
    sys.ordering.push_back(key);
    sys.offsets.push_back(cols);
    sys.dims.push_back(tangentDim(value));
    cols += sys.dims.back();
  }

  int rows = 0;
  for (const auto& factor : graph) rows += factor->dim();

  sys.residual.resize(rows);
  sys.factor_weights.reserve(graph.size());
  std::vector<Eigen::Triplet<double>> triplets;

  int row = 0;
  std::vector<Eigen::MatrixXd> jacobians;
  for (const auto& factor : graph) {
    const NoiseModel& noise = factor->noiseModel();
    const Eigen::VectorXd raw = factor->evaluate(values, &jacobians);
    Eigen::VectorXd wr = noise.whiten(raw);
    const double weight = noise.robustWeight(wr.norm());
    const double sw = std::sqrt(weight);
    wr *= sw;
    sys.factor_weights.push_back(weight);
    sys.residual.segment(row, factor->dim()) = wr;

    for (std::size_t i = 0; i < factor->keys().size(); ++i) {
      const Eigen::MatrixXd wj = sw * noise.whitenJacobian(jacobians[i]);
      const int col0 = sys.columnOf(factor->keys()[i]);
      // Whole blocks, including exact zeros: the sparsity pattern must depend
      // only on the graph structure so one symbolic factorization serves every
      // iteration.
      for (int r = 0; r < wj.rows(); ++r) {
        for (int c = 0; c < wj.cols(); ++c) {
          triplets.emplace_back(row + r, col0 + c, wj(r, c));
        }
      }
    }
    row += factor->dim();
  }

  sys.jacobian.resize(rows, cols);
  sys.jacobian.setFromTriplets(triplets.begin(), triplets.end());
  return sys;
}

double totalCost(const FactorGraph& graph, const Values& values) {
  double cost = 0.0;
  for (const auto& factor : graph) {
    const NoiseModel& noise = factor->noiseModel();
    cost += noise.robustCost(noise.whiten(factor->evaluate(values, nullptr)).norm());
  }
  return cost;
}

namespace {

Values retractAll(const Values& values, const LinearizedSystem& sys, const Eigen::VectorXd& delta) {
  Values out = values;
  for (std::size_t i = 0; i < sys.ordering.size(); ++i) {
    out.update(sys.ordering[i],
               retract(values.at(sys.ordering[i]), delta.segment(sys.offsets[i], sys.dims[i])));
  }
  return out;
}

}  // namespace

SolveResult optimize(const FactorGraph& graph, const Values& initial, const SolverConfig& config) {
  graph.checkStructure(initial);
  const auto t0 = std::chrono::steady_clock::now();

  SolveResult result;
  result.values = initial;
  double cost = totalCost(graph, result.values);
  result.stats.initial_cost = cost;
  result.stats.cost_trace.push_back(cost);
  result.stats.reason = ConvergenceReason::MaxIterations;

  double lambda = config.initial_lambda;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> chol;
  bool pattern_analyzed = false;  // the sparsity pattern is fixed by the graph

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    const LinearizedSystem sys = linearize(graph, result.values);
    const Eigen::VectorXd gradient = sys.jacobian.transpose() * sys.residual;
    if (!gradient.allFinite()) {
      throw SingularSystemError("non-finite linearization");
    }
    if (gradient.lpNorm<Eigen::Infinity>() < config.absolute_gradient_tol) {
      result.stats.reason = ConvergenceReason::GradientNorm;
      break;
    }

    const Eigen::SparseMatrix<double> hessian =
        Eigen::SparseMatrix<double>(sys.jacobian.transpose()) * sys.jacobian;
    Eigen::VectorXd hessian_diag(hessian.cols());
    for (int c = 0; c < hessian.cols(); ++c) {
      hessian_diag[c] = std::max(hessian.coeff(c, c), 1e-12);
    }

    bool accepted = false;
    while (true) {
      Eigen::SparseMatrix<double> damped = hessian;
      if (lambda > 0.0) {
        for (int c = 0; c < damped.cols(); ++c) {
          damped.coeffRef(c, c) += lambda * hessian_diag[c];
        }
      }
      if (!pattern_analyzed) {
        chol.analyzePattern(damped);
        pattern_analyzed = true;
      }
      chol.factorize(damped);
      if (chol.info() != Eigen::Success) {
        if (lambda >= config.lambda_max) {
          throw SingularSystemError("damped normal equations unsolvable at lambda_max");
        }
        lambda = lambda == 0.0 ? config.lambda_seed : lambda * config.lambda_up;
        continue;
      }

      const Eigen::VectorXd delta = chol.solve(-gradient);
      const Values candidate = retractAll(result.values, sys, delta);
      double candidate_cost;
      try {
        candidate_cost = totalCost(graph, candidate);
      } catch (const BehindCameraError&) {
        // Step left the valid projection domain; treat as a rejected trial.
        candidate_cost = std::numeric_limits<double>::infinity();
      }

      if (candidate_cost <= cost) {
        const double decrease = cost - candidate_cost;
        result.values = candidate;
        cost = candidate_cost;
        result.stats.cost_trace.push_back(cost);
        result.stats.iterations = iter + 1;
        lambda = lambda <= config.lambda_seed / config.lambda_down ? 0.0
                                                                   : lambda / config.lambda_down;
        accepted = true;
        if (decrease <= config.relative_cost_tol * std::max(cost, 1e-300)) {
          result.stats.reason = ConvergenceReason::RelativeCostDecrease;
        }
        break;
      }

      if (lambda >= config.lambda_max) break;  // stalled
      lambda = lambda == 0.0 ? config.lambda_seed : lambda * config.lambda_up;
    }

    if (!accepted) {
      result.stats.reason = ConvergenceReason::StalledDamping;
      break;
    }
    if (result.stats.reason == ConvergenceReason::RelativeCostDecrease) break;
  }

  result.stats.final_cost = cost;
  result.stats.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void dumpGraph(const FactorGraph& graph, const Values& values, std::ostream& os) {
  os << "graph: " << graph.size() << " factors, " << values.size() << " variables, cost "
     << totalCost(graph, values) << "\n";
  for (const auto& factor : graph) {
    os << factor->name() << " {";
    for (std::size_t i = 0; i < factor->keys().size(); ++i) {
      os << (i ? ", " : " ") << factor->keys()[i].str();
    }
    os << " } whitened: "
       << factor->noiseModel().whiten(factor->evaluate(values, nullptr)).transpose() << "\n";
  }
}

}  // namespace motslam
