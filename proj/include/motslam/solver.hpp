#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "motslam/factors.hpp"

namespace motslam {

class FactorGraph {
 public:
  void add(FactorPtr factor) { factors_.push_back(std::move(factor)); }

  template <typename F, typename... Args>
  void emplace(Args&&... args) {
    factors_.push_back(std::make_unique<F>(std::forward<Args>(args)...));
  }

  std::size_t size() const { return factors_.size(); }
  const Factor& at(std::size_t i) const { return *factors_[i]; }

  auto begin() const { return factors_.begin(); }
  auto end() const { return factors_.end(); }

  // Every factor key present in `values`, every variable touched by >= 1 factor.
  void checkStructure(const Values& values) const;

 private:
  std::vector<FactorPtr> factors_;
};

struct SolverConfig {
  int max_iterations = 100;
  double relative_cost_tol = 1e-8;
  double absolute_gradient_tol = 1e-12;
  // 0 tries a plain Gauss-Newton step first; damping engages at lambda_seed on
  // the first rejected or unsolvable step.
  double initial_lambda = 0.0;
  double lambda_seed = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  double lambda_max = 1e12;
};

enum class ConvergenceReason {
  RelativeCostDecrease,
  GradientNorm,
  MaxIterations,
  StalledDamping,  // no acceptable step even at lambda_max; reported, not thrown
};

struct SolveStats {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> cost_trace;  // accepted costs, non-increasing
  ConvergenceReason reason = ConvergenceReason::MaxIterations;
  double wall_time_s = 0.0;
};

std::string toString(ConvergenceReason reason);

// Whitened, IRLS-weighted linearization at `values`. Column layout follows the
// Values iteration order; row layout follows factor insertion order.
struct LinearizedSystem {
  Eigen::SparseMatrix<double> jacobian;
  Eigen::VectorXd residual;             // whitened, sqrt-weight scaled
  std::vector<double> factor_weights;   // Huber IRLS weight per factor
  std::vector<VariableKey> ordering;    // key per column block
  std::vector<int> offsets;             // column offset per key
  std::vector<int> dims;                // tangent dim per key

  int columnOf(const VariableKey& key) const;
};

LinearizedSystem linearize(const FactorGraph& graph, const Values& values);

// Sum of per-factor robust costs rho(|whitened residual|): the quadratic
// ||r||^2_Sigma when no kernel is attached.
double totalCost(const FactorGraph& graph, const Values& values);

struct SolveResult {
  Values values;
  SolveStats stats;
};

SolveResult optimize(const FactorGraph& graph, const Values& initial, const SolverConfig& config);

// Text dump of factors, keys and whitened residuals at a linearization point.
void dumpGraph(const FactorGraph& graph, const Values& values, std::ostream& os);

}  // namespace motslam
