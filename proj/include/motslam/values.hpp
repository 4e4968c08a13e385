#pragma once

#include <map>
#include <variant>

#include "motslam/keys.hpp"
#include "motslam/pose3.hpp"

namespace motslam {

// Pose3 (tangent dim 6), Point3 (3) or flow (2).
using VariableValue = std::variant<Pose3, Vector3, Vector2>;

int tangentDim(const VariableValue& v);

// On-manifold update: exp(delta) * pose for poses, plain addition otherwise.
VariableValue retract(const VariableValue& v, const Eigen::VectorXd& delta);

// Ordered key -> value map. Ordering is part of the determinism contract: the
// solver assigns tangent-space columns by iteration order.
class Values {
 public:
  void insert(const VariableKey& key, const VariableValue& value);
  void update(const VariableKey& key, const VariableValue& value);
  bool exists(const VariableKey& key) const { return map_.count(key) > 0; }
  std::size_t size() const { return map_.size(); }

  const VariableValue& at(const VariableKey& key) const;
  const Pose3& atPose(const VariableKey& key) const;
  const Vector3& atPoint(const VariableKey& key) const;
  const Vector2& atFlow(const VariableKey& key) const;

  auto begin() const { return map_.begin(); }
  auto end() const { return map_.end(); }

  // Total tangent dimension over all variables.
  int tangentDim() const;

 private:
  std::map<VariableKey, VariableValue> map_;
};

}  // namespace motslam
