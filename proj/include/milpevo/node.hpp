#pragma once

#include <cstdint>
#include <vector>

#include "milpevo/core.hpp"
#include "milpevo/lp.hpp"

namespace milpevo {

struct BoundChange {
  int var = 0;
  double lower = 0.0;
  double upper = 0.0;
};

/// An open or processed branch-and-bound node. Bounds are stored as the list
/// of changes relative to the root.
struct BranchNode {
  std::int64_t id = 0;
  int depth = 0;
  std::vector<BoundChange> changes;
  LpSolution lp;
  /// Integer-kind variables whose LP value is more than 1e-6 from integral.
  std::vector<int> candidates;
  /// LP bound of the parent in the instance's own objective sense.
  double parent_bound = 0.0;
};

/// What a branching rule may look at when choosing a variable.
struct BranchContext {
  const MilpInstance& instance;
  const LpModel& model;
  const BranchNode& node;
  /// Current local bounds at the node.
  const std::vector<double>& lower;
  const std::vector<double>& upper;
  /// Best solution so far, or nullptr.
  const std::vector<double>* incumbent = nullptr;
  /// Running average of all incumbents found so far, or nullptr.
  const std::vector<double>* incumbent_average = nullptr;
  /// LP solves performed in this search before this node's LP.
  std::int64_t lp_solves_before = 0;
};

}  // namespace milpevo
