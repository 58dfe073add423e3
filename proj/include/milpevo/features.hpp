#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "milpevo/core.hpp"
#include "milpevo/lp.hpp"
#include "milpevo/node.hpp"

namespace milpevo {

enum class GraphSchema { kGap, kBranch };

inline constexpr int kGapVarDim = 17;
inline constexpr int kGapConsDim = 17;
inline constexpr int kBranchVarDim = 19;
inline constexpr int kBranchConsDim = 5;

/// Variable/constraint bipartite graph. Edge k connects constraint
/// edge_cons[k] with variable edge_var[k], weighted by the coefficient
/// divided by the row's 2-norm.
struct BipartiteGraph {
  GraphSchema schema = GraphSchema::kGap;
  Eigen::MatrixXd var_features;
  Eigen::MatrixXd cons_features;
  std::vector<int> edge_cons;
  std::vector<int> edge_var;
  std::vector<double> edge_value;

  int n_vars() const { return static_cast<int>(var_features.rows()); }
  int n_cons() const { return static_cast<int>(cons_features.rows()); }
  std::size_t n_edges() const { return edge_value.size(); }
};

/// Root-LP features (integrality gap and text alignment models).
/// Throws Error("root LP required") unless lp is optimal.
BipartiteGraph extract_gap_features(const MilpInstance& instance, const LpSolution& lp);

/// Node features for branching. Rows are oriented as a'x <= b.
BipartiteGraph extract_branch_features(const BranchContext& context);

/// Column names of the variable/constraint feature blocks.
std::vector<std::string> feature_names(GraphSchema schema, bool variables);

/// Dense JSON object {schema, var_features, cons_features, edges:[[i,j,v],..]}.
std::string graph_to_json(const BipartiteGraph& graph);
BipartiteGraph graph_from_json(std::string_view text);

}  // namespace milpevo
