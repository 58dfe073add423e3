#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "milpevo/core.hpp"
#include "milpevo/features.hpp"
#include "milpevo/lp.hpp"
#include "milpevo/node.hpp"

namespace milpevo {

enum class BranchRule { kMostInfeasible, kPseudocost, kStrong, kLearned };
enum class MilpStatus { kOptimal, kTimeLimit, kInfeasible, kUnbounded };

std::string_view to_string(BranchRule rule);
std::string_view to_string(MilpStatus status);
BranchRule parse_branch_rule(std::string_view text);

/// Returns the chosen variable; must be one of context.node.candidates.
using BranchPolicy = std::function<int(const BranchContext&)>;

struct SolveLimits {
  double time_seconds = std::numeric_limits<double>::infinity();
  std::int64_t max_nodes = std::numeric_limits<std::int64_t>::max();
  /// Apply time_seconds to the deterministic clock instead of wall time.
  bool deterministic_time = false;
};

struct StrongBranchConfig {
  std::int64_t child_iteration_cap = 500;
  double min_gain = 1e-6;
  /// Score of an infeasible child is infeasible_factor * (1 + |z_node|).
  double infeasible_factor = 1e8;
};

struct SolveOptions {
  BranchRule rule = BranchRule::kPseudocost;
  BranchPolicy policy;  // used when rule == kLearned
  SolveLimits limits;
  StrongBranchConfig strong;
  std::int64_t node_lp_iteration_cap = 200'000;
  /// Called after every processed node (tests and tracing).
  std::function<void(const BranchNode&)> on_node;
};

struct MilpResult {
  MilpStatus status = MilpStatus::kInfeasible;
  std::optional<std::vector<double>> incumbent;
  std::optional<double> objective;
  double root_lp_objective = 0.0;
  /// Best proven bound in the instance's own sense.
  double best_bound = 0.0;
  std::int64_t nodes_processed = 0;
  std::int64_t lp_iterations = 0;
  std::int64_t lp_solves = 0;
  double solve_seconds = 0.0;
  /// Machine-independent time: simplex work units converted to seconds.
  double deterministic_seconds = 0.0;
  double policy_seconds = 0.0;
  /// Node LPs that failed numerically and were treated as infeasible.
  int numeric_warnings = 0;
};

/// Per-variable unit objective gains observed after branching.
struct PseudocostStats {
  std::vector<double> down_sum, up_sum;
  std::vector<std::int64_t> down_count, up_count;

  explicit PseudocostStats(int n = 0)
      : down_sum(n, 0.0), up_sum(n, 0.0), down_count(n, 0), up_count(n, 0) {}

  /// Records an objective increase `gain` (>= 0) after moving var j by
  /// `distance` in the given direction.
  void update(int j, bool up, double gain, double distance);
};

/// Chooses the candidate maximizing max(down_est, eps) * max(up_est, eps),
/// where est = average unit gain * fractional distance. Missing history uses
/// the global average gain of that direction (1.0 if there is none).
int pseudocost_select(const std::vector<int>& candidates, const std::vector<double>& values,
                      const PseudocostStats& stats);

/// Most fractional candidate (closest to .5), lowest index on ties.
int most_infeasible_select(const std::vector<int>& candidates, const std::vector<double>& values);

struct StrongBranchResult {
  std::vector<double> scores;  // aligned with candidates
  int best = -1;               // variable index
  std::int64_t lp_iterations = 0;
  std::int64_t lp_solves = 0;
};

/// Solves both children of every candidate with the node basis as warm start
/// and scores them with the product rule. When `stats` is given the observed
/// gains seed the pseudocosts.
StrongBranchResult strong_branching_scores(const LpModel& model, const MilpInstance& instance,
                                           const std::vector<double>& lower,
                                           const std::vector<double>& upper,
                                           const LpSolution& node_lp,
                                           const std::vector<int>& candidates,
                                           const StrongBranchConfig& config = {},
                                           PseudocostStats* stats = nullptr);

MilpResult solve_milp(const MilpInstance& instance, const SolveOptions& options = {});

/// |z* - z0| / |z*| clipped to [0, clip]; both near zero gives 0, only z*
/// near zero gives clip.
double integrality_gap(double root_lp_objective, double milp_objective, double clip = 1.0);

struct BranchSample {
  std::string instance_id;
  std::int64_t node_id = 0;
  std::vector<int> candidates;
  int expert_action = -1;
  BipartiteGraph graph;
};

struct CollectOptions {
  double expert_prob = 0.05;
  int max_samples = 50;
  SolveLimits limits;
  std::uint64_t seed = 0;
  StrongBranchConfig strong;
};

struct CollectResult {
  std::vector<BranchSample> samples;
  bool excluded = false;
  MilpResult solve;
};

/// Pseudocost search where each node independently, with probability
/// expert_prob, is branched by the strong-branching expert and recorded.
/// Search stops once max_samples are recorded.
CollectResult collect_branching_data(const MilpInstance& instance, const std::string& instance_id,
                                     const CollectOptions& options);

std::string sample_to_json(const BranchSample& sample);
BranchSample sample_from_json(std::string_view line);

}  // namespace milpevo
