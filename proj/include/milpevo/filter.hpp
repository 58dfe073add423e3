#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "milpevo/bnb.hpp"
#include "milpevo/classes.hpp"
#include "milpevo/util.hpp"

namespace milpevo {

/// Closed interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct FilterCriteria {
  Interval solve_time{20.0, 180.0};
  Interval presolve_time{0.0, 15.0};
  Interval presolve_fraction{0.0, 0.2};
  Interval total_vars{50.0, 5e4};
  Interval bin_int_vars{50.0, 2e4};
  Interval total_cons{50.0, 5e4};
  Interval bnb_nodes{10.0, 5000.0};
  Interval gap{0.0, 3.0};

  static FilterCriteria paper() { return {}; }
  /// Small-machine profile: deterministic solve time [0.05, 5] s, size upper
  /// bounds divided by 10, node upper bound 1000; lower bounds and gap kept.
  static FilterCriteria desk();
  /// "paper" or "desk"; Error("config") otherwise.
  static FilterCriteria profile(std::string_view name);

  /// Named intervals in a fixed order.
  std::vector<std::pair<std::string, Interval>> named() const;
};

std::string criteria_to_json(const FilterCriteria& c);
FilterCriteria criteria_from_json(std::string_view text);

struct SolveStats {
  double solve_time = 0.0;
  double presolve_time = 0.0;
  double n_vars = 0.0;
  double n_bin_int = 0.0;
  double n_cons = 0.0;
  double n_nodes = 0.0;
  double gap = 0.0;
};

struct AcceptResult {
  bool ok = false;
  std::vector<std::string> reasons;
};

/// ok when every statistic lies in its interval; reasons name every violated
/// criterion.
AcceptResult accept(const SolveStats& stats, const FilterCriteria& criteria);

/// Candidate values for grid search, per parameter.
std::map<std::string, std::vector<ParamValue>> param_search_space(const ParamMap& params);

struct FilterOptions {
  FilterCriteria criteria;
  /// Measure solve_time on the solver's deterministic clock.
  bool deterministic_clock = true;
  std::uint64_t instance_seed = 42;
  BranchRule rule = BranchRule::kPseudocost;
  /// Stop once this many parameter sets are accepted; 0 spends the whole budget.
  int stop_after_accepted = 0;
};

struct FilterTrial {
  ParamMap params;
  SolveStats stats;
  bool solved = false;  // false when generation failed or sizes ruled it out
  AcceptResult verdict;
};

struct FilterResult {
  std::vector<ParamMap> accepted;
  std::vector<FilterTrial> trials;
};

/// Generates and solves one instance and reports its statistics. The solver
/// stops at the solve-time and node upper bounds; a run cut short by the
/// time bound reports solve_time = +inf.
SolveStats measure(const MilpInstance& instance, const FilterOptions& options,
                   MilpResult* result = nullptr);

/// Probes the class's own parameters first, then up to budget - 1 random
/// draws, each parameter sampled uniformly from its search space.
FilterResult search_and_filter(const MilpClassRecord& record, int budget,
                               const FilterOptions& options, Rng& rng,
                               SandboxRunner* runner = nullptr);

}  // namespace milpevo
