#pragma once

#include <cstdint>
#include <vector>

#include "milpevo/core.hpp"

namespace milpevo {

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };
enum class BasisStatus : std::uint8_t { kLower, kBasic, kUpper, kZero };

std::string_view to_string(LpStatus status);

/// Every numeric threshold of the simplex code lives here.
struct LpTolerances {
  /// Bound violation accepted inside the iterations.
  double primal = 1e-9;
  /// Row residual guaranteed on an optimal answer.
  double feasibility = 1e-7;
  /// Reduced-cost threshold, multiplied by max(1, max |c_j|).
  double optimality = 1e-9;
  /// Column entries smaller than this never become pivots.
  double pivot = 1e-9;
  /// A chosen pivot below this after refactorization is a breakdown.
  double breakdown = 1e-12;
  int refactor_interval = 64;
};

struct LpLimits {
  std::int64_t max_iterations = 1'000'000;
};

/// Basis statuses for structural variables and rows (row status is the
/// status of the row's logical variable: lower = at lhs, upper = at rhs).
struct LpBasis {
  std::vector<BasisStatus> var;
  std::vector<BasisStatus> row;
  bool empty() const { return var.empty() && row.empty(); }
};

/// Result of one LP solve. Duals and reduced costs follow the instance's
/// objective sense: d(objective)/d(rhs) and c_j - y'A_j respectively.
struct LpSolution {
  LpStatus status = LpStatus::kInfeasible;
  double objective = 0.0;
  std::vector<double> primal;
  std::vector<double> duals;
  std::vector<double> reduced_costs;
  std::vector<double> activity;
  std::vector<BasisStatus> basis_var;
  std::vector<BasisStatus> basis_row;
  std::int64_t iterations = 0;

  LpBasis basis() const { return {basis_var, basis_row}; }
};

/// Column-wise copy of an instance's LP relaxation that can be re-solved with
/// different variable bounds (branch-and-bound nodes, strong-branching
/// children). Solving is const and allocates its own work space.
class LpModel {
 public:
  explicit LpModel(const MilpInstance& instance, LpTolerances tol = {});

  int n_vars() const { return n_; }
  int n_cons() const { return m_; }
  const LpTolerances& tolerances() const { return tol_; }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }

  /// Solves with the given structural bounds. A warm basis that is singular
  /// or the wrong shape is replaced by the slack basis.
  /// Throws Error("numeric-breakdown") if no usable pivot remains.
  LpSolution solve(const std::vector<double>& lower, const std::vector<double>& upper,
                   const LpLimits& limits = {}, const LpBasis* warm = nullptr) const;
  LpSolution solve(const LpLimits& limits = {}, const LpBasis* warm = nullptr) const {
    return solve(lower_, upper_, limits, warm);
  }

 private:
  friend class SimplexRun;
  int n_ = 0;
  int m_ = 0;
  double sign_ = 1.0;
  double offset_ = 0.0;
  LpTolerances tol_;
  std::vector<double> cost_;  // minimization form
  std::vector<int> col_start_;
  std::vector<int> row_index_;
  std::vector<double> value_;
  std::vector<double> row_lower_;
  std::vector<double> row_upper_;
  std::vector<double> lower_;
  std::vector<double> upper_;
};

/// Solves the LP relaxation of `instance` (kinds are ignored).
LpSolution solve_lp(const MilpInstance& instance, const LpLimits& limits = {});

}  // namespace milpevo
