#include "milpevo/lp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "milpevo/util.hpp"

namespace milpevo {

std::string_view to_string(LpStatus status) {
  switch (status) {
    case LpStatus::kOptimal: return "optimal";
    case LpStatus::kInfeasible: return "infeasible";
    case LpStatus::kUnbounded: return "unbounded";
    case LpStatus::kIterationLimit: return "iteration-limit";
  }
  return "?";
}

LpModel::LpModel(const MilpInstance& inst, LpTolerances tol)
    : n_(inst.n_vars()), m_(inst.n_cons()), tol_(tol) {
  sign_ = inst.sense == Sense::kMaximize ? -1.0 : 1.0;
  offset_ = inst.objective_offset;
  cost_.resize(n_);
  for (int j = 0; j < n_; ++j) cost_[j] = sign_ * inst.objective[j];
  lower_ = inst.lower;
  upper_ = inst.upper;
  std::vector<int> count(n_ + 1, 0);
  for (const Row& row : inst.rows) {
    for (const Coef& c : row.coefs) ++count[c.index + 1];
  }
  col_start_.assign(n_ + 1, 0);
  for (int j = 0; j < n_; ++j) col_start_[j + 1] = col_start_[j] + count[j + 1];
  row_index_.resize(col_start_[n_]);
  value_.resize(col_start_[n_]);
  std::vector<int> fill(col_start_.begin(), col_start_.end() - 1);
  row_lower_.resize(m_);
  row_upper_.resize(m_);
  for (int i = 0; i < m_; ++i) {
    const Row& row = inst.rows[i];
    for (const Coef& c : row.coefs) {
      row_index_[fill[c.index]] = i;
      value_[fill[c.index]++] = c.value;
    }
    row_lower_[i] = row.relation == Relation::kLessEqual ? -kInf : row.rhs;
    row_upper_[i] = row.relation == Relation::kGreaterEqual ? kInf : row.rhs;
  }
}

/// One bounded-variable primal simplex solve. Variables 0..n-1 are the
/// structurals, n..n+m-1 the logicals s_i with A x - s = 0.
class SimplexRun {
 public:
  SimplexRun(const LpModel& model, const std::vector<double>& lower,
             const std::vector<double>& upper, const LpLimits& limits, const LpBasis* warm)
      : md_(model), tol_(model.tol_), limits_(limits), n_(model.n_), m_(model.m_),
        total_(n_ + m_) {
    lb_.resize(total_);
    ub_.resize(total_);
    cost_.assign(total_, 0.0);
    for (int j = 0; j < n_; ++j) {
      lb_[j] = lower[j];
      ub_[j] = upper[j];
      cost_[j] = model.cost_[j];
      cost_scale_ = std::max(cost_scale_, std::abs(cost_[j]));
    }
    for (int i = 0; i < m_; ++i) {
      lb_[n_ + i] = model.row_lower_[i];
      ub_[n_ + i] = model.row_upper_[i];
    }
    x_.assign(total_, 0.0);
    st_.assign(total_, BasisStatus::kLower);
    pos_.assign(total_, -1);
    head_.assign(m_, -1);
    alpha_.resize(m_);
    y_.resize(m_);
    cb_.resize(m_);
    if (!(warm && install_warm(*warm))) install_slack();
  }

  LpSolution run();

 private:
  bool is_fixed(int j) const { return lb_[j] == ub_[j]; }

  void place_nonbasic(int j, BasisStatus hint) {
    const bool has_lo = std::isfinite(lb_[j]);
    const bool has_hi = std::isfinite(ub_[j]);
    BasisStatus s = hint;
    if (s == BasisStatus::kBasic || (s == BasisStatus::kLower && !has_lo) ||
        (s == BasisStatus::kUpper && !has_hi) || (s == BasisStatus::kZero && (has_lo || has_hi))) {
      s = has_lo ? BasisStatus::kLower : has_hi ? BasisStatus::kUpper : BasisStatus::kZero;
    }
    if (is_fixed(j)) s = BasisStatus::kLower;
    st_[j] = s;
    pos_[j] = -1;
    x_[j] = s == BasisStatus::kLower ? lb_[j] : s == BasisStatus::kUpper ? ub_[j] : 0.0;
  }

  void install_slack() {
    for (int j = 0; j < n_; ++j) place_nonbasic(j, BasisStatus::kLower);
    for (int i = 0; i < m_; ++i) {
      head_[i] = n_ + i;
      pos_[n_ + i] = i;
      st_[n_ + i] = BasisStatus::kBasic;
    }
    binv_ = -Eigen::MatrixXd::Identity(m_, m_);
    since_refactor_ = 0;
    compute_basic_values();
  }

  bool install_warm(const LpBasis& basis) {
    if (basis.var.size() != static_cast<std::size_t>(n_) ||
        basis.row.size() != static_cast<std::size_t>(m_)) {
      return false;
    }
    int basics = 0;
    for (int j = 0; j < total_; ++j) {
      const BasisStatus s = j < n_ ? basis.var[j] : basis.row[j - n_];
      if (s == BasisStatus::kBasic) {
        if (basics == m_) return false;
        head_[basics] = j;
        pos_[j] = basics++;
        st_[j] = BasisStatus::kBasic;
      } else {
        place_nonbasic(j, s);
      }
    }
    if (basics != m_) return false;
    if (!refactor()) {
      std::fill(pos_.begin(), pos_.end(), -1);
      return false;
    }
    compute_basic_values();
    return true;
  }

  /// out = B^{-1} a_j
  void ftran_column(int j, Eigen::VectorXd& out) const {
    if (j >= n_) {
      out = -binv_.col(j - n_);
      return;
    }
    out.setZero(m_);
    for (int k = md_.col_start_[j]; k < md_.col_start_[j + 1]; ++k) {
      out.noalias() += md_.value_[k] * binv_.col(md_.row_index_[k]);
    }
  }

  double dot_column(const Eigen::VectorXd& v, int j) const {
    if (j >= n_) return -v[j - n_];
    double acc = 0.0;
    for (int k = md_.col_start_[j]; k < md_.col_start_[j + 1]; ++k) {
      acc += md_.value_[k] * v[md_.row_index_[k]];
    }
    return acc;
  }

  bool refactor() {
    since_refactor_ = 0;
    if (m_ == 0) {
      binv_.resize(0, 0);
      return true;
    }
    // B = [A_S | -I_L]. Only the kernel K = A[R, S] over rows R whose
    // logical is nonbasic needs factoring:
    //   x_S = K^{-1} b_R,  x_L = A[L, S] x_S - b_L.
    std::vector<int> struct_pos;
    std::vector<int> row_slot(m_, -1);  // index into R, or -1 for rows in L
    std::vector<char> in_l(m_, 0);
    for (int r = 0; r < m_; ++r) {
      if (head_[r] >= n_) {
        in_l[head_[r] - n_] = 1;
      } else {
        struct_pos.push_back(r);
      }
    }
    std::vector<int> kernel_rows;
    for (int i = 0; i < m_; ++i) {
      if (!in_l[i]) {
        row_slot[i] = static_cast<int>(kernel_rows.size());
        kernel_rows.push_back(i);
      }
    }
    const int k = static_cast<int>(struct_pos.size());
    if (static_cast<int>(kernel_rows.size()) != k) return false;
    Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(k, k);
    for (int a = 0; a < k; ++a) {
      const int j = head_[struct_pos[a]];
      for (int p = md_.col_start_[j]; p < md_.col_start_[j + 1]; ++p) {
        const int slot = row_slot[md_.row_index_[p]];
        if (slot >= 0) kernel(slot, a) = md_.value_[p];
      }
    }
    Eigen::MatrixXd kinv;
    if (k > 0) {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(kernel);
      lu.setThreshold(1e-11);
      if (!lu.isInvertible()) return false;
      kinv = lu.inverse();
    }
    binv_.setZero(m_, m_);
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) binv_(struct_pos[a], kernel_rows[b]) = kinv(a, b);
    }
    std::vector<int> logical_pos(m_, -1);
    for (int r = 0; r < m_; ++r) {
      if (head_[r] >= n_) logical_pos[head_[r] - n_] = r;
    }
    for (int a = 0; a < k; ++a) {
      const int j = head_[struct_pos[a]];
      for (int p = md_.col_start_[j]; p < md_.col_start_[j + 1]; ++p) {
        const int i = md_.row_index_[p];
        if (!in_l[i]) continue;
        const double v = md_.value_[p];
        const int r = logical_pos[i];
        for (int b = 0; b < k; ++b) binv_(r, kernel_rows[b]) += v * kinv(a, b);
      }
    }
    for (int i = 0; i < m_; ++i) {
      if (in_l[i]) binv_(logical_pos[i], i) = -1.0;
    }
    return true;
  }

  void compute_basic_values() {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_);
    for (int j = 0; j < total_; ++j) {
      if (pos_[j] >= 0 || x_[j] == 0.0) continue;
      if (j >= n_) {
        rhs[j - n_] -= x_[j];
      } else {
        for (int k = md_.col_start_[j]; k < md_.col_start_[j + 1]; ++k) {
          rhs[md_.row_index_[k]] += md_.value_[k] * x_[j];
        }
      }
    }
    const Eigen::VectorXd xb = -(binv_ * rhs);
    for (int r = 0; r < m_; ++r) x_[head_[r]] = xb[r];
  }

  double infeasibility(int j) const {
    if (x_[j] < lb_[j] - tol_.primal) return lb_[j] - x_[j];
    if (x_[j] > ub_[j] + tol_.primal) return x_[j] - ub_[j];
    return 0.0;
  }

  /// Sets cb_ for the current phase; returns true when phase 1 is needed.
  bool set_phase_costs() {
    bool phase1 = false;
    for (int r = 0; r < m_; ++r) {
      const int j = head_[r];
      if (x_[j] < lb_[j] - tol_.primal) {
        cb_[r] = -1.0;
        phase1 = true;
      } else if (x_[j] > ub_[j] + tol_.primal) {
        cb_[r] = 1.0;
        phase1 = true;
      } else {
        cb_[r] = 0.0;
      }
    }
    if (!phase1) {
      for (int r = 0; r < m_; ++r) cb_[r] = cost_[head_[r]];
    }
    return phase1;
  }

  double reduced_cost(int j, bool phase1) const {
    return (phase1 ? 0.0 : cost_[j]) - dot_column(y_, j);
  }

  /// Entering variable or -1 when no reduced cost is attractive.
  int price(bool phase1, bool bland, double& dq) const {
    const double tol = phase1 ? tol_.optimality : tol_.optimality * std::max(1.0, cost_scale_);
    int best = -1;
    double best_score = 0.0;
    for (int j = 0; j < total_; ++j) {
      if (pos_[j] >= 0 || is_fixed(j)) continue;
      const double d = reduced_cost(j, phase1);
      bool eligible = false;
      switch (st_[j]) {
        case BasisStatus::kLower: eligible = d < -tol; break;
        case BasisStatus::kUpper: eligible = d > tol; break;
        case BasisStatus::kZero: eligible = std::abs(d) > tol; break;
        case BasisStatus::kBasic: break;
      }
      if (!eligible) continue;
      if (bland) {
        dq = d;
        return j;
      }
      if (std::abs(d) > best_score) {
        best_score = std::abs(d);
        best = j;
        dq = d;
      }
    }
    return best;
  }

  struct Step {
    int row = -1;  // leaving basis position, -1 for a bound flip
    double theta = 0.0;
    double leave_value = 0.0;
    BasisStatus leave_status = BasisStatus::kLower;
    bool unbounded = false;
  };

  /// Bounds a basic variable may move within during this iteration. In phase
  /// 1 an infeasible variable may travel away freely but stops at the first
  /// bound it reaches on the way to feasibility.
  void step_bounds(int j, bool phase1, double& lo, double& hi) const {
    lo = lb_[j];
    hi = ub_[j];
    if (!phase1) return;
    if (x_[j] < lb_[j] - tol_.primal) {
      lo = -kInf;
      hi = lb_[j];
    } else if (x_[j] > ub_[j] + tol_.primal) {
      lo = ub_[j];
      hi = kInf;
    }
  }

  Step ratio_test(int q, double dir, bool phase1, bool bland) const {
    Step step;
    const double flip = ub_[q] - lb_[q];
    double theta_max = kInf;
    const double relax = bland ? 0.0 : tol_.primal;
    for (int r = 0; r < m_; ++r) {
      const double a = alpha_[r];
      if (std::abs(a) < tol_.pivot) continue;
      const double delta = -dir * a;
      double lo, hi;
      step_bounds(head_[r], phase1, lo, hi);
      const double xr = x_[head_[r]];
      if (delta < 0 && lo > -kInf) {
        theta_max = std::min(theta_max, (xr - lo + relax) / -delta);
      } else if (delta > 0 && hi < kInf) {
        theta_max = std::min(theta_max, (hi - xr + relax) / delta);
      }
    }
    if (std::isfinite(flip) && flip <= theta_max) {
      step.theta = flip;
      return step;
    }
    if (theta_max == kInf) {
      step.unbounded = true;
      return step;
    }
    double best_abs = 0.0;
    int best_index = total_;
    for (int r = 0; r < m_; ++r) {
      const double a = alpha_[r];
      if (std::abs(a) < tol_.pivot) continue;
      const double delta = -dir * a;
      double lo, hi;
      const int j = head_[r];
      step_bounds(j, phase1, lo, hi);
      double t;
      double value;
      if (delta < 0 && lo > -kInf) {
        t = (x_[j] - lo) / -delta;
        value = lo;
      } else if (delta > 0 && hi < kInf) {
        t = (hi - x_[j]) / delta;
        value = hi;
      } else {
        continue;
      }
      if (t > theta_max) continue;
      const bool better = bland ? (j < best_index) : (std::abs(a) > best_abs);
      if (better) {
        best_abs = std::abs(a);
        best_index = j;
        step.row = r;
        step.theta = std::max(t, 0.0);
        step.leave_value = value;
        if (is_fixed(j)) step.leave_status = BasisStatus::kLower;
        else step.leave_status = value == ub_[j] ? BasisStatus::kUpper : BasisStatus::kLower;
      }
    }
    return step;
  }

  void pivot(int q, double dir, const Step& step) {
    for (int r = 0; r < m_; ++r) x_[head_[r]] -= step.theta * dir * alpha_[r];
    x_[q] += dir * step.theta;
    if (step.row < 0) {
      st_[q] = st_[q] == BasisStatus::kLower ? BasisStatus::kUpper : BasisStatus::kLower;
      x_[q] = st_[q] == BasisStatus::kLower ? lb_[q] : ub_[q];
      return;
    }
    const int r = step.row;
    const int leaving = head_[r];
    x_[leaving] = step.leave_value;
    st_[leaving] = step.leave_status;
    pos_[leaving] = -1;
    head_[r] = q;
    pos_[q] = r;
    st_[q] = BasisStatus::kBasic;
    const double piv = alpha_[r];
    Eigen::RowVectorXd pivot_row = binv_.row(r) / piv;
    Eigen::VectorXd col = alpha_;
    col[r] = 0.0;
    binv_.noalias() -= col * pivot_row;
    binv_.row(r) = pivot_row;
    ++since_refactor_;
  }

  LpSolution finish(LpStatus status);

  const LpModel& md_;
  const LpTolerances& tol_;
  LpLimits limits_;
  int n_, m_, total_;
  double cost_scale_ = 0.0;
  std::vector<double> lb_, ub_, cost_, x_;
  std::vector<BasisStatus> st_;
  std::vector<int> pos_;
  std::vector<int> head_;
  Eigen::MatrixXd binv_;
  Eigen::VectorXd alpha_, y_, cb_;
  int since_refactor_ = 0;
  std::int64_t iterations_ = 0;
};

LpSolution SimplexRun::run() {
  for (int j = 0; j < total_; ++j) {
    if (lb_[j] > ub_[j]) return finish(LpStatus::kInfeasible);
  }
  const std::int64_t stall_limit = 3LL * (n_ + m_);
  std::int64_t stalled = 0;
  bool verified = false;
  int breakdowns = 0;
  for (;;) {
    if (since_refactor_ >= tol_.refactor_interval) {
      if (!refactor()) throw Error("numeric-breakdown", "LP basis became singular");
      compute_basic_values();
    }
    const bool phase1 = set_phase_costs();
    y_.noalias() = binv_.transpose() * cb_;
    const bool bland = stalled > stall_limit;
    double dq = 0.0;
    const int q = price(phase1, bland, dq);
    if (q < 0) {
      if (!verified && since_refactor_ > 0) {
        if (!refactor()) throw Error("numeric-breakdown", "LP basis became singular");
        compute_basic_values();
        verified = true;
        continue;
      }
      return finish(phase1 ? LpStatus::kInfeasible : LpStatus::kOptimal);
    }
    if (iterations_ >= limits_.max_iterations) return finish(LpStatus::kIterationLimit);
    ftran_column(q, alpha_);
    double dir;
    if (st_[q] == BasisStatus::kZero) dir = dq < 0 ? 1.0 : -1.0;
    else dir = st_[q] == BasisStatus::kLower ? 1.0 : -1.0;
    const Step step = ratio_test(q, dir, phase1, bland);
    if (step.unbounded) {
      if (!phase1) return finish(LpStatus::kUnbounded);
      // Phase 1 cannot be unbounded; only numerical drift gets here.
      if (++breakdowns > 3) throw Error("numeric-breakdown", "unbounded phase-1 direction");
      if (!refactor()) throw Error("numeric-breakdown", "LP basis became singular");
      compute_basic_values();
      continue;
    }
    if (step.row >= 0 && std::abs(alpha_[step.row]) < tol_.breakdown) {
      if (++breakdowns > 3) throw Error("numeric-breakdown", "pivot below breakdown threshold");
      if (!refactor()) throw Error("numeric-breakdown", "LP basis became singular");
      compute_basic_values();
      continue;
    }
    pivot(q, dir, step);
    ++iterations_;
    verified = false;
    stalled = step.theta <= 1e-12 ? stalled + 1 : 0;
  }
}

LpSolution SimplexRun::finish(LpStatus status) {
  LpSolution sol;
  sol.status = status;
  sol.iterations = iterations_;
  const double sign = md_.sign_;
  for (int r = 0; r < m_; ++r) cb_[r] = cost_[head_[r]];
  y_.noalias() = binv_.transpose() * cb_;
  sol.primal.assign(x_.begin(), x_.begin() + n_);
  sol.reduced_costs.resize(n_);
  sol.basis_var.resize(n_);
  double obj = 0.0;
  for (int j = 0; j < n_; ++j) {
    obj += cost_[j] * x_[j];
    sol.reduced_costs[j] = pos_[j] >= 0 ? 0.0 : sign * reduced_cost(j, false);
    sol.basis_var[j] = pos_[j] >= 0 ? BasisStatus::kBasic : st_[j];
  }
  sol.objective = sign * obj + md_.offset_;
  sol.duals.resize(m_);
  sol.basis_row.resize(m_);
  sol.activity.assign(m_, 0.0);
  for (int i = 0; i < m_; ++i) {
    sol.duals[i] = sign * y_[i];
    sol.basis_row[i] = pos_[n_ + i] >= 0 ? BasisStatus::kBasic : st_[n_ + i];
  }
  for (int j = 0; j < n_; ++j) {
    for (int k = md_.col_start_[j]; k < md_.col_start_[j + 1]; ++k) {
      sol.activity[md_.row_index_[k]] += md_.value_[k] * x_[j];
    }
  }
  return sol;
}

LpSolution LpModel::solve(const std::vector<double>& lower, const std::vector<double>& upper,
                          const LpLimits& limits, const LpBasis* warm) const {
  if (lower.size() != static_cast<std::size_t>(n_) ||
      upper.size() != static_cast<std::size_t>(n_)) {
    throw Error("size-mismatch", "bound vectors do not match the LP");
  }
  SimplexRun run(*this, lower, upper, limits, warm);
  return run.run();
}

LpSolution solve_lp(const MilpInstance& instance, const LpLimits& limits) {
  if (instance.n_vars() < 1) throw Error("empty model", "LP needs at least one variable");
  return LpModel(instance).solve(limits);
}

}  // namespace milpevo
