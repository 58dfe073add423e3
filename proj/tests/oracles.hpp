#pragma once

// Independent reference solvers used as test oracles.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "milpevo/core.hpp"
#include "milpevo/util.hpp"

namespace milpevo::testing {

/// Best objective over all basic solutions of a box-bounded LP, found by
/// solving every n-subset of active constraints (rows and bounds).
std::optional<double> vertex_oracle(const MilpInstance& inst) {
  const int n = inst.n_vars();
  std::vector<std::vector<double>> a;
  std::vector<double> b;
  for (const Row& row : inst.rows) {
    std::vector<double> dense(n, 0.0);
    for (const Coef& c : row.coefs) dense[c.index] = c.value;
    a.push_back(dense);
    b.push_back(row.rhs);
  }
  for (int j = 0; j < n; ++j) {
    std::vector<double> e(n, 0.0);
    e[j] = 1.0;
    a.push_back(e);
    b.push_back(inst.lower[j]);
    a.push_back(e);
    b.push_back(inst.upper[j]);
  }
  const int k = static_cast<int>(a.size());
  std::optional<double> best;
  std::vector<int> pick(n);
  for (int i = 0; i < n; ++i) pick[i] = i;
  const double sgn = inst.sense == Sense::kMinimize ? 1.0 : -1.0;
  while (true) {
    Eigen::MatrixXd mat(n, n);
    Eigen::VectorXd rhs(n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) mat(r, c) = a[pick[r]][c];
      rhs[r] = b[pick[r]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(mat);
    if (lu.isInvertible()) {
      const Eigen::VectorXd x = lu.solve(rhs);
      bool feasible = true;
      for (int j = 0; j < n && feasible; ++j) {
        feasible = x[j] >= inst.lower[j] - 1e-9 && x[j] <= inst.upper[j] + 1e-9;
      }
      for (int i = 0; i < inst.n_cons() && feasible; ++i) {
        double act = 0.0;
        for (const Coef& c : inst.rows[i].coefs) act += c.value * x[c.index];
        const Row& row = inst.rows[i];
        if (row.relation != Relation::kGreaterEqual) feasible = act <= row.rhs + 1e-9;
        if (feasible && row.relation != Relation::kLessEqual) feasible = act >= row.rhs - 1e-9;
      }
      if (feasible) {
        double obj = inst.objective_offset;
        for (int j = 0; j < n; ++j) obj += inst.objective[j] * x[j];
        if (!best || sgn * obj < sgn * *best) best = obj;
      }
    }
    int i = n - 1;
    while (i >= 0 && pick[i] == k - n + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int r = i + 1; r < n; ++r) pick[r] = pick[r - 1] + 1;
  }
  return best;
}

/// Random box-bounded LP with integer data in [-9, 9]. When `feasible`, the
/// right-hand sides are built around an interior point.
MilpInstance random_lp(Rng& rng, int max_vars, int max_rows, bool feasible) {
  MilpInstance inst;
  const int n = 1 + static_cast<int>(rng.index(max_vars));
  const int m = 1 + static_cast<int>(rng.index(max_rows));
  inst.sense = rng.bernoulli(0.5) ? Sense::kMinimize : Sense::kMaximize;
  std::vector<double> point(n);
  for (int j = 0; j < n; ++j) {
    const double lo = static_cast<double>(rng.uniform_int(-9, 0));
    const double hi = lo + static_cast<double>(rng.uniform_int(0, 9));
    inst.add_var(VarKind::kContinuous, lo, hi, static_cast<double>(rng.uniform_int(-9, 9)));
    point[j] = static_cast<double>(rng.uniform_int(static_cast<int>(lo), static_cast<int>(hi)));
  }
  for (int i = 0; i < m; ++i) {
    std::vector<Coef> coefs;
    double act = 0.0;
    for (int j = 0; j < n; ++j) {
      const double v = static_cast<double>(rng.uniform_int(-9, 9));
      if (v != 0.0 && rng.bernoulli(0.7)) {
        coefs.push_back({j, v});
        act += v * point[j];
      }
    }
    const auto rel = static_cast<Relation>(rng.index(rng.bernoulli(0.15) ? 3 : 2));
    double rhs = feasible ? act : static_cast<double>(rng.uniform_int(-9, 9));
    if (feasible && rel == Relation::kLessEqual) rhs += static_cast<double>(rng.uniform_int(0, 5));
    if (feasible && rel == Relation::kGreaterEqual) rhs -= static_cast<double>(rng.uniform_int(0, 5));
    inst.add_row(std::move(coefs), rel, rhs);
  }
  return inst;
}

/// Exhaustive search over all assignments of a pure binary MILP.
inline std::optional<double> enumerate_binary(const MilpInstance& inst,
                                              std::vector<double>* best_x = nullptr) {
  const int n = inst.n_vars();
  const double sgn = inst.sense == Sense::kMinimize ? 1.0 : -1.0;
  std::optional<double> best;
  std::vector<double> x(n);
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    for (int j = 0; j < n; ++j) x[j] = (mask >> j) & 1ULL ? 1.0 : 0.0;
    bool ok = true;
    for (int j = 0; j < n && ok; ++j) ok = x[j] >= inst.lower[j] && x[j] <= inst.upper[j];
    for (const Row& row : inst.rows) {
      if (!ok) break;
      double act = 0.0;
      for (const Coef& c : row.coefs) act += c.value * x[c.index];
      if (row.relation != Relation::kGreaterEqual) ok = act <= row.rhs + 1e-9;
      if (ok && row.relation != Relation::kLessEqual) ok = act >= row.rhs - 1e-9;
    }
    if (!ok) continue;
    double obj = inst.objective_offset;
    for (int j = 0; j < n; ++j) obj += inst.objective[j] * x[j];
    if (!best || sgn * obj < sgn * *best) {
      best = obj;
      if (best_x) *best_x = x;
    }
  }
  return best;
}

/// Pure binary MILP with integer data; right-hand sides are drawn so that
/// a good fraction of instances is feasible.
inline MilpInstance random_binary_milp(Rng& rng, int max_vars, int max_rows) {
  MilpInstance inst;
  const int n = 1 + static_cast<int>(rng.index(max_vars));
  const int m = 1 + static_cast<int>(rng.index(max_rows));
  inst.sense = rng.bernoulli(0.5) ? Sense::kMinimize : Sense::kMaximize;
  for (int j = 0; j < n; ++j) {
    inst.add_var(VarKind::kBinary, 0, 1, static_cast<double>(rng.uniform_int(-9, 9)));
  }
  for (int i = 0; i < m; ++i) {
    std::vector<Coef> coefs;
    double pos = 0.0, neg = 0.0;
    for (int j = 0; j < n; ++j) {
      const double v = static_cast<double>(rng.uniform_int(-9, 9));
      if (v != 0.0 && rng.bernoulli(0.6)) {
        coefs.push_back({j, v});
        (v > 0 ? pos : neg) += v;
      }
    }
    const auto rel = static_cast<Relation>(rng.index(rng.bernoulli(0.1) ? 3 : 2));
    const double span = pos - neg;
    double rhs = std::round(neg + rng.uniform(0.3, 0.8) * span);
    if (rel == Relation::kGreaterEqual) rhs = std::round(neg + rng.uniform(0.2, 0.7) * span);
    inst.add_row(std::move(coefs), rel, rhs);
  }
  return inst;
}

}  // namespace milpevo::testing
