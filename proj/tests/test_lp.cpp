#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "doctest.h"
#include "milpevo/core.hpp"
#include "milpevo/lp.hpp"
#include "milpevo/util.hpp"
#include "oracles.hpp"

using namespace milpevo;
using namespace milpevo::testing;

namespace {

double dual_objective(const MilpInstance& inst, const LpSolution& sol) {
  const bool minimize = inst.sense == Sense::kMinimize;
  double obj = inst.objective_offset;
  for (int i = 0; i < inst.n_cons(); ++i) obj += sol.duals[i] * inst.rows[i].rhs;
  for (int j = 0; j < inst.n_vars(); ++j) {
    const double d = sol.reduced_costs[j];
    if (d == 0.0) continue;
    const bool at_lower = (d > 0) == minimize;
    obj += d * (at_lower ? inst.lower[j] : inst.upper[j]);
  }
  return obj;
}

void check_optimal_invariants(const MilpInstance& inst, const LpSolution& sol) {
  REQUIRE(sol.status == LpStatus::kOptimal);
  const bool minimize = inst.sense == Sense::kMinimize;
  for (int i = 0; i < inst.n_cons(); ++i) {
    const Row& row = inst.rows[i];
    double act = 0.0;
    for (const Coef& c : row.coefs) act += c.value * sol.primal[c.index];
    if (row.relation != Relation::kGreaterEqual) CHECK(act <= row.rhs + 1e-7);
    if (row.relation != Relation::kLessEqual) CHECK(act >= row.rhs - 1e-7);
    // Dual sign: d(obj)/d(rhs) for a relaxing change cannot worsen the objective.
    const double y = sol.duals[i];
    if (row.relation == Relation::kLessEqual) CHECK((minimize ? y <= 1e-7 : y >= -1e-7));
    if (row.relation == Relation::kGreaterEqual) CHECK((minimize ? y >= -1e-7 : y <= 1e-7));
    CHECK(std::abs(y * (act - row.rhs)) <= 1e-6);
  }
  for (int j = 0; j < inst.n_vars(); ++j) {
    CHECK(sol.primal[j] >= inst.lower[j] - 1e-7);
    CHECK(sol.primal[j] <= inst.upper[j] + 1e-7);
    if (sol.basis_var[j] == BasisStatus::kBasic) CHECK(std::abs(sol.reduced_costs[j]) <= 1e-7);
    // Reduced cost with the wrong sign is only allowed at the matching bound.
    const double d = minimize ? sol.reduced_costs[j] : -sol.reduced_costs[j];
    if (d > 1e-7) CHECK(std::abs(sol.primal[j] - inst.lower[j]) <= 1e-7);
    if (d < -1e-7) CHECK(std::abs(sol.primal[j] - inst.upper[j]) <= 1e-7);
  }
  const double dual = dual_objective(inst, sol);
  CHECK(std::abs(sol.objective - dual) <= 1e-6 * (1.0 + std::abs(sol.objective)));
}

}  // namespace

TEST_CASE("textbook maximization") {
  MilpInstance inst;
  inst.sense = Sense::kMaximize;
  inst.add_var(VarKind::kContinuous, 0, kInf, 3);
  inst.add_var(VarKind::kContinuous, 0, kInf, 2);
  inst.add_row({{0, 1}, {1, 1}}, Relation::kLessEqual, 4);
  inst.add_row({{0, 1}}, Relation::kLessEqual, 2);
  const auto sol = solve_lp(inst);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.objective == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(sol.primal[0] == doctest::Approx(2.0));
  CHECK(sol.primal[1] == doctest::Approx(2.0));
  // Oracle over the bounded version of the same polytope.
  auto boxed = inst;
  boxed.upper = {100, 100};
  CHECK(*vertex_oracle(boxed) == doctest::Approx(10.0));
  check_optimal_invariants(inst, sol);
}

TEST_CASE("single variable with a lower row") {
  MilpInstance inst;
  inst.add_var(VarKind::kContinuous, 0, kInf, 1);
  inst.add_row({{0, 1}}, Relation::kGreaterEqual, 5);
  const auto sol = solve_lp(inst);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.objective == doctest::Approx(5.0));
  CHECK(sol.duals[0] == doctest::Approx(1.0));
  CHECK(sol.basis_row[0] == BasisStatus::kLower);
}

TEST_CASE("contradictory rows are infeasible") {
  MilpInstance inst;
  inst.add_var(VarKind::kContinuous, 0, kInf, 1);
  inst.add_row({{0, 1}}, Relation::kLessEqual, 1);
  inst.add_row({{0, 1}}, Relation::kGreaterEqual, 2);
  CHECK(solve_lp(inst).status == LpStatus::kInfeasible);
}

TEST_CASE("unbounded and free variables") {
  MilpInstance inst;
  inst.add_var(VarKind::kContinuous, -kInf, kInf, -1);
  inst.add_var(VarKind::kContinuous, 0, kInf, 0);
  inst.add_row({{0, 1}, {1, -1}}, Relation::kLessEqual, 3);
  CHECK(solve_lp(inst).status == LpStatus::kUnbounded);

  MilpInstance freev;
  freev.add_var(VarKind::kContinuous, -kInf, kInf, 1);
  freev.add_row({{0, 1}}, Relation::kGreaterEqual, -4);
  const auto sol = solve_lp(freev);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.primal[0] == doctest::Approx(-4.0));
}

TEST_CASE("no rows and equality rows") {
  MilpInstance box;
  box.add_var(VarKind::kContinuous, -2, 3, 1);
  box.add_var(VarKind::kContinuous, -2, 3, -1);
  auto sol = solve_lp(box);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.objective == doctest::Approx(-5.0));
  CHECK(sol.basis_var[0] == BasisStatus::kLower);
  CHECK(sol.basis_var[1] == BasisStatus::kUpper);

  MilpInstance eq;
  eq.add_var(VarKind::kContinuous, 0, 10, 1);
  eq.add_var(VarKind::kContinuous, 0, 10, 2);
  eq.add_row({{0, 1}, {1, 1}}, Relation::kEqual, 7);
  eq.add_row({{0, 1}, {1, -1}}, Relation::kEqual, 1);
  sol = solve_lp(eq);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.primal[0] == doctest::Approx(4.0));
  CHECK(sol.primal[1] == doctest::Approx(3.0));
  check_optimal_invariants(eq, sol);
}

TEST_CASE("iteration limit") {
  Rng rng(3);
  MilpInstance inst = random_lp(rng, 10, 8, true);
  while (solve_lp(inst).iterations < 2) inst = random_lp(rng, 10, 8, true);
  LpLimits limits;
  limits.max_iterations = 1;
  CHECK(solve_lp(inst, limits).status == LpStatus::kIterationLimit);
}

TEST_CASE("strong duality on 100 random feasible LPs") {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const auto inst = random_lp(rng, 10, 8, true);
    INFO("lp " << t);
    const auto sol = solve_lp(inst);
    check_optimal_invariants(inst, sol);
  }
}

TEST_CASE("agreement with vertex enumeration") {
  Rng rng(5);
  int infeasible = 0;
  for (int t = 0; t < 300; ++t) {
    const auto inst = random_lp(rng, 6, 6, rng.bernoulli(0.5));
    INFO("lp " << t);
    const auto oracle = vertex_oracle(inst);
    const auto sol = solve_lp(inst);
    if (!oracle) {
      ++infeasible;
      CHECK(sol.status == LpStatus::kInfeasible);
    } else {
      REQUIRE(sol.status == LpStatus::kOptimal);
      CHECK(std::abs(sol.objective - *oracle) <= 1e-6);
    }
  }
  CHECK(infeasible > 10);
}

TEST_CASE("warm start from a parent basis") {
  Rng rng(17);
  for (int t = 0; t < 100; ++t) {
    const auto inst = random_lp(rng, 8, 6, true);
    LpModel model(inst);
    const auto parent = model.solve();
    REQUIRE(parent.status == LpStatus::kOptimal);
    auto lower = inst.lower;
    auto upper = inst.upper;
    const int j = static_cast<int>(rng.index(inst.n_vars()));
    const double mid = std::floor((lower[j] + upper[j]) / 2);
    if (rng.bernoulli(0.5)) upper[j] = mid;
    else lower[j] = mid;
    const auto basis = parent.basis();
    const auto cold = model.solve(lower, upper);
    const auto warm = model.solve(lower, upper, {}, &basis);
    REQUIRE(cold.status == warm.status);
    if (cold.status == LpStatus::kOptimal) CHECK(cold.objective == doctest::Approx(warm.objective));
  }
}

TEST_CASE("degenerate problem terminates") {
  // Many redundant rows through the same vertex.
  MilpInstance inst;
  inst.sense = Sense::kMaximize;
  for (int j = 0; j < 6; ++j) inst.add_var(VarKind::kContinuous, 0, kInf, 1.0 + j % 2);
  for (int i = 0; i < 30; ++i) {
    std::vector<Coef> coefs;
    for (int j = 0; j < 6; ++j) coefs.push_back({j, 1.0 + ((i + j) % 3)});
    inst.add_row(coefs, Relation::kLessEqual, 0.0);
  }
  const auto sol = solve_lp(inst);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.objective == doctest::Approx(0.0));
}
