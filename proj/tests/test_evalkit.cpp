#include <cmath>
#include <set>

#include "doctest.h"
#include "milpevo/evalkit.hpp"

using namespace milpevo;

namespace {

Eigen::VectorXd random_unit(Rng& rng, int d) {
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.normal();
  return v.normalized();
}

MilpInstance grid_instance(int n, int m, int nnz, VarKind kind) {
  MilpInstance inst;
  for (int j = 0; j < n; ++j) inst.add_var(kind, 0.0, 1.0, 1.0);
  int placed = 0;
  for (int i = 0; i < m; ++i) {
    std::vector<Coef> coefs;
    for (int j = 0; j < n && placed < nnz; ++j) {
      if ((i + j) % (n * m / nnz) == 0) {
        coefs.push_back({j, 1.0});
        ++placed;
      }
    }
    inst.add_row(coefs, Relation::kLessEqual, 1.0);
  }
  return inst;
}

}  // namespace

TEST_CASE("pearson and deviation") {
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {6, 4, 2}) == doctest::Approx(-1.0));
  try {
    pearson({1, 2, 3}, {5, 5, 5});
    FAIL("expected degenerate");
  } catch (const Error& e) {
    CHECK(e.code() == "degenerate");
  }
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), Error);
  CHECK(deviation({0.1, 0.5}, {0.1, 0.5}) == 0.0);
  CHECK(deviation({0.2, 0.6}, {0.1, 0.5}) == doctest::Approx(0.1));
  CHECK(deviation({0.7, 0.3}, {0.5, 0.5}) == doctest::Approx(0.2));
  CHECK_THROWS_AS(deviation({}, {}), Error);
}

TEST_CASE("k-way accuracy") {
  std::vector<Eigen::VectorXd> milp, text;
  std::vector<std::string> cls;
  for (int c = 0; c < 5; ++c) {
    for (int r = 0; r < 3; ++r) {
      milp.push_back(Eigen::VectorXd::Unit(5, c));
      text.push_back(Eigen::VectorXd::Unit(5, c));
      cls.push_back("c" + std::to_string(c));
    }
  }
  Rng rng(1);
  CHECK(kway_accuracy(milp, text, cls, 4, 500, rng) == 1.0);
  CHECK_THROWS_AS(kway_accuracy(milp, text, cls, 6, 10, rng), Error);

  std::vector<Eigen::VectorXd> rm, rt;
  std::vector<std::string> rc;
  Rng gen(2);
  for (int i = 0; i < 10000; ++i) {
    rm.push_back(random_unit(gen, 16));
    rt.push_back(random_unit(gen, 16));
    rc.push_back("k" + std::to_string(i % 20));
  }
  Rng trials(3);
  const double chance = kway_accuracy(rm, rt, rc, 4, 10000, trials);
  CHECK(std::abs(chance - 0.25) <= 0.02);

  // A common rotation of both sets leaves the accuracy unchanged.
  Eigen::MatrixXd q = Eigen::MatrixXd::Random(16, 16);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(q);
  const Eigen::MatrixXd rot = qr.householderQ();
  std::vector<Eigen::VectorXd> rm2, rt2;
  for (const auto& v : rm) rm2.push_back(rot * v);
  for (const auto& v : rt) rt2.push_back(rot * v);
  Rng r1(9), r2(9);
  CHECK(kway_accuracy(rm, rt, rc, 4, 2000, r1) == kway_accuracy(rm2, rt2, rc, 4, 2000, r2));
}

TEST_CASE("time improvement") {
  CHECK(time_improvement({3, 7, 11}, {3, 7, 11}) == 0.0);
  CHECK(time_improvement({100, 100}, {50, 50}) == doctest::Approx(50.0));
  CHECK(time_improvement({10, 10}, {20, 20}) < 0.0);
  const double ab = time_improvement({4, 9}, {2, 5});
  const double ba = time_improvement({2, 5}, {4, 9});
  CHECK(ab > 0.0);
  CHECK(ba < 0.0);
  CHECK_THROWS_AS(shifted_geometric_mean({0.0, 1.0}), Error);
  CHECK(shifted_geometric_mean({1.0, 3.0}) == doctest::Approx(std::sqrt(8.0) - 1.0));
  CHECK(time_improvement_excluding({100, 100}, {60, 60}, {10, 10}) == doctest::Approx(50.0));
}

TEST_CASE("solved fraction") {
  using S = MilpStatus;
  CHECK(solved_fraction({S::kOptimal, S::kOptimal}) == 100.0);
  CHECK(solved_fraction({S::kTimeLimit, S::kInfeasible}) == 0.0);
  CHECK(solved_fraction({S::kOptimal, S::kOptimal, S::kOptimal, S::kTimeLimit}) == 75.0);
  CHECK_THROWS_AS(solved_fraction({}), Error);
}

TEST_CASE("histogram similarity") {
  const std::vector<double> xs = {0.05, 0.1, 0.1, 0.4, 0.9, 0.33, 0.7};
  const auto self = histogram_similarity(xs, xs);
  CHECK(self.correlation == doctest::Approx(1.0));
  CHECK(self.intersection == doctest::Approx(1.0));
  CHECK(self.chi_square == doctest::Approx(0.0));
  CHECK(self.bhattacharyya == doctest::Approx(0.0).epsilon(1e-7));

  SimilarityConfig two;
  two.n_bins = 2;
  const auto d = compare_histograms({1.0, 0.0}, {0.0, 1.0}, two);
  CHECK(d.intersection == 0.0);
  CHECK(d.chi_square == doctest::Approx(2.0 / (1.0 + two.eps)));
  CHECK(d.bhattacharyya == two.clamp);
  CHECK(d.correlation == doctest::Approx(-1.0));

  try {
    compare_histograms({0.5, 0.5}, {0.5, 0.5}, two);
    FAIL("expected degenerate");
  } catch (const Error& e) {
    CHECK(e.code() == "degenerate");
  }

  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a, b;
    for (int i = 0; i < 60; ++i) {
      a.push_back(rng.uniform());
      b.push_back(rng.uniform() * rng.uniform());
    }
    const auto s = histogram_similarity(a, b);
    CHECK(s.intersection >= 0.0);
    CHECK(s.intersection <= 1.0);
    CHECK(s.chi_square >= 0.0);
    CHECK(s.bhattacharyya >= 0.0);
  }
  const auto h = histogram({-1.0, 0.0, 0.49, 0.5, 1.0, 2.0}, 2);
  REQUIRE(h.size() == 2);
  CHECK(h[0] + h[1] == doctest::Approx(1.0));
  CHECK(h[0] == doctest::Approx(0.5));
}

TEST_CASE("class splits") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("c" + std::to_string(i));
  SplitSpec spec;
  spec.seed = 7;
  const auto s = split_classes(ids, spec);
  CHECK(s.train.size() == 7);
  CHECK(s.valid.size() == 1);
  CHECK(s.test.size() == 2);
  std::set<std::string> all(s.train.begin(), s.train.end());
  all.insert(s.valid.begin(), s.valid.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 10);
  const auto again = split_classes(ids, spec);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK_THROWS_AS(split_classes({"a", "b", "c"}, spec), Error);
}

TEST_CASE("corpus statistics") {
  const auto inst = grid_instance(10, 10, 20, VarKind::kBinary);
  std::size_t nnz = 0;
  for (const auto& r : inst.rows) nnz += r.coefs.size();
  REQUIRE(nnz == 20);
  const auto one = corpus_stats({inst});
  CHECK(one.at("density").mean == doctest::Approx(0.2));
  CHECK(one.at("continuous_ratio").mean == 0.0);
  const auto two = corpus_stats({inst, inst});
  CHECK(two.at("n_vars").std == 0.0);
  CHECK(two.at("n_vars").mean == 10.0);
  const auto ms = mean_std({1.0, 3.0});
  CHECK(ms.mean == 2.0);
  CHECK(ms.std == 1.0);
}
