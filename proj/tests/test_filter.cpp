#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "milpevo/filter.hpp"

using namespace milpevo;

namespace {

SolveStats in_range() {
  SolveStats s;
  s.solve_time = 50.0;
  s.presolve_time = 1.0;
  s.n_vars = 1000.0;
  s.n_bin_int = 500.0;
  s.n_cons = 800.0;
  s.n_nodes = 100.0;
  s.gap = 0.5;
  return s;
}

double up(double x) { return std::nextafter(x, std::numeric_limits<double>::infinity()); }
double down(double x) { return std::nextafter(x, -std::numeric_limits<double>::infinity()); }

std::vector<double> as_doubles(const std::vector<ParamValue>& vs) {
  std::vector<double> out;
  for (const auto& v : vs) out.push_back(std::get<double>(v));
  return out;
}

}  // namespace

TEST_CASE("default criteria hold the listed intervals") {
  const FilterCriteria c;
  CHECK(c.solve_time.lo == 20.0);
  CHECK(c.solve_time.hi == 180.0);
  CHECK(c.presolve_time.lo == 0.0);
  CHECK(c.presolve_time.hi == 15.0);
  CHECK(c.presolve_fraction.lo == 0.0);
  CHECK(c.presolve_fraction.hi == 0.2);
  CHECK(c.total_vars.lo == 50.0);
  CHECK(c.total_vars.hi == 50000.0);
  CHECK(c.bin_int_vars.lo == 50.0);
  CHECK(c.bin_int_vars.hi == 20000.0);
  CHECK(c.total_cons.lo == 50.0);
  CHECK(c.total_cons.hi == 50000.0);
  CHECK(c.bnb_nodes.lo == 10.0);
  CHECK(c.bnb_nodes.hi == 5000.0);
  CHECK(c.gap.lo == 0.0);
  CHECK(c.gap.hi == 3.0);
  for (const auto& [name, iv] : c.named()) CHECK(iv.lo <= iv.hi);
  const auto p = FilterCriteria::profile("paper");
  CHECK(criteria_to_json(p) == criteria_to_json(c));
  CHECK_THROWS_AS(FilterCriteria::profile("huge"), Error);
  const auto d = FilterCriteria::desk();
  CHECK(criteria_from_json(criteria_to_json(d)).bnb_nodes.hi == d.bnb_nodes.hi);
}

TEST_CASE("accept examples") {
  CHECK(accept(in_range(), {}).ok);
  auto s = in_range();
  s.solve_time = 10.0;
  auto r = accept(s, {});
  CHECK_FALSE(r.ok);
  CHECK(r.reasons == std::vector<std::string>{"solve_time"});
  s = in_range();
  s.n_nodes = 5001.0;
  r = accept(s, {});
  CHECK(r.reasons == std::vector<std::string>{"bnb_nodes"});
  s = in_range();
  s.solve_time = 0.0;
  s.presolve_time = 1.0;
  r = accept(s, {});
  CHECK(r.reasons == std::vector<std::string>{"solve_time", "presolve_fraction"});
}

TEST_CASE("every interval endpoint is closed and one ulp outside rejects") {
  const FilterCriteria c;
  for (int end = 0; end < 2; ++end) {
    const std::pair<const char*, double SolveStats::*> fields[] = {
        {"solve_time", &SolveStats::solve_time},   {"presolve_time", &SolveStats::presolve_time},
        {"total_vars", &SolveStats::n_vars},        {"bin_int_vars", &SolveStats::n_bin_int},
        {"total_cons", &SolveStats::n_cons},        {"bnb_nodes", &SolveStats::n_nodes},
        {"gap", &SolveStats::gap}};
    for (const auto& [name, member] : fields) {
      Interval iv{};
      for (const auto& [n, v] : c.named()) {
        if (n == name) iv = v;
      }
      const double edge = end == 0 ? iv.lo : iv.hi;
      SolveStats t = in_range();
      // Keep the presolve fraction legal while moving solve or presolve time.
      if (std::string(name) == "solve_time") t.presolve_time = 0.0;
      if (std::string(name) == "presolve_time") t.solve_time = 180.0;
      t.*member = edge;
      CAPTURE(name);
      CAPTURE(end);
      CHECK(accept(t, c).ok);
      t.*member = end == 0 ? down(edge) : up(edge);
      const auto r = accept(t, c);
      CHECK_FALSE(r.ok);
      CHECK(std::find(r.reasons.begin(), r.reasons.end(), name) != r.reasons.end());
    }
  }
  // presolve_fraction through presolve_time / solve_time.
  SolveStats t = in_range();
  t.solve_time = 50.0;
  t.presolve_time = 10.0;
  CHECK(accept(t, c).ok);
  t.presolve_time = up(10.0);
  CHECK(accept(t, c).reasons == std::vector<std::string>{"presolve_fraction"});
  t.presolve_time = 0.0;
  CHECK(accept(t, c).ok);
}

TEST_CASE("search space rules") {
  const auto space = param_search_space(
      {{"n", std::int64_t{10}}, {"p", 0.5}, {"w", 2.0}, {"flag", true}});
  std::vector<std::int64_t> ints;
  for (const auto& v : space.at("n")) ints.push_back(std::get<std::int64_t>(v));
  CHECK(ints == std::vector<std::int64_t>{5, 7, 10, 20, 30, 50, 70, 90, 100, 150});
  const auto lin = as_doubles(space.at("p"));
  const std::vector<double> printed = {0.1,  0.17, 0.24, 0.31, 0.38, 0.45,
                                       0.52, 0.59, 0.66, 0.73, 0.8};
  REQUIRE(lin.size() == printed.size());
  for (std::size_t i = 0; i < lin.size(); ++i) CHECK(lin[i] == printed[i]);
  CHECK(as_doubles(space.at("w")) ==
        std::vector<double>{1.0, 1.5, 2.0, 4.0, 6.0, 10.0, 14.0, 18.0, 20.0, 30.0});
  const auto& flag = space.at("flag");
  REQUIRE(flag.size() == 2);
  CHECK(std::get<bool>(flag[0]) == true);
  CHECK(std::get<bool>(flag[1]) == false);
  // Truncation toward zero.
  const auto odd = param_search_space({{"n", std::int64_t{3}}});
  CHECK(std::get<std::int64_t>(odd.at("n")[0]) == 1);
  CHECK(std::get<std::int64_t>(odd.at("n")[1]) == 2);
  CHECK_THROWS_AS(param_search_space({{"s", std::string("x")}}), Error);
}

TEST_CASE("search_and_filter accepts the default probe and is deterministic") {
  const MilpClassRecord rec = seed_record(SeedClass::kIS);
  FilterOptions opt;
  opt.criteria = FilterCriteria::desk();
  Rng a(5), b(5);
  const auto ra = search_and_filter(rec, 1, opt, a);
  REQUIRE(ra.trials.size() == 1);
  CHECK(ra.accepted.size() == 1);
  CHECK(ra.accepted.front() == rec.params);
  const auto rb = search_and_filter(rec, 1, opt, b);
  CHECK(ra.accepted == rb.accepted);
  // Accepted parameters re-solve to an accepted verdict.
  for (const auto& p : ra.accepted) {
    const auto stats = measure(instantiate(rec, p, opt.instance_seed), opt);
    CHECK(accept(stats, opt.criteria).ok);
  }
}

TEST_CASE("an LP-integral class is rejected on the node lower bound") {
  MilpClassRecord rec = seed_record(SeedClass::kIS);
  rec.params["n_nodes"] = std::int64_t{60};
  rec.params["density"] = 1e-9;  // no edges: the root LP is integral
  FilterOptions opt;
  opt.criteria = FilterCriteria::desk();
  const auto stats = measure(instantiate(rec, rec.params, 42), opt);
  CHECK(stats.n_nodes == doctest::Approx(1.0));
  CHECK_FALSE(accept(stats, opt.criteria).ok);
  Rng rng(1);
  CHECK(search_and_filter(rec, 1, opt, rng).accepted.empty());
}
