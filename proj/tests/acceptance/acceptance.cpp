// Acceptance suite: one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "milpevo/evalkit.hpp"
#include "milpevo/pipeline.hpp"
#include "oracles.hpp"

using namespace milpevo;
using namespace milpevo::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// --- solver oracle ----------------------------------------------------------

Outcome solver_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  int mismatches = 0, checked = 0;
  const BranchRule rules[] = {BranchRule::kMostInfeasible, BranchRule::kPseudocost,
                              BranchRule::kStrong, BranchRule::kLearned};
  for (int t = 0; t < 200; ++t) {
    const MilpInstance inst = random_binary_milp(rng, 12, 10);
    const auto oracle = enumerate_binary(inst);
    for (BranchRule rule : rules) {
      SolveOptions opt;
      opt.rule = rule;
      opt.policy = [](const BranchContext& ctx) { return ctx.node.candidates.front(); };
      const MilpResult r = solve_milp(inst, opt);
      ++checked;
      const bool ok = oracle ? (r.status == MilpStatus::kOptimal && r.objective &&
                                std::abs(*r.objective - *oracle) <= 1e-9 * (1.0 + std::abs(*oracle)))
                             : r.status == MilpStatus::kInfeasible;
      if (!ok) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 60.0,
          std::to_string(checked) + " solves, " + std::to_string(mismatches) + " mismatches, " +
              fmt(secs) + " s (limit 60 s)"};
}

// --- LP duality -------------------------------------------------------------

Outcome lp_duality() {
  const auto t0 = Clock::now();
  Rng rng(77);
  double worst_gap = 0.0, worst_cs = 0.0;
  int not_optimal = 0;
  for (int t = 0; t < 100; ++t) {
    const MilpInstance inst = random_lp(rng, 10, 8, true);
    const LpSolution s = solve_lp(inst);
    if (s.status != LpStatus::kOptimal) {
      ++not_optimal;
      continue;
    }
    const bool minimize = inst.sense == Sense::kMinimize;
    double dual = inst.objective_offset;
    for (int i = 0; i < inst.n_cons(); ++i) {
      const Row& row = inst.rows[i];
      double act = 0.0;
      for (const Coef& c : row.coefs) act += c.value * s.primal[c.index];
      dual += s.duals[i] * row.rhs;
      worst_cs = std::max(worst_cs, std::abs(s.duals[i] * (act - row.rhs)));
    }
    for (int j = 0; j < inst.n_vars(); ++j) {
      const double d = s.reduced_costs[j];
      if (d == 0.0) continue;
      const bool at_lower = (d > 0) == minimize;
      const double bound = at_lower ? inst.lower[j] : inst.upper[j];
      dual += d * bound;
      worst_cs = std::max(worst_cs, std::abs(d * (s.primal[j] - bound)));
    }
    worst_gap = std::max(worst_gap, std::abs(s.objective - dual));
  }
  const double secs = seconds_since(t0);
  return {not_optimal == 0 && worst_gap <= 1e-6 && worst_cs <= 1e-6 && secs < 10.0,
          "max |primal-dual| " + fmt(worst_gap) + ", max slackness " + fmt(worst_cs) + ", " +
              fmt(secs) + " s (limits 1e-6, 1e-6, 10 s)"};
}

// --- gradient checks --------------------------------------------------------

BipartiteGraph tiny_graph(GraphSchema schema, int n, int m, Rng& rng) {
  BipartiteGraph g;
  g.schema = schema;
  const int vd = schema == GraphSchema::kGap ? kGapVarDim : kBranchVarDim;
  const int cd = schema == GraphSchema::kGap ? kGapConsDim : kBranchConsDim;
  g.var_features = Mat(n, vd);
  g.cons_features = Mat(m, cd);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < vd; ++j) g.var_features(i, j) = rng.normal();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < cd; ++j) g.cons_features(i, j) = rng.normal();
  for (int c = 0; c < m; ++c) {
    for (int v = 0; v < n; ++v) {
      if ((c + v) % 2 == 0 || v == c) {
        g.edge_cons.push_back(c);
        g.edge_var.push_back(v);
        g.edge_value.push_back(rng.uniform(-1.0, 1.0));
      }
    }
  }
  return g;
}

GnnParams tiny_params(Task task, Rng& rng) {
  GnnHyper h = default_hyper(task);
  h.d_hidden = 16;
  h.ff_width = 64;
  h.embed_dim = 8;
  return init_params(h, rng);
}

Outcome grad_checks() {
  const auto t0 = Clock::now();
  Rng rng(5);
  GapExample ge;
  ge.id = "g";
  ge.graph = tiny_graph(GraphSchema::kGap, 5, 4, rng);
  ge.label = 0.4;
  const double gap = grad_check_gap(tiny_params(Task::kGap, rng), ge, rng).max_rel_error;
  BranchSample bs;
  bs.instance_id = "b";
  bs.graph = tiny_graph(GraphSchema::kBranch, 6, 4, rng);
  bs.candidates = {1, 3, 4};
  bs.expert_action = 3;
  const double br = grad_check_branch(tiny_params(Task::kBranch, rng), bs, rng).max_rel_error;
  std::vector<BipartiteGraph> gs;
  for (int i = 0; i < 3; ++i) gs.push_back(tiny_graph(GraphSchema::kGap, 5, 4, rng));
  std::vector<const BipartiteGraph*> ptrs;
  for (const auto& g : gs) ptrs.push_back(&g);
  Mat text(3, 8);
  for (int i = 0; i < 3; ++i) text.row(i) = text_embed("text " + std::to_string(i), 8).transpose();
  const double al = grad_check_align(tiny_params(Task::kAlign, rng), ptrs, text, rng).max_rel_error;
  const double secs = seconds_since(t0);
  return {gap < 1e-4 && br < 1e-4 && al < 1e-4 && secs < 60.0,
          "gap " + fmt(gap) + ", branch " + fmt(br) + ", align " + fmt(al) + ", " + fmt(secs) +
              " s (limits 1e-4, 60 s)"};
}

// --- filter bit-exactness ---------------------------------------------------

Outcome filter_exactness() {
  const FilterCriteria c;
  const std::vector<std::pair<std::string, Interval>> expected = {
      {"solve_time", {20.0, 180.0}},     {"presolve_time", {0.0, 15.0}},
      {"presolve_fraction", {0.0, 0.2}}, {"total_vars", {50.0, 5e4}},
      {"bin_int_vars", {50.0, 2e4}},     {"total_cons", {50.0, 5e4}},
      {"bnb_nodes", {10.0, 5000.0}},     {"gap", {0.0, 3.0}}};
  int bad = 0;
  const auto named = c.named();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (named[i].first != expected[i].first ||
        std::memcmp(&named[i].second.lo, &expected[i].second.lo, sizeof(double)) != 0 ||
        std::memcmp(&named[i].second.hi, &expected[i].second.hi, sizeof(double)) != 0) {
      ++bad;
    }
  }
  // Closed endpoints accept, one ulp outside rejects.
  const auto base = [] {
    SolveStats s;
    s.solve_time = 50;
    s.presolve_time = 1;
    s.n_vars = 1000;
    s.n_bin_int = 500;
    s.n_cons = 800;
    s.n_nodes = 100;
    s.gap = 0.5;
    return s;
  };
  const double inf = std::numeric_limits<double>::infinity();
  const std::pair<double SolveStats::*, std::size_t> fields[] = {
      {&SolveStats::solve_time, 0}, {&SolveStats::presolve_time, 1}, {&SolveStats::n_vars, 3},
      {&SolveStats::n_bin_int, 4},  {&SolveStats::n_cons, 5},        {&SolveStats::n_nodes, 6},
      {&SolveStats::gap, 7}};
  int endpoint_failures = 0;
  for (const auto& [member, idx] : fields) {
    for (int end = 0; end < 2; ++end) {
      SolveStats s = base();
      if (idx == 0) s.presolve_time = 0.0;
      if (idx == 1) s.solve_time = 180.0;
      const double edge = end == 0 ? named[idx].second.lo : named[idx].second.hi;
      s.*member = edge;
      if (!accept(s, c).ok) ++endpoint_failures;
      s.*member = std::nextafter(edge, end == 0 ? -inf : inf);
      if (accept(s, c).ok) ++endpoint_failures;
    }
  }
  {
    SolveStats s = base();
    s.presolve_time = 10.0;  // fraction exactly 0.2
    if (!accept(s, c).ok) ++endpoint_failures;
    s.presolve_time = std::nextafter(10.0, inf);
    if (accept(s, c).ok) ++endpoint_failures;
    s.presolve_time = 0.0;  // fraction exactly 0
    if (!accept(s, c).ok) ++endpoint_failures;
  }
  // Grid rules.
  const auto space = param_search_space({{"n", std::int64_t{10}}, {"p", 0.5}, {"b", true}});
  std::vector<std::int64_t> ints;
  for (const auto& v : space.at("n")) ints.push_back(std::get<std::int64_t>(v));
  const bool int_ok = ints == std::vector<std::int64_t>{5, 7, 10, 20, 30, 50, 70, 90, 100, 150};
  const std::vector<double> lin = {0.1, 0.17, 0.24, 0.31, 0.38, 0.45, 0.52, 0.59, 0.66, 0.73, 0.8};
  bool lin_ok = space.at("p").size() == lin.size();
  for (std::size_t i = 0; lin_ok && i < lin.size(); ++i) {
    const double v = std::get<double>(space.at("p")[i]);
    lin_ok = std::memcmp(&v, &lin[i], sizeof(double)) == 0;
  }
  const auto& b = space.at("b");
  const bool bool_ok = b.size() == 2 && std::get<bool>(b[0]) && !std::get<bool>(b[1]);
  const bool ok = bad == 0 && endpoint_failures == 0 && int_ok && lin_ok && bool_ok;
  return {ok, "interval mismatches " + std::to_string(bad) + ", endpoint failures " +
                  std::to_string(endpoint_failures) + ", int/float/bool rules " +
                  (int_ok ? "ok" : "bad") + "/" + (lin_ok ? "ok" : "bad") + "/" +
                  (bool_ok ? "ok" : "bad")};
}

// --- loss table -------------------------------------------------------------

Outcome loss_table() {
  const double l1 = std::log1p(std::exp(-1.0));
  const double l2 = std::log1p(std::exp(1.0));
  Vec one(1), two(2), uni = Vec::Constant(5, 0.7);
  one << 3.0;
  two << 1.0, 0.0;
  const Mat eye = Mat::Identity(2, 2);
  Mat swapped(2, 2);
  swapped << 0, 1, 1, 0;
  Mat k1(1, 2);
  k1 << 0.3, 0.4;
  const std::vector<std::pair<double, double>> rows = {
      {huber_loss(2.0, 2.0), 0.0},
      {huber_loss(0.5, 0.0), 0.125},
      {huber_loss(0.0, 2.0), 1.5},
      {branch_ce_loss(one, 0), 0.0},
      {branch_ce_loss(uni, 2), std::log(5.0)},
      {branch_ce_loss(two, 0), 0.31326},
      {contrastive_loss(k1, k1), 0.0},
      {contrastive_loss(eye, eye), 0.31326},
      {contrastive_loss(eye, swapped), 1.31326}};
  double worst = 0.0;
  for (const auto& [got, want] : rows) worst = std::max(worst, std::abs(got - want));
  const bool exact = std::abs(branch_ce_loss(two, 0) - l1) < 1e-12 &&
                     std::abs(contrastive_loss(eye, swapped) - l2) < 1e-12;
  return {worst <= 1e-5 && exact, "max deviation from the table " + fmt(worst) + " (limit 1e-5)"};
}

// --- strong branching -------------------------------------------------------

Outcome strong_dominance() {
  const auto t0 = Clock::now();
  const MilpClassRecord ca = seed_record(SeedClass::kCA);
  double strong = 0.0, mi = 0.0;
  int unsolved = 0;
  for (int i = 0; i < 50; ++i) {
    const MilpInstance inst = instantiate(ca, ca.params, 5000 + static_cast<std::uint64_t>(i));
    SolveOptions a;
    a.rule = BranchRule::kStrong;
    a.limits.time_seconds = 20.0;
    a.limits.deterministic_time = true;
    SolveOptions b = a;
    b.rule = BranchRule::kMostInfeasible;
    const MilpResult ra = solve_milp(inst, a);
    const MilpResult rb = solve_milp(inst, b);
    if (ra.status != MilpStatus::kOptimal || rb.status != MilpStatus::kOptimal) ++unsolved;
    strong += static_cast<double>(ra.nodes_processed);
    mi += static_cast<double>(rb.nodes_processed);
  }
  strong /= 50.0;
  mi /= 50.0;
  return {strong <= mi, "mean nodes strong " + fmt(strong) + " vs most-infeasible " + fmt(mi) +
                            ", unsolved " + std::to_string(unsolved) + ", " +
                            fmt(seconds_since(t0)) + " s"};
}

// --- metric identities ------------------------------------------------------

Outcome metric_identities() {
  Rng rng(8);
  std::vector<double> xs;
  for (int i = 0; i < 30; ++i) xs.push_back(0.1 + rng.uniform() * 50.0);
  const double ti = time_improvement(xs, xs);
  std::vector<double> vals;
  for (int i = 0; i < 200; ++i) vals.push_back(rng.uniform());
  const auto hs = histogram_similarity(vals, vals);
  const bool hs_ok = std::abs(hs.correlation - 1.0) < 1e-9 && std::abs(hs.intersection - 1.0) < 1e-9 &&
                     std::abs(hs.chi_square) < 1e-9 && std::abs(hs.bhattacharyya) < 1e-6;
  std::vector<Eigen::VectorXd> m, t;
  std::vector<std::string> cls;
  for (int i = 0; i < 10000; ++i) {
    Eigen::VectorXd a(16), b(16);
    for (int j = 0; j < 16; ++j) {
      a(j) = rng.normal();
      b(j) = rng.normal();
    }
    m.push_back(a.normalized());
    t.push_back(b.normalized());
    cls.push_back("c" + std::to_string(i % 20));
  }
  Rng trials(9);
  const double kw = kway_accuracy(m, t, cls, 4, 10000, trials);
  return {ti == 0.0 && hs_ok && std::abs(kw - 0.25) <= 0.02,
          "time_improvement(x,x) " + fmt(ti) + ", self-similarity (" + fmt(hs.correlation) + ", " +
              fmt(hs.intersection) + ", " + fmt(hs.chi_square) + ", " + fmt(hs.bhattacharyya) +
              "), random 4-way " + fmt(kw)};
}

// --- end-to-end desk pipeline -----------------------------------------------

nlohmann::json read_json(const std::string& path) {
  return nlohmann::json::parse(read_file(path));
}

Outcome end_to_end() {
  const auto t0 = Clock::now();
  PipelineConfig c = PipelineConfig::defaults("desk");
  c.workspace = fresh_dir("milpevo_acceptance_e2e").string();
  const Logger log = [t0](const std::string& line) {
    std::cerr << "[" << fmt(seconds_since(t0), 5) << " s] " << line << "\n";
  };
  run_seed_gen(c, log);
  {
    auto llm = make_llm(c);
    run_evolve(c, *llm, false, log);
  }
  std::size_t accepted = load_classes(c.workspace).size() - std::size(kAllSeedClasses);
  std::ostringstream d;
  d << "accepted " << accepted << " (need >= 10)";
  bool ok = accepted >= 10;

  for (Task t : {Task::kGap, Task::kAlign, Task::kBranch}) {
    const auto rc = run_collect(c, t, log);
    log(std::string(to_string(t)) + " dataset " + rc.summary);
    run_train(c, t, log);
    run_eval(c, t, log);
  }
  const fs::path reports = fs::path(c.workspace) / "reports";
  const auto gap = read_json((reports / "gap.json").string());
  const auto gap_manifest = read_json((fs::path(c.workspace) / "datasets" / "gap.manifest.json").string());
  std::set<std::string> gap_classes;
  for (const auto& line : [&] {
         std::vector<std::string> lines;
         std::istringstream in(read_file((fs::path(c.workspace) / "datasets" / "gap.jsonl").string()));
         std::string l;
         while (std::getline(in, l)) lines.push_back(l);
         return lines;
       }()) {
    if (!line.empty()) gap_classes.insert(nlohmann::json::parse(line).at("class_id").get<std::string>());
  }
  const double r = gap.at("pearson").is_null() ? -1.0 : gap.at("pearson").get<double>();
  const int gap_steps = c.gap_train.steps;
  ok = ok && r >= 0.5 && gap_classes.size() >= 4 && gap_steps == 3000;
  d << "; gap r " << fmt(r) << " (need >= 0.5) over " << gap_classes.size() << " classes, "
    << gap_steps << " steps";

  const auto align = read_json((reports / "align.json").string());
  const double acc4 = align.at("4way_accuracy").get<double>();
  ok = ok && acc4 >= 0.6;
  d << "; align 4-way " << fmt(acc4) << " (need >= 0.6)";

  const auto branch = read_json((reports / "branch.json").string());
  const double top1 = branch.at("top1_accuracy").get<double>();
  const double base = branch.at("random_baseline").get<double>();
  ok = ok && top1 >= 3.0 * base;
  d << "; branch top-1 " << fmt(top1) << " vs 3 x baseline " << fmt(3.0 * base);

  const double secs = seconds_since(t0);
  ok = ok && secs < 2700.0;
  d << "; wall " << fmt(secs, 5) << " s (limit 2700 s)";
  (void)gap_manifest;
  return {ok, d.str()};
}

// --- determinism ------------------------------------------------------------

std::vector<std::string> small_pipeline(const fs::path& ws) {
  PipelineConfig c = PipelineConfig::defaults("desk");
  c.workspace = ws.string();
  c.seed = 7;
  c.seed_instances = 1;
  c.levels = 1;
  c.k = 3;
  c.gap_instances = 2;
  c.branch_classes = {"IS"};
  c.branch_instances = 10;
  c.max_samples = 5;
  c.align_instances = 2;
  c.eval_instances = 1;
  for (TrainConfig* t : {&c.gap_train, &c.branch_train, &c.align_train}) {
    t->steps = 20;
    t->epochs = 0;
    t->eval_every = 10;
    t->batch_size = 4;
  }
  std::vector<std::string> hashes;
  hashes.push_back(run_seed_gen(c).manifest_hash);
  auto llm = make_llm(c);
  hashes.push_back(run_evolve(c, *llm).manifest_hash);
  for (Task t : {Task::kGap, Task::kBranch, Task::kAlign}) {
    hashes.push_back(run_collect(c, t).manifest_hash);
    hashes.push_back(run_train(c, t).manifest_hash);
    hashes.push_back(run_eval(c, t).manifest_hash);
  }
  return hashes;
}

Outcome determinism() {
  const auto t0 = Clock::now();
  const auto a = small_pipeline(fresh_dir("milpevo_acceptance_det_a"));
  const auto b = small_pipeline(fresh_dir("milpevo_acceptance_det_b"));
  int differ = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differ += a[i] != b[i];
  return {differ == 0 && a.size() == 11,
          std::to_string(a.size()) + " stage manifests compared, " + std::to_string(differ) +
              " differ, " + fmt(seconds_since(t0)) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only, allowed_to_fail;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--allow-fail" && i + 1 < argc) {
      allowed_to_fail.insert(argv[++i]);
    } else {
      only.insert(a);
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"solver_oracle", solver_oracle},
      {"lp_duality", lp_duality},
      {"gradient_checks", grad_checks},
      {"filter_exactness", filter_exactness},
      {"loss_table", loss_table},
      {"end_to_end_desk", end_to_end},
      {"strong_branching_nodes", strong_dominance},
      {"metric_identities", metric_identities},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    if (!o.pass && !allowed_to_fail.count(name)) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
