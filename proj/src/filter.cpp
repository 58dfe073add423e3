#include "milpevo/filter.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "milpevo/util.hpp"

namespace milpevo {

FilterCriteria FilterCriteria::desk() {
  FilterCriteria c;
  c.solve_time = {0.05, 5.0};
  c.presolve_time = {0.0, 1.5};
  c.total_vars = {50.0, 5000.0};
  c.bin_int_vars = {50.0, 2000.0};
  c.total_cons = {50.0, 5000.0};
  c.bnb_nodes = {10.0, 1000.0};
  return c;
}

FilterCriteria FilterCriteria::profile(std::string_view name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw Error("config", "unknown filter profile '" + std::string(name) + "'");
}

std::vector<std::pair<std::string, Interval>> FilterCriteria::named() const {
  return {{"solve_time", solve_time},     {"presolve_time", presolve_time},
          {"presolve_fraction", presolve_fraction}, {"total_vars", total_vars},
          {"bin_int_vars", bin_int_vars}, {"total_cons", total_cons},
          {"bnb_nodes", bnb_nodes},       {"gap", gap}};
}

std::string criteria_to_json(const FilterCriteria& c) {
  nlohmann::ordered_json j;
  for (const auto& [name, iv] : c.named()) j[name] = {iv.lo, iv.hi};
  return j.dump();
}

FilterCriteria criteria_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  FilterCriteria c;
  std::map<std::string, Interval*> slots = {
      {"solve_time", &c.solve_time},     {"presolve_time", &c.presolve_time},
      {"presolve_fraction", &c.presolve_fraction}, {"total_vars", &c.total_vars},
      {"bin_int_vars", &c.bin_int_vars}, {"total_cons", &c.total_cons},
      {"bnb_nodes", &c.bnb_nodes},       {"gap", &c.gap}};
  for (const auto& [name, value] : j.items()) {
    auto it = slots.find(name);
    if (it == slots.end()) throw Error("config", "unknown criterion '" + name + "'");
    if (!value.is_array() || value.size() != 2) {
      throw Error("config", "criterion '" + name + "' needs [lo, hi]");
    }
    const Interval iv{value[0].get<double>(), value[1].get<double>()};
    if (!(iv.lo <= iv.hi)) throw Error("config", "criterion '" + name + "' has lo > hi");
    *it->second = iv;
  }
  return c;
}

AcceptResult accept(const SolveStats& s, const FilterCriteria& c) {
  double fraction = 0.0;
  if (s.solve_time > 0.0) {
    fraction = s.presolve_time / s.solve_time;
  } else if (s.presolve_time != 0.0) {
    fraction = 1.0;
  }
  const std::pair<const char*, bool> checks[] = {
      {"solve_time", c.solve_time.contains(s.solve_time)},
      {"presolve_time", c.presolve_time.contains(s.presolve_time)},
      {"presolve_fraction", c.presolve_fraction.contains(fraction)},
      {"total_vars", c.total_vars.contains(s.n_vars)},
      {"bin_int_vars", c.bin_int_vars.contains(s.n_bin_int)},
      {"total_cons", c.total_cons.contains(s.n_cons)},
      {"bnb_nodes", c.bnb_nodes.contains(s.n_nodes)},
      {"gap", c.gap.contains(s.gap)},
  };
  AcceptResult r;
  for (const auto& [name, ok] : checks) {
    if (!ok) r.reasons.emplace_back(name);
  }
  r.ok = r.reasons.empty();
  return r;
}

std::map<std::string, std::vector<ParamValue>> param_search_space(const ParamMap& params) {
  static constexpr double kMultipliers[] = {0.5, 0.75, 1, 2, 3, 5, 7, 9, 10, 15};
  std::map<std::string, std::vector<ParamValue>> space;
  for (const auto& [name, value] : params) {
    auto& out = space[name];
    if (const auto* i = std::get_if<std::int64_t>(&value)) {
      for (double m : kMultipliers) {
        out.emplace_back(static_cast<std::int64_t>(static_cast<double>(*i) * m));
      }
    } else if (const auto* d = std::get_if<double>(&value)) {
      if (*d >= 1.0) {
        for (double m : kMultipliers) out.emplace_back(*d * m);
      } else {
        // 11 evenly spaced values on [0.1, 0.8].
        for (int k = 0; k <= 10; ++k) {
          out.emplace_back(std::round((0.1 + 0.07 * k) * 100.0) / 100.0);
        }
      }
    } else if (std::holds_alternative<bool>(value)) {
      out = {true, false};
    } else {
      throw Error("bad-params", "parameter '" + name + "' has no search space");
    }
  }
  return space;
}

namespace {

void fill_sizes(const MilpInstance& inst, SolveStats& s) {
  s.n_vars = inst.n_vars();
  s.n_cons = inst.n_cons();
  s.n_bin_int = 0;
  for (VarKind k : inst.kind) s.n_bin_int += k == VarKind::kContinuous ? 0 : 1;
}

}  // namespace

SolveStats measure(const MilpInstance& instance, const FilterOptions& options, MilpResult* out) {
  SolveStats s;
  fill_sizes(instance, s);
  const FilterCriteria& c = options.criteria;
  SolveOptions so;
  so.rule = options.rule;
  so.limits.time_seconds = c.solve_time.hi;
  so.limits.deterministic_time = options.deterministic_clock;
  so.limits.max_nodes = static_cast<std::int64_t>(std::floor(c.bnb_nodes.hi)) + 1;
  const MilpResult r = solve_milp(instance, so);
  s.n_nodes = static_cast<double>(r.nodes_processed);
  s.solve_time = options.deterministic_clock ? r.deterministic_seconds : r.solve_seconds;
  if (r.status == MilpStatus::kTimeLimit && s.n_nodes <= c.bnb_nodes.hi) {
    s.solve_time = std::numeric_limits<double>::infinity();
  }
  s.gap = r.objective ? integrality_gap(r.root_lp_objective, *r.objective, 3.0)
                      : std::numeric_limits<double>::infinity();
  if (out) *out = r;
  return s;
}

FilterResult search_and_filter(const MilpClassRecord& record, int budget,
                               const FilterOptions& options, Rng& rng, SandboxRunner* runner) {
  if (budget < 1) throw Error("config", "filter budget must be at least 1");
  const auto space = param_search_space(record.params);
  FilterResult result;
  for (int t = 0; t < budget; ++t) {
    FilterTrial trial;
    if (t == 0) {
      trial.params = record.params;
    } else {
      for (const auto& [name, values] : space) trial.params[name] = values[rng.index(values.size())];
    }
    try {
      const MilpInstance inst = instantiate(record, trial.params, options.instance_seed, runner);
      fill_sizes(inst, trial.stats);
      const FilterCriteria& c = options.criteria;
      if (!c.total_vars.contains(trial.stats.n_vars)) trial.verdict.reasons.push_back("total_vars");
      if (!c.bin_int_vars.contains(trial.stats.n_bin_int)) {
        trial.verdict.reasons.push_back("bin_int_vars");
      }
      if (!c.total_cons.contains(trial.stats.n_cons)) trial.verdict.reasons.push_back("total_cons");
      if (trial.verdict.reasons.empty()) {
        trial.stats = measure(inst, options);
        trial.solved = true;
        trial.verdict = accept(trial.stats, c);
      }
    } catch (const Error& e) {
      trial.verdict.reasons.push_back("generation: " + std::string(e.what()));
    }
    if (trial.verdict.ok) result.accepted.push_back(trial.params);
    result.trials.push_back(std::move(trial));
    if (options.stop_after_accepted > 0 &&
        static_cast<int>(result.accepted.size()) >= options.stop_after_accepted) {
      break;
    }
  }
  return result;
}

}  // namespace milpevo
