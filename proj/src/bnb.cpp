#include "milpevo/bnb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <memory>
#include <queue>

#include "json.hpp"
#include "milpevo/util.hpp"

namespace milpevo {

std::string_view to_string(BranchRule rule) {
  switch (rule) {
    case BranchRule::kMostInfeasible: return "most-infeasible";
    case BranchRule::kPseudocost: return "pseudocost";
    case BranchRule::kStrong: return "strong";
    case BranchRule::kLearned: return "learned";
  }
  return "?";
}

std::string_view to_string(MilpStatus status) {
  switch (status) {
    case MilpStatus::kOptimal: return "optimal";
    case MilpStatus::kTimeLimit: return "time-limit";
    case MilpStatus::kInfeasible: return "infeasible";
    case MilpStatus::kUnbounded: return "unbounded";
  }
  return "?";
}

BranchRule parse_branch_rule(std::string_view text) {
  if (text == "most-infeasible") return BranchRule::kMostInfeasible;
  if (text == "pseudocost") return BranchRule::kPseudocost;
  if (text == "strong") return BranchRule::kStrong;
  if (text == "learned") return BranchRule::kLearned;
  throw Error("bad-rule", "unknown branching rule '" + std::string(text) + "'");
}

void PseudocostStats::update(int j, bool up, double gain, double distance) {
  if (!(distance > 0.0)) return;
  const double unit = std::max(gain, 0.0) / distance;
  if (up) {
    up_sum[j] += unit;
    ++up_count[j];
  } else {
    down_sum[j] += unit;
    ++down_count[j];
  }
}

namespace {

constexpr double kIntegralityTol = 1e-6;
constexpr double kScoreFloor = 1e-6;
// Simplex work units per second on the reference machine.
constexpr double kSecondsPerWorkUnit = 1.0e-9;

double fractionality(double x) { return x - std::floor(x); }

bool is_fractional(double x) {
  const double f = fractionality(x);
  return std::min(f, 1.0 - f) > kIntegralityTol;
}

}  // namespace

int pseudocost_select(const std::vector<int>& candidates, const std::vector<double>& values,
                      const PseudocostStats& stats) {
  if (candidates.empty()) throw Error("no-candidates", "pseudocost_select: empty candidates");
  double down_total = 0.0, up_total = 0.0;
  std::int64_t down_n = 0, up_n = 0;
  for (std::size_t j = 0; j < stats.down_sum.size(); ++j) {
    down_total += stats.down_sum[j];
    down_n += stats.down_count[j];
    up_total += stats.up_sum[j];
    up_n += stats.up_count[j];
  }
  const double down_global = down_n > 0 ? down_total / down_n : 1.0;
  const double up_global = up_n > 0 ? up_total / up_n : 1.0;
  int best = -1;
  double best_score = -1.0;
  for (int j : candidates) {
    const double f = fractionality(values[j]);
    const double down_avg = stats.down_count[j] > 0 ? stats.down_sum[j] / stats.down_count[j]
                                                    : down_global;
    const double up_avg = stats.up_count[j] > 0 ? stats.up_sum[j] / stats.up_count[j] : up_global;
    const double score =
        std::max(down_avg * f, kScoreFloor) * std::max(up_avg * (1.0 - f), kScoreFloor);
    if (score > best_score || (score == best_score && j < best)) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

int most_infeasible_select(const std::vector<int>& candidates, const std::vector<double>& values) {
  if (candidates.empty()) throw Error("no-candidates", "most_infeasible_select: empty candidates");
  int best = -1;
  double best_score = -1.0;
  for (int j : candidates) {
    const double f = fractionality(values[j]);
    const double score = std::min(f, 1.0 - f);
    if (score > best_score || (score == best_score && j < best)) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

StrongBranchResult strong_branching_scores(const LpModel& model, const MilpInstance& instance,
                                           const std::vector<double>& lower,
                                           const std::vector<double>& upper,
                                           const LpSolution& node_lp,
                                           const std::vector<int>& candidates,
                                           const StrongBranchConfig& config,
                                           PseudocostStats* stats) {
  if (candidates.empty()) throw Error("no-candidates", "strong branching needs candidates");
  const double sign = instance.sense == Sense::kMaximize ? -1.0 : 1.0;
  const double z = sign * node_lp.objective;
  const double infeasible_gain = config.infeasible_factor * (1.0 + std::abs(z));
  const LpBasis basis = node_lp.basis();
  LpLimits limits;
  limits.max_iterations = config.child_iteration_cap;
  StrongBranchResult out;
  out.scores.reserve(candidates.size());
  auto child_gain = [&](int j, bool up, std::vector<double>& lo, std::vector<double>& hi) {
    LpSolution child;
    bool failed = false;
    try {
      child = model.solve(lo, hi, limits, &basis);
    } catch (const Error&) {
      failed = true;
    }
    ++out.lp_solves;
    if (failed) return infeasible_gain;
    out.lp_iterations += child.iterations;
    if (child.status == LpStatus::kInfeasible) return infeasible_gain;
    if (child.status != LpStatus::kOptimal) return config.min_gain;
    const double raw = std::max(sign * child.objective - z, 0.0);
    if (stats) {
      const double f = fractionality(node_lp.primal[j]);
      stats->update(j, up, raw, up ? 1.0 - f : f);
    }
    return std::max(raw, config.min_gain);
  };
  std::vector<double> lo = lower;
  std::vector<double> hi = upper;
  for (int j : candidates) {
    const double v = node_lp.primal[j];
    hi[j] = std::floor(v);
    const double down = child_gain(j, false, lo, hi);
    hi[j] = upper[j];
    lo[j] = std::ceil(v);
    const double up = child_gain(j, true, lo, hi);
    lo[j] = lower[j];
    out.scores.push_back(down * up);
  }
  const double top = *std::max_element(out.scores.begin(), out.scores.end());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    // Relative tie window absorbs last-bit noise between mirrored child LPs.
    if (out.scores[k] >= top * (1.0 - 1e-9) && (out.best < 0 || candidates[k] < out.best)) {
      out.best = candidates[k];
    }
  }
  return out;
}

double integrality_gap(double root_lp_objective, double milp_objective, double clip) {
  if (!std::isfinite(root_lp_objective) || !std::isfinite(milp_objective)) {
    throw Error("non-finite", "integrality_gap needs finite objectives");
  }
  if (std::abs(milp_objective) < 1e-9) return std::abs(root_lp_objective) < 1e-9 ? 0.0 : clip;
  const double gap = std::abs(milp_objective - root_lp_objective) / std::abs(milp_objective);
  return std::clamp(gap, 0.0, clip);
}

namespace {

struct PendingNode {
  std::int64_t id = 0;
  int depth = 0;
  std::vector<BoundChange> changes;
  LpBasis warm;
  double parent_bound = -kInf;  // internal minimization sense
  int branch_var = -1;
  bool branch_up = false;
  double branch_distance = 0.0;
};

struct QueueEntry {
  double bound;
  std::int64_t seq;
  std::shared_ptr<PendingNode> node;
  bool operator<(const QueueEntry& other) const {
    // std::priority_queue pops the largest; invert for best-first, FIFO ties.
    if (bound != other.bound) return bound > other.bound;
    return seq > other.seq;
  }
};

class Search;
using Selector = std::function<int(const BranchContext&, Search&)>;

class Search {
 public:
  Search(const MilpInstance& inst, const SolveOptions& options, Selector selector)
      : inst_(inst), options_(options), selector_(std::move(selector)), model_(inst),
        stats_(inst.n_vars()) {
    sign_ = inst.sense == Sense::kMaximize ? -1.0 : 1.0;
    const int m = inst.n_cons();
    const int n = inst.n_vars();
    work_per_iteration_ = static_cast<double>(m) * m + static_cast<double>(inst.nnz()) + n + m;
    internal_offset_ = sign_ * inst.objective_offset;
    integral_objective_ = true;
    for (int j = 0; j < n; ++j) {
      const double c = inst.objective[j];
      if (c == 0.0) continue;
      if (!is_integral_kind(inst.kind[j]) || c != std::floor(c)) integral_objective_ = false;
    }
  }

  MilpResult run();

  void stop() { stop_requested_ = true; }
  PseudocostStats& stats() { return stats_; }
  const LpModel& model() const { return model_; }

  StrongBranchResult strong(const BranchContext& ctx) {
    auto sb = strong_branching_scores(model_, inst_, ctx.lower, ctx.upper, ctx.node.lp,
                                      ctx.node.candidates, options_.strong, &stats_);
    account(sb.lp_iterations, sb.lp_solves);
    return sb;
  }

  int default_select(const BranchContext& ctx) {
    switch (options_.rule) {
      case BranchRule::kMostInfeasible:
        return most_infeasible_select(ctx.node.candidates, ctx.node.lp.primal);
      case BranchRule::kPseudocost:
        return pseudocost_select(ctx.node.candidates, ctx.node.lp.primal, stats_);
      case BranchRule::kStrong:
        return strong(ctx).best;
      case BranchRule::kLearned: {
        if (!options_.policy) throw Error("bad-policy", "learned rule without a policy");
        const auto t0 = std::chrono::steady_clock::now();
        const int j = options_.policy(ctx);
        result_.policy_seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return j;
      }
    }
    return -1;
  }

 private:
  void account(std::int64_t iterations, std::int64_t solves) {
    result_.lp_iterations += iterations;
    result_.lp_solves += solves;
    const double m = inst_.n_cons();
    work_ += static_cast<double>(iterations) * work_per_iteration_ +
             static_cast<double>(solves) * (m * m + static_cast<double>(inst_.nnz()));
  }

  double deterministic_seconds() const { return work_ * kSecondsPerWorkUnit; }

  double wall_seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  bool out_of_time() const {
    const double used = options_.limits.deterministic_time ? deterministic_seconds()
                                                           : wall_seconds();
    return used >= options_.limits.time_seconds;
  }

  double prune_threshold() const {
    if (!incumbent_) return kInf;
    return incumbent_value_ - 1e-9 * std::max(1.0, std::abs(incumbent_value_));
  }

  double effective_bound(double z) const {
    if (!integral_objective_) return z;
    return std::ceil(z - internal_offset_ - kIntegralityTol) + internal_offset_;
  }

  void node_bounds(const PendingNode& node, std::vector<double>& lo, std::vector<double>& hi) const {
    lo = inst_.lower;
    hi = inst_.upper;
    for (const BoundChange& c : node.changes) {
      lo[c.var] = c.lower;
      hi[c.var] = c.upper;
    }
  }

  void record_incumbent(const std::vector<double>& x, double z) {
    incumbent_ = x;
    incumbent_value_ = z;
    if (incumbent_sum_.empty()) incumbent_sum_.assign(x.size(), 0.0);
    for (std::size_t j = 0; j < x.size(); ++j) incumbent_sum_[j] += x[j];
    ++incumbent_count_;
    incumbent_average_.resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      incumbent_average_[j] = incumbent_sum_[j] / incumbent_count_;
    }
  }

  const MilpInstance& inst_;
  const SolveOptions& options_;
  Selector selector_;
  LpModel model_;
  PseudocostStats stats_;
  MilpResult result_;
  double sign_ = 1.0;
  double internal_offset_ = 0.0;
  bool integral_objective_ = false;
  double work_per_iteration_ = 0.0;
  double work_ = 0.0;
  std::chrono::steady_clock::time_point start_;
  std::optional<std::vector<double>> incumbent_;
  double incumbent_value_ = kInf;
  std::vector<double> incumbent_sum_;
  std::vector<double> incumbent_average_;
  std::int64_t incumbent_count_ = 0;
  bool stop_requested_ = false;
};

MilpResult Search::run() {
  start_ = std::chrono::steady_clock::now();
  std::priority_queue<QueueEntry> open;
  std::int64_t next_seq = 0;
  std::int64_t next_id = 1;
  open.push({-kInf, next_seq++, std::make_shared<PendingNode>()});
  bool incomplete = false;
  bool unbounded = false;
  bool root_done = false;
  LpLimits node_limits;
  node_limits.max_iterations = options_.node_lp_iteration_cap;
  std::vector<double> lo, hi;

  while (!open.empty()) {
    if (stop_requested_ || result_.nodes_processed >= options_.limits.max_nodes ||
        out_of_time()) {
      incomplete = true;
      break;
    }
    const QueueEntry entry = open.top();
    open.pop();
    if (entry.bound >= prune_threshold()) continue;
    const PendingNode& pending = *entry.node;
    node_bounds(pending, lo, hi);

    BranchNode node;
    node.id = pending.id;
    node.depth = pending.depth;
    node.changes = pending.changes;
    node.parent_bound = sign_ * pending.parent_bound;
    const std::int64_t solves_before = result_.lp_solves;
    bool breakdown = false;
    try {
      node.lp = model_.solve(lo, hi, node_limits, pending.warm.empty() ? nullptr : &pending.warm);
    } catch (const Error& e) {
      breakdown = true;
      ++result_.numeric_warnings;
      std::cerr << "warning: node " << node.id << " LP failed (" << e.what()
                << "); treated as infeasible\n";
    }
    ++result_.nodes_processed;
    account(breakdown ? 0 : node.lp.iterations, 1);

    if (!root_done) {
      root_done = true;
      if (breakdown) {
        incomplete = true;
        break;
      }
      result_.root_lp_objective = node.lp.objective;
      if (node.lp.status == LpStatus::kUnbounded) {
        unbounded = true;
        break;
      }
    }
    if (breakdown || node.lp.status == LpStatus::kInfeasible) {
      if (options_.on_node) options_.on_node(node);
      continue;
    }
    if (node.lp.status == LpStatus::kIterationLimit) {
      incomplete = true;
      if (options_.on_node) options_.on_node(node);
      continue;
    }
    if (node.lp.status == LpStatus::kUnbounded) {
      unbounded = true;
      break;
    }
    const double z = sign_ * node.lp.objective;
    if (pending.branch_var >= 0) {
      stats_.update(pending.branch_var, pending.branch_up, z - pending.parent_bound,
                    pending.branch_distance);
    }
    for (int j = 0; j < inst_.n_vars(); ++j) {
      if (is_integral_kind(inst_.kind[j]) && is_fractional(node.lp.primal[j])) {
        node.candidates.push_back(j);
      }
    }
    if (options_.on_node) options_.on_node(node);
    if (effective_bound(z) >= prune_threshold()) continue;
    if (node.candidates.empty()) {
      record_incumbent(node.lp.primal, z);
      continue;
    }

    BranchContext ctx{inst_, model_, node, lo, hi,
                      incumbent_ ? &*incumbent_ : nullptr,
                      incumbent_ ? &incumbent_average_ : nullptr, solves_before};
    const int j = selector_(ctx, *this);
    if (std::find(node.candidates.begin(), node.candidates.end(), j) == node.candidates.end()) {
      throw Error("bad-policy", "branching rule chose a non-candidate variable");
    }
    if (stop_requested_) {
      incomplete = true;
      break;
    }
    const double v = node.lp.primal[j];
    const double f = fractionality(v);
    const double child_bound = effective_bound(z);
    const LpBasis basis = node.lp.basis();
    for (int up = 0; up < 2; ++up) {
      auto child = std::make_shared<PendingNode>();
      child->id = next_id++;
      child->depth = node.depth + 1;
      child->changes = node.changes;
      if (up) child->changes.push_back({j, std::ceil(v), hi[j]});
      else child->changes.push_back({j, lo[j], std::floor(v)});
      child->warm = basis;
      child->parent_bound = z;
      child->branch_var = j;
      child->branch_up = up == 1;
      child->branch_distance = up ? 1.0 - f : f;
      open.push({child_bound, next_seq++, std::move(child)});
    }
  }

  result_.solve_seconds = wall_seconds();
  result_.deterministic_seconds = deterministic_seconds();
  if (incumbent_) {
    result_.incumbent = incumbent_;
    result_.objective = sign_ * incumbent_value_;
  }
  if (unbounded) {
    result_.status = MilpStatus::kUnbounded;
    result_.best_bound = sign_ * -kInf;
    return result_;
  }
  if (incomplete) {
    result_.status = MilpStatus::kTimeLimit;
    double bound = incumbent_ ? incumbent_value_ : kInf;
    while (!open.empty()) {
      bound = std::min(bound, open.top().bound);
      open.pop();
    }
    result_.best_bound = sign_ * bound;
    return result_;
  }
  result_.status = incumbent_ ? MilpStatus::kOptimal : MilpStatus::kInfeasible;
  result_.best_bound = incumbent_ ? sign_ * incumbent_value_ : sign_ * kInf;
  return result_;
}

}  // namespace

MilpResult solve_milp(const MilpInstance& instance, const SolveOptions& options) {
  if (instance.n_vars() < 1) throw Error("empty model", "cannot solve an empty model");
  if (!(options.limits.time_seconds > 0.0) || options.limits.max_nodes <= 0) {
    throw Error("bad-limits", "limits must be positive");
  }
  Search search(instance, options,
                [](const BranchContext& ctx, Search& s) { return s.default_select(ctx); });
  return search.run();
}

CollectResult collect_branching_data(const MilpInstance& instance, const std::string& instance_id,
                                     const CollectOptions& options) {
  if (!(options.expert_prob >= 0.0 && options.expert_prob <= 1.0)) {
    throw Error("bad-probability", "expert_prob must lie in [0, 1]");
  }
  CollectResult out;
  SolveOptions solve_options;
  solve_options.rule = BranchRule::kPseudocost;
  solve_options.limits = options.limits;
  solve_options.strong = options.strong;
  Rng rng(options.seed);
  Search search(instance, solve_options, [&](const BranchContext& ctx, Search& s) -> int {
    const bool expert = rng.bernoulli(options.expert_prob);
    if (!expert || static_cast<int>(out.samples.size()) >= options.max_samples) {
      return pseudocost_select(ctx.node.candidates, ctx.node.lp.primal, s.stats());
    }
    BranchSample sample;
    sample.instance_id = instance_id;
    sample.node_id = ctx.node.id;
    sample.candidates = ctx.node.candidates;
    sample.graph = extract_branch_features(ctx);
    sample.expert_action = s.strong(ctx).best;
    out.samples.push_back(std::move(sample));
    if (static_cast<int>(out.samples.size()) >= options.max_samples) s.stop();
    return out.samples.back().expert_action;
  });
  out.solve = search.run();
  out.excluded = out.solve.status == MilpStatus::kOptimal && out.solve.nodes_processed <= 1;
  return out;
}

std::string sample_to_json(const BranchSample& sample) {
  nlohmann::json j;
  j["instance_id"] = sample.instance_id;
  j["node_id"] = sample.node_id;
  j["candidates"] = sample.candidates;
  j["expert_action"] = sample.expert_action;
  j["graph"] = nlohmann::json::parse(graph_to_json(sample.graph));
  return j.dump();
}

BranchSample sample_from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  BranchSample s;
  s.instance_id = j.at("instance_id").get<std::string>();
  s.node_id = j.at("node_id").get<std::int64_t>();
  s.candidates = j.at("candidates").get<std::vector<int>>();
  s.expert_action = j.at("expert_action").get<int>();
  s.graph = graph_from_json(j.at("graph").dump());
  if (std::find(s.candidates.begin(), s.candidates.end(), s.expert_action) ==
      s.candidates.end()) {
    throw Error("parse", "expert_action is not a candidate");
  }
  return s;
}

}  // namespace milpevo
