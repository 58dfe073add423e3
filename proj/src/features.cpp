#include "milpevo/features.hpp"

#include <cmath>

#include "json.hpp"
#include "milpevo/util.hpp"

namespace milpevo {

namespace {

constexpr double kGuard = 1e-10;
constexpr double kAtBoundTol = 1e-6;
constexpr double kTightTol = 1e-7;

/// Row 2-norm computed with scaling so 1e+-9 data cannot overflow.
double row_norm(const Row& row) {
  double scale = 0.0;
  for (const Coef& c : row.coefs) scale = std::max(scale, std::abs(c.value));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (const Coef& c : row.coefs) s += (c.value / scale) * (c.value / scale);
  return scale * std::sqrt(s);
}

double safe_norm(const std::vector<double>& v) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x / scale) * (x / scale);
  return scale * std::sqrt(s);
}

int kind_slot(VarKind kind) { return static_cast<int>(kind); }

int basis_slot(BasisStatus s) {
  switch (s) {
    case BasisStatus::kLower: return 0;
    case BasisStatus::kBasic: return 1;
    case BasisStatus::kUpper: return 2;
    case BasisStatus::kZero: return 3;
  }
  return 0;
}

double cosine(const Row& row, double row_nrm, const std::vector<double>& c, double c_nrm) {
  if (row_nrm == 0.0 || c_nrm == 0.0) return 0.0;
  double dot = 0.0;
  for (const Coef& k : row.coefs) dot += (k.value / row_nrm) * (c[k.index] / c_nrm);
  return std::clamp(dot, -1.0, 1.0);
}

/// Shared leading variable block: norm-coef, type(4), has-lb, has-ub,
/// norm-redcost, solval, solfrac, at-lb, at-ub. Writes 12 columns.
void fill_common_var(Eigen::MatrixXd& v, const MilpInstance& inst, const LpSolution& lp,
                     const std::vector<double>& lower, const std::vector<double>& upper,
                     double c_nrm) {
  for (int j = 0; j < inst.n_vars(); ++j) {
    const double x = lp.primal[j];
    v(j, 0) = c_nrm > 0.0 ? inst.objective[j] / c_nrm : 0.0;
    v(j, 1 + kind_slot(inst.kind[j])) = 1.0;
    v(j, 5) = std::isfinite(lower[j]) ? 1.0 : 0.0;
    v(j, 6) = std::isfinite(upper[j]) ? 1.0 : 0.0;
    v(j, 7) = lp.reduced_costs[j] / (c_nrm + kGuard);
    v(j, 8) = x;
    v(j, 9) = inst.kind[j] == VarKind::kContinuous ? 0.0 : x - std::floor(x);
    v(j, 10) = std::isfinite(lower[j]) && std::abs(x - lower[j]) <= kAtBoundTol ? 1.0 : 0.0;
    v(j, 11) = std::isfinite(upper[j]) && std::abs(x - upper[j]) <= kAtBoundTol ? 1.0 : 0.0;
  }
}

void fill_edges(BipartiteGraph& g, const MilpInstance& inst, const std::vector<double>& norms,
                bool orient) {
  g.edge_cons.reserve(inst.nnz());
  g.edge_var.reserve(inst.nnz());
  g.edge_value.reserve(inst.nnz());
  for (int i = 0; i < inst.n_cons(); ++i) {
    const Row& row = inst.rows[i];
    const double sign = orient && row.relation == Relation::kGreaterEqual ? -1.0 : 1.0;
    for (const Coef& c : row.coefs) {
      g.edge_cons.push_back(i);
      g.edge_var.push_back(c.index);
      g.edge_value.push_back(norms[i] > 0.0 ? sign * c.value / norms[i] : 0.0);
    }
  }
}

void require_optimal(const MilpInstance& inst, const LpSolution& lp) {
  if (lp.status != LpStatus::kOptimal) throw Error("root LP required", "root LP required");
  if (lp.primal.size() != static_cast<std::size_t>(inst.n_vars()) ||
      lp.duals.size() != static_cast<std::size_t>(inst.n_cons())) {
    throw Error("size-mismatch", "LP solution does not match instance");
  }
}

}  // namespace

BipartiteGraph extract_gap_features(const MilpInstance& inst, const LpSolution& lp) {
  require_optimal(inst, lp);
  const int n = inst.n_vars();
  const int m = inst.n_cons();
  const double c_nrm = safe_norm(inst.objective);
  BipartiteGraph g;
  g.schema = GraphSchema::kGap;
  g.var_features = Eigen::MatrixXd::Zero(n, kGapVarDim);
  fill_common_var(g.var_features, inst, lp, inst.lower, inst.upper, c_nrm);
  for (int j = 0; j < n; ++j) {
    g.var_features(j, 12) = 0.0;  // LP age is zero after the first solve
    g.var_features(j, 13 + basis_slot(lp.basis_var[j])) = 1.0;
  }
  g.cons_features = Eigen::MatrixXd::Zero(m, kGapConsDim);
  std::vector<double> norms(m);
  for (int i = 0; i < m; ++i) {
    const Row& row = inst.rows[i];
    const double nrm = row_norm(row);
    norms[i] = nrm;
    auto r = g.cons_features.row(i);
    r(0) = 1.0;
    r(1) = n > 0 ? static_cast<double>(row.coefs.size()) / n : 0.0;
    r(2) = nrm > 0.0 ? row.rhs / nrm : 0.0;
    const double act = lp.activity[i];
    const double tol = kTightTol * std::max(1.0, std::abs(row.rhs));
    const bool tight = std::abs(act - row.rhs) <= tol;
    r(3) = tight && row.relation != Relation::kLessEqual ? 1.0 : 0.0;
    r(4) = tight && row.relation != Relation::kGreaterEqual ? 1.0 : 0.0;
    r(5) = lp.duals[i] / (nrm * (1.0 + c_nrm) + kGuard);
    r(6 + basis_slot(lp.basis_row[i])) = 1.0;
    r(10) = 0.0;
    r(11) = 0.0;
    int intcols = 0;
    bool integral = !row.coefs.empty();
    for (const Coef& c : row.coefs) {
      if (is_integral_kind(inst.kind[c.index]) ||
          inst.kind[c.index] == VarKind::kImpliedInteger) {
        ++intcols;
        if (c.value != std::floor(c.value)) integral = false;
      } else {
        integral = false;
      }
    }
    r(12) = row.coefs.empty() ? 0.0 : static_cast<double>(intcols) / row.coefs.size();
    r(13) = integral ? 1.0 : 0.0;
    r(14) = 0.0;
    r(15) = 1.0;
    r(16) = cosine(row, nrm, inst.objective, c_nrm);
  }
  fill_edges(g, inst, norms, false);
  return g;
}

BipartiteGraph extract_branch_features(const BranchContext& ctx) {
  const MilpInstance& inst = ctx.instance;
  const LpSolution& lp = ctx.node.lp;
  require_optimal(inst, lp);
  const int n = inst.n_vars();
  const int m = inst.n_cons();
  const double c_nrm = safe_norm(inst.objective);
  const double age = ctx.lp_solves_before > 0 ? 1.0 : 0.0;
  BipartiteGraph g;
  g.schema = GraphSchema::kBranch;
  g.var_features = Eigen::MatrixXd::Zero(n, kBranchVarDim);
  fill_common_var(g.var_features, inst, lp, ctx.lower, ctx.upper, c_nrm);
  for (int j = 0; j < n; ++j) {
    g.var_features(j, 12) = age;
    g.var_features(j, 13) = ctx.incumbent ? (*ctx.incumbent)[j] : 0.0;
    g.var_features(j, 14) = ctx.incumbent_average ? (*ctx.incumbent_average)[j] : 0.0;
    g.var_features(j, 15 + basis_slot(lp.basis_var[j])) = 1.0;
  }
  g.cons_features = Eigen::MatrixXd::Zero(m, kBranchConsDim);
  std::vector<double> norms(m);
  for (int i = 0; i < m; ++i) {
    const Row& row = inst.rows[i];
    const double sign = row.relation == Relation::kGreaterEqual ? -1.0 : 1.0;
    const double nrm = row_norm(row);
    norms[i] = nrm;
    auto r = g.cons_features.row(i);
    r(0) = nrm > 0.0 ? sign * row.rhs / nrm : 0.0;
    r(1) = sign * cosine(row, nrm, inst.objective, c_nrm);
    const double tol = kTightTol * std::max(1.0, std::abs(row.rhs));
    r(2) = std::abs(lp.activity[i] - row.rhs) <= tol ? 1.0 : 0.0;
    r(3) = sign * lp.duals[i] / (nrm * (1.0 + c_nrm) + kGuard);
    r(4) = age;
  }
  fill_edges(g, inst, norms, true);
  return g;
}

std::vector<std::string> feature_names(GraphSchema schema, bool variables) {
  std::vector<std::string> common = {"norm_coef",  "type_binary", "type_integer",
                                     "type_implied_integer",        "type_continuous",
                                     "has_lb",     "has_ub",        "norm_redcost",
                                     "solval",     "solfrac",       "sol_is_at_lb",
                                     "sol_is_at_ub", "norm_age"};
  const std::vector<std::string> basis = {"basestat_lower", "basestat_basic", "basestat_upper",
                                          "basestat_zero"};
  if (schema == GraphSchema::kGap) {
    if (variables) {
      common.insert(common.end(), basis.begin(), basis.end());
      return common;
    }
    std::vector<std::string> cons = {"rank", "norm_nnzrs", "bias", "row_is_at_lhs",
                                     "row_is_at_rhs", "dualsol"};
    cons.insert(cons.end(), basis.begin(), basis.end());
    for (const char* s : {"norm_age", "norm_nlp_creation", "norm_intcols", "is_integral",
                          "is_removable", "is_in_lp", "obj_par"}) {
      cons.emplace_back(s);
    }
    return cons;
  }
  if (variables) {
    common.emplace_back("incumbent_value");
    common.emplace_back("avg_incumbent_value");
    common.insert(common.end(), basis.begin(), basis.end());
    return common;
  }
  return {"bias", "obj_cosine_sim", "is_tight", "dualsol", "norm_age"};
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& mat) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < mat.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < mat.cols(); ++k) row.push_back(mat(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, int cols) {
  Eigen::MatrixXd mat(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != static_cast<std::size_t>(cols)) {
      throw Error("parse", "feature row has wrong width");
    }
    for (int k = 0; k < cols; ++k) mat(static_cast<Eigen::Index>(i), k) = j[i][k].get<double>();
  }
  return mat;
}

}  // namespace

std::string graph_to_json(const BipartiteGraph& g) {
  nlohmann::json j;
  j["schema"] = g.schema == GraphSchema::kGap ? "A" : "B";
  j["var_features"] = matrix_json(g.var_features);
  j["cons_features"] = matrix_json(g.cons_features);
  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t k = 0; k < g.n_edges(); ++k) {
    edges.push_back({g.edge_cons[k], g.edge_var[k], g.edge_value[k]});
  }
  j["edges"] = std::move(edges);
  return j.dump();
}

BipartiteGraph graph_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  BipartiteGraph g;
  g.schema = j.at("schema").get<std::string>() == "A" ? GraphSchema::kGap : GraphSchema::kBranch;
  const bool gap = g.schema == GraphSchema::kGap;
  g.var_features = matrix_from_json(j.at("var_features"), gap ? kGapVarDim : kBranchVarDim);
  g.cons_features = matrix_from_json(j.at("cons_features"), gap ? kGapConsDim : kBranchConsDim);
  for (const auto& e : j.at("edges")) {
    g.edge_cons.push_back(e.at(0).get<int>());
    g.edge_var.push_back(e.at(1).get<int>());
    g.edge_value.push_back(e.at(2).get<double>());
  }
  return g;
}

}  // namespace milpevo
