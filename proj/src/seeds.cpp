#include "milpevo/seeds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "json.hpp"
#include "milpevo/util.hpp"

namespace milpevo {

std::string_view to_string(SeedClass c) {
  switch (c) {
    case SeedClass::kIS: return "IS";
    case SeedClass::kSC: return "SC";
    case SeedClass::kCA: return "CA";
    case SeedClass::kCF: return "CF";
    case SeedClass::kKS: return "KS";
    case SeedClass::kGIS: return "GIS";
    case SeedClass::kNF: return "NF";
    case SeedClass::kSAT: return "SAT";
  }
  return "?";
}

std::string_view class_title(SeedClass c) {
  switch (c) {
    case SeedClass::kIS: return "independent set";
    case SeedClass::kSC: return "set cover";
    case SeedClass::kCA: return "combinatorial auction";
    case SeedClass::kCF: return "capacitated facility location";
    case SeedClass::kKS: return "multiple knapsack";
    case SeedClass::kGIS: return "generalized independent set";
    case SeedClass::kNF: return "fixed-charge multi-commodity network flow";
    case SeedClass::kSAT: return "maximum satisfiability";
  }
  return "?";
}

SeedClass parse_seed_class(std::string_view id) {
  for (SeedClass c : kAllSeedClasses) {
    if (to_string(c) == id) return c;
  }
  throw Error("unknown-class", "unknown seed class '" + std::string(id) + "'");
}

std::string param_to_string(const ParamValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) return x ? "true" : "false";
        else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(x);
        else if constexpr (std::is_same_v<T, double>) {
          std::string s = format_double(x);
          if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
          return s;
        } else {
          return x;
        }
      },
      v);
}

double param_as_double(const ParamValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
  throw Error("bad-params", "parameter is not numeric");
}

namespace {

constexpr double kMaxSize = 1e6;

ParamSpec size_param(const char* name, double min = 1.0) {
  return {name, ParamKind::kInt, min, kMaxSize, false};
}
ParamSpec prob_param(const char* name) { return {name, ParamKind::kFloat, 0.0, 1.0, true}; }

}  // namespace

const std::vector<ParamSpec>& param_schema(SeedClass c) {
  static const std::map<SeedClass, std::vector<ParamSpec>> schemas = {
      {SeedClass::kIS, {size_param("n_nodes"), prob_param("density")}},
      {SeedClass::kSC,
       {size_param("n_rows"), size_param("n_cols"), prob_param("density"),
        size_param("max_cost")}},
      {SeedClass::kCA, {size_param("n_items"), size_param("n_bids"), size_param("max_bundle")}},
      {SeedClass::kCF,
       {size_param("n_customers"), size_param("n_facilities"),
        {"capacity_ratio", ParamKind::kFloat, 0.01, 1000.0, false}}},
      {SeedClass::kKS,
       {size_param("n_items"), size_param("n_knapsacks"),
        {"capacity_fraction", ParamKind::kFloat, 0.0, 1000.0, false}}},
      {SeedClass::kGIS,
       {size_param("n_nodes"), size_param("ba_edges"), prob_param("removable_prob")}},
      {SeedClass::kNF,
       {size_param("n_nodes", 2.0), size_param("n_commodities"), prob_param("arc_density")}},
      {SeedClass::kSAT,
       {size_param("n_vars"), {"clause_ratio", ParamKind::kFloat, 0.01, 1000.0, false},
        size_param("clause_len")}},
  };
  return schemas.at(c);
}

std::string_view primary_param(SeedClass c) {
  switch (c) {
    case SeedClass::kIS: return "n_nodes";
    case SeedClass::kSC: return "n_cols";
    case SeedClass::kCA: return "n_bids";
    case SeedClass::kCF: return "n_facilities";
    case SeedClass::kKS: return "n_items";
    case SeedClass::kGIS: return "n_nodes";
    case SeedClass::kNF: return "n_nodes";
    case SeedClass::kSAT: return "n_vars";
  }
  return "";
}

SeedParams default_params(SeedClass c) {
  SeedParams sp;
  sp.class_id = c;
  sp.seed = 42;
  auto& p = sp.params;
  switch (c) {
    case SeedClass::kIS:
      p = {{"n_nodes", std::int64_t{60}}, {"density", 0.15}};
      break;
    case SeedClass::kSC:
      p = {{"n_rows", std::int64_t{60}}, {"n_cols", std::int64_t{120}}, {"density", 0.05},
           {"max_cost", std::int64_t{100}}};
      break;
    case SeedClass::kCA:
      p = {{"n_items", std::int64_t{40}}, {"n_bids", std::int64_t{120}},
           {"max_bundle", std::int64_t{5}}};
      break;
    case SeedClass::kCF:
      p = {{"n_customers", std::int64_t{20}}, {"n_facilities", std::int64_t{8}},
           {"capacity_ratio", 3.0}};
      break;
    case SeedClass::kKS:
      p = {{"n_items", std::int64_t{20}}, {"n_knapsacks", std::int64_t{2}},
           {"capacity_fraction", 0.5}};
      break;
    case SeedClass::kGIS:
      p = {{"n_nodes", std::int64_t{40}}, {"ba_edges", std::int64_t{3}},
           {"removable_prob", 0.3}};
      break;
    case SeedClass::kNF:
      p = {{"n_nodes", std::int64_t{10}}, {"n_commodities", std::int64_t{4}},
           {"arc_density", 0.15}};
      break;
    case SeedClass::kSAT:
      p = {{"n_vars", std::int64_t{30}}, {"clause_ratio", 4.0}, {"clause_len", std::int64_t{3}}};
      break;
  }
  return sp;
}

void check_params(const SeedParams& sp) {
  const auto& schema = param_schema(sp.class_id);
  const std::string cls(to_string(sp.class_id));
  for (const auto& [name, value] : sp.params) {
    const bool known = std::any_of(schema.begin(), schema.end(),
                                   [&](const ParamSpec& s) { return s.name == name; });
    if (!known) throw Error("bad-params", cls + ": unknown parameter '" + name + "'");
  }
  for (const ParamSpec& spec : schema) {
    auto it = sp.params.find(spec.name);
    if (it == sp.params.end()) {
      throw Error("bad-params", cls + ": missing parameter '" + spec.name + "'");
    }
    const ParamValue& v = it->second;
    double x;
    if (spec.kind == ParamKind::kInt) {
      if (!std::holds_alternative<std::int64_t>(v)) {
        throw Error("bad-params", cls + ": '" + spec.name + "' must be an integer");
      }
      x = static_cast<double>(std::get<std::int64_t>(v));
    } else if (spec.kind == ParamKind::kFloat) {
      if (std::holds_alternative<bool>(v) || std::holds_alternative<std::string>(v)) {
        throw Error("bad-params", cls + ": '" + spec.name + "' must be a number");
      }
      x = param_as_double(v);
    } else {
      if (!std::holds_alternative<bool>(v)) {
        throw Error("bad-params", cls + ": '" + spec.name + "' must be a bool");
      }
      continue;
    }
    const bool in_range = spec.probability ? (x > 0.0 && x <= 1.0)
                                           : (x >= spec.min && x <= spec.max);
    if (!std::isfinite(x) || !in_range) {
      throw Error("bad-params", cls + ": '" + spec.name + "' = " + param_to_string(v) +
                                    " is out of range");
    }
  }
}

namespace {

std::int64_t get_int(const ParamMap& p, const char* name) { return std::get<std::int64_t>(p.at(name)); }
double get_float(const ParamMap& p, const char* name) { return param_as_double(p.at(name)); }

using Edge = std::pair<int, int>;

std::vector<Edge> erdos_renyi(Rng& rng, int n, double p) {
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (rng.bernoulli(p)) edges.push_back({u, v});
    }
  }
  return edges;
}

/// Preferential attachment: a clique on the first m+1 nodes, then every new
/// node links to m distinct earlier nodes drawn proportionally to degree.
std::vector<Edge> barabasi_albert(Rng& rng, int n, int m) {
  std::vector<Edge> edges;
  const int core = std::min(n, m + 1);
  std::vector<int> endpoints;
  for (int u = 0; u < core; ++u) {
    for (int v = u + 1; v < core; ++v) {
      edges.push_back({u, v});
      endpoints.push_back(u);
      endpoints.push_back(v);
    }
  }
  for (int v = core; v < n; ++v) {
    std::set<int> targets;
    while (static_cast<int>(targets.size()) < std::min(m, v)) {
      const int t = endpoints.empty() ? static_cast<int>(rng.index(v))
                                      : endpoints[rng.index(endpoints.size())];
      targets.insert(t);
    }
    for (int t : targets) {
      edges.push_back({t, v});
      endpoints.push_back(t);
      endpoints.push_back(v);
    }
  }
  return edges;
}

double rand_int(Rng& rng, int lo, int hi) { return static_cast<double>(rng.uniform_int(lo, hi)); }

MilpInstance gen_is(const ParamMap& p, Rng& rng) {
  const int n = static_cast<int>(get_int(p, "n_nodes"));
  MilpInstance inst;
  inst.sense = Sense::kMaximize;
  for (int v = 0; v < n; ++v) inst.add_var(VarKind::kBinary, 0, 1, 1, "x_" + std::to_string(v));
  int k = 0;
  for (const auto& [u, v] : erdos_renyi(rng, n, get_float(p, "density"))) {
    inst.add_row({{u, 1}, {v, 1}}, Relation::kLessEqual, 1, "edge_" + std::to_string(k++));
  }
  return inst;
}

MilpInstance gen_sc(const ParamMap& p, Rng& rng) {
  const int rows = static_cast<int>(get_int(p, "n_rows"));
  const int cols = static_cast<int>(get_int(p, "n_cols"));
  const double density = get_float(p, "density");
  const int max_cost = static_cast<int>(get_int(p, "max_cost"));
  MilpInstance inst;
  for (int j = 0; j < cols; ++j) {
    inst.add_var(VarKind::kBinary, 0, 1, rand_int(rng, 1, max_cost), "x_" + std::to_string(j));
  }
  for (int i = 0; i < rows; ++i) {
    std::vector<Coef> coefs;
    for (int j = 0; j < cols; ++j) {
      if (rng.bernoulli(density)) coefs.push_back({j, 1});
    }
    if (coefs.empty()) coefs.push_back({static_cast<int>(rng.index(cols)), 1});
    inst.add_row(std::move(coefs), Relation::kGreaterEqual, 1, "cover_" + std::to_string(i));
  }
  return inst;
}

MilpInstance gen_ca(const ParamMap& p, Rng& rng) {
  const int items = static_cast<int>(get_int(p, "n_items"));
  const int bids = static_cast<int>(get_int(p, "n_bids"));
  const int max_bundle = static_cast<int>(std::min<std::int64_t>(get_int(p, "max_bundle"), items));
  std::vector<double> value(items);
  for (double& v : value) v = rand_int(rng, 1, 100);
  std::vector<std::vector<Coef>> item_rows(items);
  MilpInstance inst;
  inst.sense = Sense::kMaximize;
  for (int b = 0; b < bids; ++b) {
    const int size = static_cast<int>(rng.uniform_int(1, max_bundle));
    double base = 0.0;
    for (std::size_t it : rng.sample_without_replacement(items, size)) {
      base += value[it];
      item_rows[it].push_back({b, 1});
    }
    const double price = std::round(base * rng.uniform(1.0, 1.5));
    inst.add_var(VarKind::kBinary, 0, 1, price, "y_" + std::to_string(b));
  }
  for (int it = 0; it < items; ++it) {
    if (item_rows[it].empty()) continue;
    inst.add_row(std::move(item_rows[it]), Relation::kLessEqual, 1, "item_" + std::to_string(it));
  }
  return inst;
}

MilpInstance gen_cf(const ParamMap& p, Rng& rng) {
  const int nc = static_cast<int>(get_int(p, "n_customers"));
  const int nf = static_cast<int>(get_int(p, "n_facilities"));
  const double ratio = get_float(p, "capacity_ratio");
  std::vector<double> cx(nc), cy(nc), fx(nf), fy(nf), demand(nc), cap(nf), fixed(nf);
  for (int i = 0; i < nc; ++i) {
    cx[i] = rng.uniform();
    cy[i] = rng.uniform();
    demand[i] = rand_int(rng, 5, 35);
  }
  for (int j = 0; j < nf; ++j) {
    fx[j] = rng.uniform();
    fy[j] = rng.uniform();
    cap[j] = rand_int(rng, 10, 160);
    fixed[j] = std::round(rng.uniform(100, 110) * std::sqrt(cap[j]) + rng.uniform(0, 90));
  }
  const double total_demand = std::accumulate(demand.begin(), demand.end(), 0.0);
  const double total_cap = std::accumulate(cap.begin(), cap.end(), 0.0);
  for (double& c : cap) c = std::round(c * ratio * total_demand / total_cap);
  MilpInstance inst;
  for (int j = 0; j < nf; ++j) inst.add_var(VarKind::kBinary, 0, 1, fixed[j], "u_" + std::to_string(j));
  auto y = [&](int i, int j) { return nf + i * nf + j; };
  for (int i = 0; i < nc; ++i) {
    for (int j = 0; j < nf; ++j) {
      const double dist = std::hypot(cx[i] - fx[j], cy[i] - fy[j]);
      inst.add_var(VarKind::kContinuous, 0, 1, std::round(dist * 10.0 * demand[i] * 100) / 100,
                   "y_" + std::to_string(i) + "_" + std::to_string(j));
    }
  }
  for (int i = 0; i < nc; ++i) {
    std::vector<Coef> coefs;
    for (int j = 0; j < nf; ++j) coefs.push_back({y(i, j), 1});
    inst.add_row(std::move(coefs), Relation::kEqual, 1, "demand_" + std::to_string(i));
  }
  for (int j = 0; j < nf; ++j) {
    std::vector<Coef> coefs{{j, -cap[j]}};
    for (int i = 0; i < nc; ++i) coefs.push_back({y(i, j), demand[i]});
    inst.add_row(std::move(coefs), Relation::kLessEqual, 0, "cap_" + std::to_string(j));
  }
  return inst;
}

MilpInstance gen_ks(const ParamMap& p, Rng& rng) {
  const int n = static_cast<int>(get_int(p, "n_items"));
  const int k = static_cast<int>(get_int(p, "n_knapsacks"));
  const double frac = get_float(p, "capacity_fraction");
  std::vector<double> w(n), profit(n);
  for (int i = 0; i < n; ++i) {
    w[i] = rand_int(rng, 1, 100);
    profit[i] = w[i] + rand_int(rng, 0, 10);
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  MilpInstance inst;
  inst.sense = Sense::kMaximize;
  for (int i = 0; i < n; ++i) {
    for (int b = 0; b < k; ++b) {
      inst.add_var(VarKind::kBinary, 0, 1, profit[i],
                   "x_" + std::to_string(i) + "_" + std::to_string(b));
    }
  }
  for (int b = 0; b < k; ++b) {
    std::vector<Coef> coefs;
    for (int i = 0; i < n; ++i) coefs.push_back({i * k + b, w[i]});
    inst.add_row(std::move(coefs), Relation::kLessEqual, std::floor(frac * total / k),
                 "knap_" + std::to_string(b));
  }
  for (int i = 0; i < n; ++i) {
    std::vector<Coef> coefs;
    for (int b = 0; b < k; ++b) coefs.push_back({i * k + b, 1});
    inst.add_row(std::move(coefs), Relation::kLessEqual, 1, "assign_" + std::to_string(i));
  }
  return inst;
}

MilpInstance gen_gis(const ParamMap& p, Rng& rng) {
  const int n = static_cast<int>(get_int(p, "n_nodes"));
  const int m = static_cast<int>(get_int(p, "ba_edges"));
  const double alpha = get_float(p, "removable_prob");
  MilpInstance inst;
  inst.sense = Sense::kMaximize;
  for (int v = 0; v < n; ++v) {
    inst.add_var(VarKind::kBinary, 0, 1, rand_int(rng, 80, 120), "x_" + std::to_string(v));
  }
  int hard = 0, soft = 0;
  for (const auto& [u, v] : barabasi_albert(rng, n, m)) {
    if (rng.bernoulli(alpha)) {
      const int z = inst.add_var(VarKind::kBinary, 0, 1, -rand_int(rng, 10, 60),
                                 "z_" + std::to_string(soft));
      inst.add_row({{u, 1}, {v, 1}, {z, -1}}, Relation::kLessEqual, 1,
                   "soft_" + std::to_string(soft++));
    } else {
      inst.add_row({{u, 1}, {v, 1}}, Relation::kLessEqual, 1, "hard_" + std::to_string(hard++));
    }
  }
  return inst;
}

MilpInstance gen_nf(const ParamMap& p, Rng& rng) {
  const int n = static_cast<int>(get_int(p, "n_nodes"));
  const int k = static_cast<int>(get_int(p, "n_commodities"));
  const double density = get_float(p, "arc_density");
  std::vector<int> origin(k), dest(k);
  std::vector<double> demand(k);
  for (int c = 0; c < k; ++c) {
    origin[c] = static_cast<int>(rng.index(n));
    dest[c] = static_cast<int>(rng.index(n - 1));
    if (dest[c] >= origin[c]) ++dest[c];
    demand[c] = rand_int(rng, 5, 25);
  }
  const double total = std::accumulate(demand.begin(), demand.end(), 0.0);
  struct Arc {
    int from, to;
    double cap;
  };
  std::vector<Arc> arcs;
  std::set<std::pair<int, int>> seen;
  // A bidirectional ring with full capacity keeps every instance feasible.
  for (int v = 0; v < n; ++v) {
    const int w = (v + 1) % n;
    for (auto [a, b] : {std::pair{v, w}, std::pair{w, v}}) {
      if (a != b && seen.insert({a, b}).second) arcs.push_back({a, b, total});
    }
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b || seen.count({a, b})) continue;
      if (rng.bernoulli(density)) {
        seen.insert({a, b});
        arcs.push_back({a, b, std::round(total * rng.uniform(0.3, 1.0))});
      }
    }
  }
  MilpInstance inst;
  const int na = static_cast<int>(arcs.size());
  for (int a = 0; a < na; ++a) {
    inst.add_var(VarKind::kBinary, 0, 1, rand_int(rng, 20, 100), "open_" + std::to_string(a));
  }
  auto flow = [&](int a, int c) { return na + a * k + c; };
  for (int a = 0; a < na; ++a) {
    const double unit = rand_int(rng, 1, 10);
    for (int c = 0; c < k; ++c) {
      inst.add_var(VarKind::kContinuous, 0, kInf, unit,
                   "f_" + std::to_string(a) + "_" + std::to_string(c));
    }
  }
  for (int c = 0; c < k; ++c) {
    for (int v = 0; v < n; ++v) {
      std::vector<Coef> coefs;
      for (int a = 0; a < na; ++a) {
        if (arcs[a].from == v) coefs.push_back({flow(a, c), 1});
        if (arcs[a].to == v) coefs.push_back({flow(a, c), -1});
      }
      const double rhs = v == origin[c] ? demand[c] : v == dest[c] ? -demand[c] : 0.0;
      std::sort(coefs.begin(), coefs.end(),
                [](const Coef& x, const Coef& y) { return x.index < y.index; });
      inst.add_row(std::move(coefs), Relation::kEqual, rhs,
                   "flow_" + std::to_string(v) + "_" + std::to_string(c));
    }
  }
  for (int a = 0; a < na; ++a) {
    std::vector<Coef> coefs{{a, -arcs[a].cap}};
    for (int c = 0; c < k; ++c) coefs.push_back({flow(a, c), 1});
    inst.add_row(std::move(coefs), Relation::kLessEqual, 0, "arccap_" + std::to_string(a));
  }
  return inst;
}

MilpInstance gen_sat(const ParamMap& p, Rng& rng) {
  const int n = static_cast<int>(get_int(p, "n_vars"));
  const int m = std::max(1, static_cast<int>(std::lround(get_float(p, "clause_ratio") * n)));
  const int len = static_cast<int>(std::min<std::int64_t>(get_int(p, "clause_len"), n));
  MilpInstance inst;
  inst.sense = Sense::kMaximize;
  for (int v = 0; v < n; ++v) inst.add_var(VarKind::kBinary, 0, 1, 0, "x_" + std::to_string(v));
  for (int c = 0; c < m; ++c) {
    const int s = inst.add_var(VarKind::kBinary, 0, 1, rand_int(rng, 1, 10), "s_" + std::to_string(c));
    auto vars = rng.sample_without_replacement(n, len);
    std::sort(vars.begin(), vars.end());
    std::vector<Coef> coefs;
    int negatives = 0;
    for (std::size_t v : vars) {
      const bool negated = rng.bernoulli(0.5);
      coefs.push_back({static_cast<int>(v), negated ? 1.0 : -1.0});
      negatives += negated ? 1 : 0;
    }
    coefs.push_back({s, 1});
    inst.add_row(std::move(coefs), Relation::kLessEqual, negatives, "clause_" + std::to_string(c));
  }
  return inst;
}

}  // namespace

MilpInstance generate_instance(const SeedParams& sp) {
  check_params(sp);
  Rng rng(mix_seed(sp.seed, fnv1a64(to_string(sp.class_id))));
  MilpInstance inst;
  switch (sp.class_id) {
    case SeedClass::kIS: inst = gen_is(sp.params, rng); break;
    case SeedClass::kSC: inst = gen_sc(sp.params, rng); break;
    case SeedClass::kCA: inst = gen_ca(sp.params, rng); break;
    case SeedClass::kCF: inst = gen_cf(sp.params, rng); break;
    case SeedClass::kKS: inst = gen_ks(sp.params, rng); break;
    case SeedClass::kGIS: inst = gen_gis(sp.params, rng); break;
    case SeedClass::kNF: inst = gen_nf(sp.params, rng); break;
    case SeedClass::kSAT: inst = gen_sat(sp.params, rng); break;
  }
  inst.name = std::string(to_string(sp.class_id)) + "_" + std::to_string(sp.seed);
  inst.metadata["class"] = std::string(to_string(sp.class_id));
  inst.metadata["seed"] = std::to_string(sp.seed);
  return inst;
}

std::vector<std::string> constraint_families(SeedClass c) {
  switch (c) {
    case SeedClass::kIS: return {"edge_"};
    case SeedClass::kSC: return {"cover_"};
    case SeedClass::kCA: return {"item_"};
    case SeedClass::kCF: return {"demand_", "cap_"};
    case SeedClass::kKS: return {"knap_", "assign_"};
    case SeedClass::kGIS: return {"hard_", "soft_"};
    case SeedClass::kNF: return {"flow_", "arccap_"};
    case SeedClass::kSAT: return {"clause_"};
  }
  return {};
}

std::string params_to_json(const ParamMap& params) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, value] : params) {
    std::visit([&](const auto& x) { j[name] = x; }, value);
  }
  return j.dump();
}

ParamMap params_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  if (!j.is_object()) throw Error("bad-params", "parameter block must be a JSON object");
  ParamMap out;
  for (const auto& [name, value] : j.items()) {
    if (value.is_boolean()) out[name] = value.get<bool>();
    else if (value.is_number_integer()) out[name] = value.get<std::int64_t>();
    else if (value.is_number()) out[name] = value.get<double>();
    else if (value.is_string()) out[name] = value.get<std::string>();
    else throw Error("bad-params", "unsupported value for '" + name + "'");
  }
  return out;
}

}  // namespace milpevo
