#include "milpevo/classes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>

#include "json.hpp"
#include "milpevo/util.hpp"

namespace milpevo {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Transform::Kind kind) {
  switch (kind) {
    case Transform::Kind::kKnapsack: return "knapsack";
    case Transform::Kind::kConflicts: return "conflicts";
    case Transform::Kind::kScale: return "scale";
    case Transform::Kind::kDrop: return "drop";
    case Transform::Kind::kCross: return "cross";
  }
  return "?";
}

Transform::Kind parse_transform_kind(std::string_view text) {
  for (auto k : {Transform::Kind::kKnapsack, Transform::Kind::kConflicts, Transform::Kind::kScale,
                 Transform::Kind::kDrop, Transform::Kind::kCross}) {
    if (to_string(k) == text) return k;
  }
  throw Error("bad-recipe", "unknown transform '" + std::string(text) + "'");
}

namespace {

ojson recipe_to_ojson(const Recipe& r) {
  ojson j;
  j["base"] = std::string(to_string(r.base));
  ojson chain = ojson::array();
  for (const Transform& t : r.chain) {
    ojson s;
    s["op"] = std::string(to_string(t.kind));
    if (!t.target.empty()) s["target"] = t.target;
    if (t.other) s["other"] = recipe_to_ojson(*t.other);
    chain.push_back(std::move(s));
  }
  j["chain"] = std::move(chain);
  return j;
}

Recipe recipe_from_ojson(const ojson& j) {
  if (!j.is_object() || !j.contains("base")) throw Error("bad-recipe", "recipe needs a base");
  Recipe r;
  r.base = parse_seed_class(j.at("base").get<std::string>());
  if (j.contains("chain")) {
    for (const auto& s : j.at("chain")) {
      Transform t;
      t.kind = parse_transform_kind(s.at("op").get<std::string>());
      if (s.contains("target")) t.target = s.at("target").get<std::string>();
      if (s.contains("other")) t.other = std::make_shared<Recipe>(recipe_from_ojson(s.at("other")));
      if (t.kind == Transform::Kind::kCross && !t.other) {
        throw Error("bad-recipe", "cross transform needs a partner");
      }
      if ((t.kind == Transform::Kind::kDrop || t.kind == Transform::Kind::kScale) &&
          t.target.empty()) {
        throw Error("bad-recipe", std::string(to_string(t.kind)) + " transform needs a target");
      }
      r.chain.push_back(std::move(t));
    }
  }
  return r;
}

ojson params_to_ojson(const ParamMap& p) { return ojson::parse(params_to_json(p)); }

std::string step_prefix(std::size_t i) { return "t" + std::to_string(i) + "."; }

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

/// Entries under `prefix`, with the prefix removed.
ParamMap sub_params(const ParamMap& params, const std::string& prefix) {
  ParamMap out;
  for (const auto& [k, v] : params) {
    if (starts_with(k, prefix)) out[k.substr(prefix.size())] = v;
  }
  return out;
}

struct TransformParamSpec {
  const char* name;
  ParamKind kind;
  double min, max;
};

std::vector<TransformParamSpec> transform_specs(Transform::Kind kind) {
  switch (kind) {
    case Transform::Kind::kKnapsack:
      return {{"rows", ParamKind::kInt, 1, 1e4},
              {"density", ParamKind::kFloat, 1e-6, 1.0},
              {"tightness", ParamKind::kFloat, 1e-3, 10.0}};
    case Transform::Kind::kConflicts: return {{"pairs", ParamKind::kInt, 1, 1e6}};
    case Transform::Kind::kScale: return {{"factor", ParamKind::kFloat, 1e-3, 1e3}};
    case Transform::Kind::kDrop: return {};
    case Transform::Kind::kCross: return {{"links", ParamKind::kInt, 0, 1e6}};
  }
  return {};
}

void check_transform_params(Transform::Kind kind, const ParamMap& p, const std::string& prefix) {
  for (const auto& spec : transform_specs(kind)) {
    auto it = p.find(spec.name);
    const std::string full = prefix + spec.name;
    if (it == p.end()) throw Error("bad-params", "missing parameter '" + full + "'");
    const ParamValue& v = it->second;
    if (spec.kind == ParamKind::kInt && !std::holds_alternative<std::int64_t>(v)) {
      throw Error("bad-params", "'" + full + "' must be an integer");
    }
    if (std::holds_alternative<bool>(v) || std::holds_alternative<std::string>(v)) {
      throw Error("bad-params", "'" + full + "' must be a number");
    }
    const double x = param_as_double(v);
    if (!(x >= spec.min && x <= spec.max)) {
      throw Error("bad-params", "'" + full + "' = " + param_to_string(v) + " is out of range");
    }
  }
}

std::vector<int> binary_vars(const MilpInstance& inst) {
  std::vector<int> out;
  for (int j = 0; j < inst.n_vars(); ++j) {
    if (inst.kind[j] == VarKind::kBinary) out.push_back(j);
  }
  return out;
}

void add_knapsacks(MilpInstance& inst, const ParamMap& p, Rng& rng, const std::string& tag) {
  const auto bins = binary_vars(inst);
  if (bins.empty()) throw Error("bad-recipe", "knapsack rows need binary variables");
  const auto rows = std::get<std::int64_t>(p.at("rows"));
  const double density = param_as_double(p.at("density"));
  const double tightness = param_as_double(p.at("tightness"));
  for (std::int64_t r = 0; r < rows; ++r) {
    std::vector<Coef> coefs;
    double total = 0.0;
    for (int j : bins) {
      if (!rng.bernoulli(density)) continue;
      const double w = static_cast<double>(rng.uniform_int(1, 50));
      coefs.push_back({j, w});
      total += w;
    }
    if (coefs.empty()) {
      const double w = static_cast<double>(rng.uniform_int(1, 50));
      coefs.push_back({bins[rng.index(bins.size())], w});
      total = w;
    }
    const double cap = std::max(1.0, std::floor(tightness * total));
    inst.add_row(std::move(coefs), Relation::kLessEqual, cap, tag + "knap_" + std::to_string(r));
  }
}

void add_conflicts(MilpInstance& inst, const ParamMap& p, Rng& rng, const std::string& tag) {
  const auto bins = binary_vars(inst);
  if (bins.size() < 2) throw Error("bad-recipe", "conflict rows need two binary variables");
  const auto pairs = std::get<std::int64_t>(p.at("pairs"));
  for (std::int64_t r = 0; r < pairs; ++r) {
    auto pick = rng.sample_without_replacement(bins.size(), 2);
    int u = bins[pick[0]], v = bins[pick[1]];
    if (u > v) std::swap(u, v);
    inst.add_row({{u, 1}, {v, 1}}, Relation::kLessEqual, 1, tag + "conf_" + std::to_string(r));
  }
}

void drop_rows(MilpInstance& inst, const std::string& prefix) {
  MilpInstance out = inst;
  out.rows.clear();
  out.row_names.clear();
  for (int i = 0; i < inst.n_cons(); ++i) {
    const std::string name = inst.row_name(i);
    if (starts_with(name, prefix)) continue;
    out.add_row(inst.rows[i].coefs, inst.rows[i].relation, inst.rows[i].rhs, name);
  }
  if (out.n_cons() == 0) throw Error("bad-recipe", "dropping '" + prefix + "' removes every row");
  inst = std::move(out);
}

void cross_with(MilpInstance& inst, const MilpInstance& other, const ParamMap& p, Rng& rng,
                const std::string& tag) {
  const int shift = inst.n_vars();
  const auto bins_a = binary_vars(inst);
  const double sign = other.sense == inst.sense ? 1.0 : -1.0;
  for (int j = 0; j < other.n_vars(); ++j) {
    inst.add_var(other.kind[j], other.lower[j], other.upper[j], sign * other.objective[j],
                 "b_" + other.var_name(j));
  }
  inst.objective_offset += sign * other.objective_offset;
  for (int i = 0; i < other.n_cons(); ++i) {
    std::vector<Coef> coefs = other.rows[i].coefs;
    for (auto& c : coefs) c.index += shift;
    inst.add_row(std::move(coefs), other.rows[i].relation, other.rows[i].rhs,
                 tag + "b_" + other.row_name(i));
  }
  std::vector<int> bins_b;
  for (int j : binary_vars(other)) bins_b.push_back(j + shift);
  if (bins_a.empty() || bins_b.empty()) return;
  const auto links = std::get<std::int64_t>(p.at("links"));
  for (std::int64_t r = 0; r < links; ++r) {
    const int u = bins_a[rng.index(bins_a.size())];
    const int v = bins_b[rng.index(bins_b.size())];
    inst.add_row({{u, 1}, {v, 1}}, Relation::kLessEqual, 1, tag + "link_" + std::to_string(r));
  }
}

void collect_expected_keys(const Recipe& r, const std::string& prefix, std::set<std::string>& keys) {
  for (const auto& spec : param_schema(r.base)) keys.insert(prefix + spec.name);
  for (std::size_t i = 0; i < r.chain.size(); ++i) {
    const std::string sp = prefix + step_prefix(i);
    for (const auto& spec : transform_specs(r.chain[i].kind)) keys.insert(sp + spec.name);
    if (r.chain[i].other) collect_expected_keys(*r.chain[i].other, sp + "b.", keys);
  }
}

std::string python_value(const ParamValue& v) {
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "True" : "False";
  if (const auto* s = std::get_if<std::string>(&v)) return "'" + *s + "'";
  return param_to_string(v);
}

}  // namespace

std::string recipe_to_json(const Recipe& recipe) { return recipe_to_ojson(recipe).dump(); }

Recipe recipe_from_json(std::string_view text) {
  try {
    return recipe_from_ojson(ojson::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad-recipe", e.what());
  }
}

ParamMap transform_default_params(Transform::Kind kind) {
  switch (kind) {
    case Transform::Kind::kKnapsack:
      return {{"rows", std::int64_t{3}}, {"density", 0.3}, {"tightness", 0.5}};
    case Transform::Kind::kConflicts: return {{"pairs", std::int64_t{20}}};
    case Transform::Kind::kScale: return {{"factor", 1.5}};
    case Transform::Kind::kDrop: return {};
    case Transform::Kind::kCross: return {{"links", std::int64_t{5}}};
  }
  return {};
}

ParamMap recipe_default_params(const Recipe& recipe) {
  ParamMap out = default_params(recipe.base).params;
  for (std::size_t i = 0; i < recipe.chain.size(); ++i) {
    const std::string prefix = step_prefix(i);
    for (const auto& [k, v] : transform_default_params(recipe.chain[i].kind)) out[prefix + k] = v;
    if (recipe.chain[i].other) {
      for (const auto& [k, v] : recipe_default_params(*recipe.chain[i].other)) {
        out[prefix + "b." + k] = v;
      }
    }
  }
  return out;
}

std::vector<std::string> recipe_families(const Recipe& recipe) {
  std::vector<std::string> fams = constraint_families(recipe.base);
  for (std::size_t i = 0; i < recipe.chain.size(); ++i) {
    const Transform& t = recipe.chain[i];
    const std::string tag = "t" + std::to_string(i);
    switch (t.kind) {
      case Transform::Kind::kKnapsack: fams.push_back(tag + "knap_"); break;
      case Transform::Kind::kConflicts: fams.push_back(tag + "conf_"); break;
      case Transform::Kind::kScale: break;
      case Transform::Kind::kDrop:
        fams.erase(std::remove_if(fams.begin(), fams.end(),
                                  [&](const std::string& f) { return starts_with(f, t.target); }),
                   fams.end());
        break;
      case Transform::Kind::kCross:
        for (const auto& f : recipe_families(*t.other)) fams.push_back(tag + "b_" + f);
        fams.push_back(tag + "link_");
        break;
    }
  }
  return fams;
}

std::string recipe_title(const Recipe& recipe) {
  std::string title(class_title(recipe.base));
  for (const Transform& t : recipe.chain) {
    switch (t.kind) {
      case Transform::Kind::kKnapsack: title += " with knapsack side constraints"; break;
      case Transform::Kind::kConflicts: title += " with pairwise conflict constraints"; break;
      case Transform::Kind::kScale: title += " with rescaled " + t.target; break;
      case Transform::Kind::kDrop: title += " without " + t.target + " constraints"; break;
      case Transform::Kind::kCross: title += " combined with " + recipe_title(*t.other); break;
    }
  }
  return title;
}

MilpInstance generate_native(const Recipe& recipe, const ParamMap& params, std::uint64_t seed) {
  std::set<std::string> expected;
  collect_expected_keys(recipe, "", expected);
  for (const auto& [k, v] : params) {
    if (!expected.count(k)) throw Error("bad-params", "unknown parameter '" + k + "'");
  }
  for (const auto& k : expected) {
    if (!params.count(k)) throw Error("bad-params", "missing parameter '" + k + "'");
  }

  SeedParams sp;
  sp.class_id = recipe.base;
  sp.seed = seed;
  for (const auto& spec : param_schema(recipe.base)) sp.params[spec.name] = params.at(spec.name);
  for (std::size_t i = 0; i < recipe.chain.size(); ++i) {
    const Transform& t = recipe.chain[i];
    check_transform_params(t.kind, sub_params(params, step_prefix(i)), step_prefix(i));
    if (t.kind != Transform::Kind::kScale) continue;
    auto it = sp.params.find(t.target);
    if (it == sp.params.end()) throw Error("bad-recipe", "cannot scale unknown '" + t.target + "'");
    const double factor = param_as_double(params.at(step_prefix(i) + "factor"));
    if (auto* iv = std::get_if<std::int64_t>(&it->second)) {
      *iv = std::max<std::int64_t>(1, static_cast<std::int64_t>(static_cast<double>(*iv) * factor));
    } else if (auto* dv = std::get_if<double>(&it->second)) {
      *dv *= factor;
      for (const auto& spec : param_schema(recipe.base)) {
        if (spec.name == t.target && spec.probability) *dv = std::min(*dv, 1.0);
      }
    }
  }
  MilpInstance inst = generate_instance(sp);

  for (std::size_t i = 0; i < recipe.chain.size(); ++i) {
    const Transform& t = recipe.chain[i];
    const ParamMap p = sub_params(params, step_prefix(i));
    const std::string tag = "t" + std::to_string(i);
    Rng rng(mix_seed(seed, 0x7000 + i));
    switch (t.kind) {
      case Transform::Kind::kKnapsack: add_knapsacks(inst, p, rng, tag); break;
      case Transform::Kind::kConflicts: add_conflicts(inst, p, rng, tag); break;
      case Transform::Kind::kScale: break;
      case Transform::Kind::kDrop: drop_rows(inst, t.target); break;
      case Transform::Kind::kCross: {
        const auto other =
            generate_native(*t.other, sub_params(params, step_prefix(i) + "b."), mix_seed(seed, 0x8000 + i));
        cross_with(inst, other, p, rng, tag);
        break;
      }
    }
  }
  inst.metadata["recipe"] = recipe_to_json(recipe);
  return inst;
}

const std::vector<std::string>& code_markers() {
  static const std::vector<std::string> markers = {
      "### given instance data code ends here",
      "### new instance data code ends here",
      "### given constraints and variables and objective code ends here",
      "### new constraints and variables and objective code ends here",
      "### given parameter code ends here",
      "### new parameter code ends here",
  };
  return markers;
}

std::string render_native_code(const Recipe& recipe, const ParamMap& params,
                               const std::string& class_name) {
  const auto& mk = code_markers();
  std::string s;
  s += "# milpevo-native: " + recipe_to_json(recipe) + "\n";
  s += "import random\n\n";
  s += "from milpevo_native import seed_data, build_model, apply_transform\n\n\n";
  s += "class " + class_name + ":\n";
  s += "    \"\"\"" + recipe_title(recipe) + "\"\"\"\n\n";
  s += "    def __init__(self, parameters, seed=None):\n";
  s += "        for key, value in parameters.items():\n";
  s += "            setattr(self, key, value)\n";
  s += "        self.seed = seed\n";
  s += "        if self.seed:\n";
  s += "            random.seed(seed)\n\n";
  s += "    ################# Data Generation #################\n";
  s += "    def generate_instance(self):\n";
  s += "        res = seed_data('" + std::string(to_string(recipe.base)) + "', self)\n";
  s += "        " + mk[0] + "\n";
  s += "        " + mk[1] + "\n";
  s += "        return res\n\n";
  s += "    ################# Optimization Modeling #################\n";
  s += "    def solve(self, instance):\n";
  s += "        model = build_model(instance)\n";
  for (std::size_t i = 0; i < recipe.chain.size(); ++i) {
    const Transform& t = recipe.chain[i];
    s += "        apply_transform(model, '" + std::string(to_string(t.kind)) + "', step=" +
         std::to_string(i);
    if (!t.target.empty()) s += ", target='" + t.target + "'";
    if (t.other) s += ", partner='" + std::string(to_string(t.other->base)) + "'";
    s += ")\n";
  }
  s += "        " + mk[2] + "\n";
  s += "        " + mk[3] + "\n";
  s += "        return model.optimize()\n\n\n";
  s += "if __name__ == '__main__':\n";
  s += "    seed = 42\n\n";
  s += "    ################# Parameters #################\n";
  s += "    parameters = {\n";
  for (const auto& [k, v] : params) s += "        '" + k + "': " + python_value(v) + ",\n";
  s += "    }\n";
  s += "    " + mk[4] + "\n";
  s += "    " + mk[5] + "\n\n";
  s += "    problem = " + class_name + "(parameters, seed)\n";
  s += "    instance = problem.generate_instance()\n";
  s += "    status = problem.solve(instance)\n";
  return s;
}

std::string strip_markers(std::string_view code) {
  const auto& mk = code_markers();
  std::string out;
  std::size_t pos = 0;
  while (pos < code.size()) {
    std::size_t end = code.find('\n', pos);
    const bool last = end == std::string_view::npos;
    if (last) end = code.size();
    const std::string_view line = code.substr(pos, end - pos);
    const auto first = line.find_first_not_of(" \t");
    const auto lastc = line.find_last_not_of(" \t\r");
    const std::string_view trimmed =
        first == std::string_view::npos ? std::string_view{} : line.substr(first, lastc - first + 1);
    if (std::find(mk.begin(), mk.end(), trimmed) == mk.end()) {
      out.append(line);
      if (!last) out.push_back('\n');
    }
    pos = end + 1;
  }
  return out;
}

std::optional<Recipe> native_header(std::string_view code) {
  static constexpr std::string_view kTag = "# milpevo-native: ";
  const auto at = code.find(kTag);
  if (at == std::string_view::npos) return std::nullopt;
  auto end = code.find('\n', at);
  if (end == std::string_view::npos) end = code.size();
  return recipe_from_json(code.substr(at + kTag.size(), end - at - kTag.size()));
}

std::string record_to_json(const MilpClassRecord& r) {
  ojson j;
  j["id"] = r.id;
  j["native"] = r.native;
  j["recipe"] = r.native ? recipe_to_ojson(r.recipe) : ojson(nullptr);
  j["level"] = r.level;
  j["op"] = r.op;
  j["parents"] = r.parents;
  j["params"] = params_to_ojson(r.params);
  j["accepted_params"] = ojson::array();
  for (const auto& p : r.accepted_params) j["accepted_params"].push_back(params_to_ojson(p));
  j["solve_seconds"] = r.solve_seconds;
  j["description"] = r.description;
  j["code"] = r.code;
  return j.dump(2);
}

MilpClassRecord record_from_json(std::string_view text) {
  try {
    const ojson j = ojson::parse(text);
    MilpClassRecord r;
    r.id = j.at("id").get<std::string>();
    r.native = j.at("native").get<bool>();
    if (r.native) r.recipe = recipe_from_ojson(j.at("recipe"));
    r.level = j.at("level").get<int>();
    r.op = j.at("op").get<std::string>();
    r.parents = j.at("parents").get<std::vector<std::string>>();
    r.params = params_from_json(j.at("params").dump());
    for (const auto& p : j.at("accepted_params")) r.accepted_params.push_back(params_from_json(p.dump()));
    r.solve_seconds = j.at("solve_seconds").get<double>();
    r.description = j.at("description").get<std::string>();
    r.code = j.at("code").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad-record", e.what());
  }
}

namespace {

std::string camel_case(std::string_view title) {
  std::string out;
  bool up = true;
  for (char ch : title) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      out.push_back(up ? static_cast<char>(std::toupper(static_cast<unsigned char>(ch))) : ch);
      up = false;
    } else {
      up = true;
    }
  }
  return out;
}

}  // namespace

MilpClassRecord seed_record(SeedClass c) {
  MilpClassRecord r;
  r.id = std::string(to_string(c));
  r.native = true;
  r.recipe.base = c;
  r.params = default_params(c).params;
  r.code = render_native_code(r.recipe, r.params, camel_case(class_title(c)));
  r.level = 0;
  r.op = "seed";
  r.description = std::string(class_title(c));
  return r;
}

std::string MockRunner::run(const std::string& code, const ParamMap&, std::uint64_t) {
  const std::string name = hex64(fnv1a64(code)) + ".mps";
  if (dir_.empty() || !std::filesystem::exists(std::filesystem::path(dir_) / name)) {
    throw Error("runner", "mock runner has no canned instance " + name);
  }
  return read_file((std::filesystem::path(dir_) / name).string());
}

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t at = s.find(from); at != std::string::npos; at = s.find(from, at + to.size())) {
    s.replace(at, from.size(), to);
  }
}

}  // namespace

std::string CommandRunner::run(const std::string& code, const ParamMap& params,
                               std::uint64_t seed) {
  namespace fs = std::filesystem;
  std::string pattern = (fs::temp_directory_path() / "milpevo-run-XXXXXX").string();
  if (!mkdtemp(pattern.data())) throw Error("runner", "cannot create scratch directory");
  const fs::path dir(pattern);
  const std::string script = (dir / "class.py").string();
  const std::string params_path = (dir / "params.json").string();
  const std::string out = (dir / "instance.mps").string();
  write_file(script, strip_markers(code));
  write_file(params_path, params_to_json(params));
  std::string cmd = template_;
  replace_all(cmd, "{script}", script);
  replace_all(cmd, "{params}", params_path);
  replace_all(cmd, "{seed}", std::to_string(seed));
  replace_all(cmd, "{out}", out);
  const std::string wrapped = "cd '" + dir.string() + "' && timeout " +
                              format_double(timeout_) + " " + cmd + " > /dev/null 2>&1";
  const int rc = std::system(wrapped.c_str());
  std::string text;
  const bool ok = rc == 0 && fs::exists(out);
  if (ok) text = read_file(out);
  std::error_code ec;
  fs::remove_all(dir, ec);
  if (!ok) throw Error("runner", "command failed with status " + std::to_string(rc));
  return text;
}

MilpInstance instantiate(const MilpClassRecord& record, const ParamMap& params,
                         std::uint64_t seed, SandboxRunner* runner) {
  if (record.native) return generate_native(record.recipe, params, seed);
  if (!runner) throw Error("runner", "external class '" + record.id + "' needs a sandbox runner");
  return parse_mps(runner->run(record.code, params, seed));
}

}  // namespace milpevo
