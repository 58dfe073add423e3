#include "milpevo/evolve.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace milpevo {

namespace detail {
const std::map<std::string, std::string>& embedded_files();
}

namespace {

constexpr std::array<std::string_view, 10> kOperatorNames = {
    "Formulation_Add", "Topic_Add", "conv_add", "Cross_Over", "Mutate",
    "Formulation_Mutate", "Mutate_redundancy", "Topic_new", "New", "Delete"};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    out.push_back(line.substr(first, line.find_last_not_of(" \t\r") - first + 1));
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  return std::string(s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1));
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

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

std::string_view to_string(Operator op) { return kOperatorNames[static_cast<std::size_t>(op)]; }

Operator parse_operator(std::string_view name) {
  for (Operator op : kAllOperators) {
    if (to_string(op) == name) return op;
  }
  throw Error("config", "unknown operator '" + std::string(name) + "'");
}

bool needs_topic(Operator op) {
  return op == Operator::kTopicAdd || op == Operator::kConvAdd || op == Operator::kTopicNew;
}
bool needs_methods(Operator op) {
  return op == Operator::kFormulationAdd || op == Operator::kFormulationMutate;
}
bool needs_letters(Operator op) { return op == Operator::kMutate || op == Operator::kTopicNew; }

void OperatorWeights::validate() const {
  for (Operator op : kAllOperators) {
    const double v = (*this)[op];
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error("config", "weight of " + std::string(to_string(op)) + " must be positive");
    }
  }
}

std::string weights_to_json(const OperatorWeights& w) {
  nlohmann::ordered_json j;
  for (Operator op : kAllOperators) j[std::string(to_string(op))] = w[op];
  return j.dump();
}

OperatorWeights weights_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  if (!j.is_object() || j.size() != kAllOperators.size()) {
    throw Error("config", "operator weights need exactly the 10 operator keys");
  }
  OperatorWeights w;
  for (Operator op : kAllOperators) {
    const std::string key(to_string(op));
    if (!j.contains(key)) throw Error("config", "missing weight for " + key);
    w[op] = j.at(key).get<double>();
  }
  w.validate();
  return w;
}

OperatorWeights adjusted_weights(const OperatorWeights& weights, double parent_solve_seconds) {
  OperatorWeights w = weights;
  if (parent_solve_seconds > kLongSolveSeconds) {
    w[Operator::kDelete] = 0.8;
    for (Operator op : {Operator::kFormulationAdd, Operator::kTopicAdd, Operator::kConvAdd}) {
      w[op] *= 0.5;
    }
  }
  return w;
}

Operator operator_at(double u, const OperatorWeights& weights) {
  const double total = std::accumulate(weights.w.begin(), weights.w.end(), 0.0);
  const double x = u * total;
  double cum = 0.0;
  for (Operator op : kAllOperators) {
    cum += weights[op];
    if (x < cum) return op;
  }
  return kAllOperators.back();
}

Operator select_operator(Rng& rng, const OperatorWeights& weights, double parent_solve_seconds) {
  const OperatorWeights w = adjusted_weights(weights, parent_solve_seconds);
  w.validate();
  return operator_at(rng.uniform(), w);
}

const std::vector<std::string>& formulation_methods() {
  static const std::vector<std::string> methods = {
      "Knapsack Constraints (Set Packing, Set Covering, Set Partitioning)",
      "Clique Inequalities",
      "Big M Formulation",
      "Convex Hull Formulation",
      "Logical Conditions",
      "Piecewise Linear Functions",
      "Symmetry Breaking",
      "Special Ordered Sets",
      "Indicator Constraints",
      "Semi-Continuous Variables",
      "Stochastic and Robust Optimization",
      "Network Flow Models",
  };
  return methods;
}

std::vector<Topic> generate_topics(const std::vector<std::string>& applications,
                                   const std::vector<std::string>& methodologies, std::size_t count,
                                   Rng& rng) {
  const std::size_t total = applications.size() * methodologies.size();
  if (count > total) {
    throw Error("config", "requested " + std::to_string(count) + " topics from only " +
                              std::to_string(total) + " combinations");
  }
  std::vector<Topic> out;
  for (std::size_t idx : rng.sample_without_replacement(total, count)) {
    out.push_back({applications[idx / methodologies.size()],
                   methodologies[idx % methodologies.size()]});
  }
  return out;
}

namespace {

TemplateSet from_files(const std::function<std::string(const std::string&)>& read) {
  const auto manifest = nlohmann::json::parse(read("templates/manifest.json"));
  std::array<std::string, 10> text, origin;
  for (Operator op : kAllOperators) {
    const std::string key(to_string(op));
    if (!manifest.at("templates").contains(key)) {
      throw Error("config", "template manifest lacks " + key);
    }
    const auto& entry = manifest.at("templates").at(key);
    text[static_cast<std::size_t>(op)] = read("templates/" + entry.at("file").get<std::string>());
    origin[static_cast<std::size_t>(op)] = entry.at("origin").get<std::string>();
  }
  return TemplateSet::from_parts(std::move(text), std::move(origin));
}

std::vector<std::string> embedded_lines(const std::string& name) {
  return lines_of(detail::embedded_files().at(name));
}

}  // namespace

TemplateSet TemplateSet::from_parts(std::array<std::string, 10> text,
                                    std::array<std::string, 10> origin) {
  TemplateSet t;
  t.text_ = std::move(text);
  t.origin_ = std::move(origin);
  return t;
}

TemplateSet TemplateSet::builtin() {
  static const TemplateSet set =
      from_files([](const std::string& name) { return detail::embedded_files().at(name); });
  return set;
}

TemplateSet TemplateSet::load(const std::string& directory) {
  const std::filesystem::path root(directory);
  return from_files([&](const std::string& name) {
    // Accept either the data directory or its templates/ subdirectory.
    auto path = root / name;
    if (!std::filesystem::exists(path)) path = root / std::filesystem::path(name).filename();
    if (!std::filesystem::exists(path)) throw Error("config", "missing template file " + path.string());
    return read_file(path.string());
  });
}

const std::string& TemplateSet::text(Operator op) const { return text_[static_cast<std::size_t>(op)]; }
const std::string& TemplateSet::origin(Operator op) const {
  return origin_[static_cast<std::size_t>(op)];
}

const std::vector<std::string>& builtin_applications() {
  static const auto items = embedded_lines("topics/applications.txt");
  return items;
}

const std::vector<std::string>& builtin_methodologies() {
  static const auto items = embedded_lines("topics/methodologies.txt");
  return items;
}

namespace {

/// Single-pass substitution of {name} slots; inserted text is not rescanned.
std::string fill_slots(const std::string& tpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const std::size_t open = tpl.find('{', pos);
    if (open == std::string::npos) break;
    const std::size_t close = tpl.find('}', open);
    if (close == std::string::npos) break;
    auto it = values.find(tpl.substr(open + 1, close - open - 1));
    if (it == values.end()) {
      out.append(tpl, pos, open + 1 - pos);
      pos = open + 1;
      continue;
    }
    out.append(tpl, pos, open - pos);
    out += it->second;
    pos = close + 1;
  }
  out.append(tpl, pos, std::string::npos);
  return out;
}

}  // namespace

std::string build_prompt(Operator op, const MilpClassRecord& parent, PromptContext& ctx, Rng& rng,
                         const TemplateSet& templates) {
  std::map<std::string, std::string> values;
  values["code"] = parent.code;
  if (op == Operator::kCrossOver) {
    if (!ctx.second) throw Error("config", "Cross_Over needs a second parent");
    values["code2"] = ctx.second->code;
  }
  if (needs_topic(op)) {
    if (!ctx.topic) throw Error("config", std::string(to_string(op)) + " needs a topic");
    values["topic"] = ctx.topic->text();
  }
  if (needs_methods(op)) {
    if (ctx.methods.empty()) {
      const auto& all = formulation_methods();
      for (std::size_t i : rng.sample_without_replacement(all.size(), 3)) {
        ctx.methods.push_back(all[i]);
      }
    }
    values["three_random_formulation_methods"] = join(ctx.methods, ", ");
  }
  if (needs_letters(op)) {
    if (ctx.letters.empty()) {
      for (std::size_t i : rng.sample_without_replacement(26, 5)) {
        ctx.letters.push_back(static_cast<char>('A' + i));
      }
    }
    std::vector<std::string> letters;
    for (char c : ctx.letters) letters.emplace_back(1, c);
    values["five_random_letters"] = join(letters, ", ");
  }
  return fill_slots(templates.text(op), values);
}

namespace {

struct Fence {
  std::size_t begin, end;  // content range
};

std::vector<Fence> fenced_blocks(std::string_view text) {
  std::vector<Fence> blocks;
  std::size_t pos = 0;
  bool open = false;
  std::size_t content_begin = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    const auto first = line.find_first_not_of(" \t");
    const bool fence = first != std::string_view::npos && line.substr(first, 3) == "```";
    if (fence) {
      if (!open) {
        open = true;
        content_begin = std::min(end + 1, text.size());
      } else {
        blocks.push_back({content_begin, pos});
        open = false;
      }
    }
    if (end == text.size()) break;
    pos = end + 1;
  }
  return blocks;
}

ParamValue parse_constant(const std::string& raw, const std::string& name) {
  const std::string v = trim(raw);
  if (v == "True" || v == "true") return true;
  if (v == "False" || v == "false") return false;
  if (v.size() >= 2 && (v.front() == '\'' || v.front() == '"') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  if (!v.empty()) {
    char* end = nullptr;
    const bool integral = v.find_first_of(".eE") == std::string::npos;
    if (integral) {
      const long long i = std::strtoll(v.c_str(), &end, 10);
      if (end && *end == '\0') return static_cast<std::int64_t>(i);
    }
    const double d = std::strtod(v.c_str(), &end);
    if (end && *end == '\0' && std::isfinite(d)) return d;
  }
  throw Error("bad-params", "parameter '" + name + "' is not a constant: " + v);
}

/// Splits on commas outside quotes.
std::vector<std::string> split_entries(std::string_view body) {
  std::vector<std::string> out;
  std::string cur;
  char quote = 0;
  for (char ch : body) {
    if (quote) {
      cur.push_back(ch);
      if (ch == quote) quote = 0;
    } else if (ch == '\'' || ch == '"') {
      quote = ch;
      cur.push_back(ch);
    } else if (ch == ',' || ch == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

ParamMap parse_parameter_block(std::string_view code) {
  std::size_t at = code.find("parameters");
  std::size_t open = std::string_view::npos;
  while (at != std::string_view::npos) {
    std::size_t p = at + 10;
    while (p < code.size() && (code[p] == ' ' || code[p] == '\t')) ++p;
    if (p < code.size() && code[p] == '=') {
      ++p;
      while (p < code.size() && std::isspace(static_cast<unsigned char>(code[p]))) ++p;
      if (p < code.size() && code[p] == '{') {
        open = p;
        break;
      }
    }
    at = code.find("parameters", at + 1);
  }
  if (open == std::string_view::npos) throw Error("bad-params", "no parameters block");
  const std::size_t close = code.find('}', open);
  if (close == std::string_view::npos) throw Error("bad-params", "unterminated parameters block");
  std::string body(code.substr(open + 1, close - open - 1));
  if (body.find('{') != std::string::npos) throw Error("bad-params", "nested parameter values");
  // Drop comments.
  std::string clean;
  bool comment = false;
  char quote = 0;
  for (char ch : body) {
    if (ch == '\n') comment = false;
    if (comment) continue;
    if (!quote && ch == '#') {
      comment = true;
      continue;
    }
    if (quote && ch == quote) quote = 0;
    else if (!quote && (ch == '\'' || ch == '"')) quote = ch;
    clean.push_back(ch);
  }
  ParamMap params;
  for (const std::string& entry : split_entries(clean)) {
    const std::string e = trim(entry);
    if (e.empty()) continue;
    if (e.front() != '\'' && e.front() != '"') throw Error("bad-params", "unquoted key in '" + e + "'");
    const std::size_t key_end = e.find(e.front(), 1);
    if (key_end == std::string::npos) throw Error("bad-params", "unterminated key in '" + e + "'");
    const std::string key = e.substr(1, key_end - 1);
    const std::size_t colon = e.find(':', key_end);
    if (colon == std::string::npos) throw Error("bad-params", "missing ':' in '" + e + "'");
    params[key] = parse_constant(e.substr(colon + 1), key);
  }
  return params;
}

ExtractedCode extract_class_code(std::string_view response) {
  const auto blocks = fenced_blocks(response);
  if (blocks.empty()) throw Error("no-code", "response contains no fenced code block");
  const Fence& last = blocks.back();
  ExtractedCode out;
  out.marked_code = std::string(response.substr(last.begin, last.end - last.begin));
  for (const auto& marker : code_markers()) {
    if (out.marked_code.find(marker) == std::string::npos) {
      throw Error("no-code", "code block lacks marker '" + marker + "'");
    }
  }
  out.code = strip_markers(out.marked_code);
  out.params = parse_parameter_block(out.marked_code);
  return out;
}

// ---------------------------------------------------------------------------
// Mock client

MockLlm::MockLlm(std::uint64_t seed, std::string canned_dir, TemplateSet templates)
    : seed_(seed), canned_dir_(std::move(canned_dir)), templates_(std::move(templates)) {}

namespace {

struct ParentCode {
  Recipe recipe;
  ParamMap params;
};

std::vector<ParentCode> native_parents(std::string_view prompt) {
  static constexpr std::string_view kTag = "# milpevo-native: ";
  std::vector<std::size_t> starts;
  for (auto at = prompt.find(kTag); at != std::string_view::npos; at = prompt.find(kTag, at + 1)) {
    starts.push_back(at);
  }
  std::vector<ParentCode> out;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const std::size_t end = k + 1 < starts.size() ? starts[k + 1] : prompt.size();
    const std::string_view code = prompt.substr(starts[k], end - starts[k]);
    out.push_back({*native_header(code), parse_parameter_block(code)});
  }
  return out;
}

std::string pick_family(const Recipe& r, Rng& rng) {
  const auto fams = recipe_families(r);
  return fams[rng.index(fams.size())];
}

/// Appends a transform and its parameters; `partner` params go under b.
void push_step(Recipe& recipe, ParamMap& params, Transform t, const ParamMap& step_params,
               const ParamMap* partner = nullptr) {
  const std::string prefix = "t" + std::to_string(recipe.chain.size()) + ".";
  for (const auto& [k, v] : step_params) params[prefix + k] = v;
  if (partner) {
    for (const auto& [k, v] : *partner) params[prefix + "b." + k] = v;
  }
  recipe.chain.push_back(std::move(t));
}

ParamMap knapsack_params(Rng& rng) {
  return {{"rows", static_cast<std::int64_t>(rng.uniform_int(2, 5))},
          {"density", 0.1 * static_cast<double>(rng.uniform_int(2, 5))},
          {"tightness", 0.1 * static_cast<double>(rng.uniform_int(3, 6))}};
}

ParamMap conflict_params(Rng& rng) {
  return {{"pairs", static_cast<std::int64_t>(rng.uniform_int(10, 40))}};
}

void add_structure(Recipe& r, ParamMap& p, Rng& rng) {
  if (rng.bernoulli(0.5)) {
    push_step(r, p, {Transform::Kind::kKnapsack, {}, nullptr}, knapsack_params(rng));
  } else {
    push_step(r, p, {Transform::Kind::kConflicts, {}, nullptr}, conflict_params(rng));
  }
}

void scale_step(Recipe& r, ParamMap& p, Rng& rng, double factor) {
  std::vector<std::string> ints;
  for (const auto& spec : param_schema(r.base)) {
    if (spec.kind == ParamKind::kInt) ints.push_back(spec.name);
  }
  const std::string target = ints[rng.index(ints.size())];
  push_step(r, p, {Transform::Kind::kScale, target, nullptr}, {{"factor", factor}});
}

std::string mock_class_response(Operator op, const std::vector<ParentCode>& parents, Rng& rng) {
  Recipe recipe = parents[0].recipe;
  ParamMap params = parents[0].params;
  switch (op) {
    case Operator::kFormulationAdd:
    case Operator::kConvAdd:
      push_step(recipe, params, {Transform::Kind::kKnapsack, {}, nullptr}, knapsack_params(rng));
      break;
    case Operator::kTopicAdd:
      push_step(recipe, params, {Transform::Kind::kConflicts, {}, nullptr}, conflict_params(rng));
      break;
    case Operator::kCrossOver: {
      const ParentCode& other = parents.size() > 1 ? parents[1] : parents[0];
      push_step(recipe, params,
                {Transform::Kind::kCross, {}, std::make_shared<Recipe>(other.recipe)},
                {{"links", static_cast<std::int64_t>(rng.uniform_int(2, 8))}}, &other.params);
      break;
    }
    case Operator::kMutate: {
      const double factors[] = {0.75, 1.25, 1.5};
      scale_step(recipe, params, rng, factors[rng.index(3)]);
      break;
    }
    case Operator::kFormulationMutate:
      if (recipe_families(recipe).size() > 1) {
        push_step(recipe, params, {Transform::Kind::kDrop, pick_family(recipe, rng), nullptr}, {});
      }
      push_step(recipe, params, {Transform::Kind::kKnapsack, {}, nullptr}, knapsack_params(rng));
      break;
    case Operator::kMutateRedundancy:
      if (recipe_families(recipe).size() > 1) {
        push_step(recipe, params, {Transform::Kind::kDrop, pick_family(recipe, rng), nullptr}, {});
      }
      push_step(recipe, params, {Transform::Kind::kConflicts, {}, nullptr}, conflict_params(rng));
      break;
    case Operator::kTopicNew:
    case Operator::kNew: {
      std::vector<SeedClass> others;
      for (SeedClass c : kAllSeedClasses) {
        if (c != recipe.base) others.push_back(c);
      }
      recipe = Recipe{others[rng.index(others.size())], {}};
      params = default_params(recipe.base).params;
      add_structure(recipe, params, rng);
      break;
    }
    case Operator::kDelete:
      if (recipe_families(recipe).size() > 1) {
        push_step(recipe, params, {Transform::Kind::kDrop, pick_family(recipe, rng), nullptr}, {});
      } else {
        scale_step(recipe, params, rng, 0.5);
      }
      break;
  }
  const std::string title = recipe_title(recipe);
  const std::string name =
      camel_case(class_title(recipe.base)) + hex64(fnv1a64(recipe_to_json(recipe))).substr(0, 6);
  std::string out;
  out += "Description of the given MILP:\n" + recipe_title(parents[0].recipe) + ".\n\n";
  out += "Description of the new MILP:\n" + title + ".\n\n";
  out += "New complete MILP code:\n\n```python\n";
  out += render_native_code(recipe, params, name);
  out += "```\n";
  return out;
}

}  // namespace

std::string MockLlm::complete(const std::string& prompt) {
  if (!canned_dir_.empty()) {
    const auto path = std::filesystem::path(canned_dir_) / (hex64(fnv1a64(prompt)) + ".txt");
    if (std::filesystem::exists(path)) return read_file(path.string());
  }
  Rng rng(mix_seed(seed_, fnv1a64(prompt)));
  if (prompt.rfind(kDescribePromptHeader, 0) == 0) {
    static constexpr std::string_view kTag = "Class characteristics: ";
    const auto at = prompt.find(kTag);
    if (at == std::string::npos) return "An optimization model.";
    const auto end = prompt.find('\n', at);
    return "This instance belongs to the class: " +
           prompt.substr(at + kTag.size(), end == std::string::npos ? std::string::npos
                                                                   : end - at - kTag.size());
  }
  for (Operator op : kAllOperators) {
    const std::string& tpl = templates_.text(op);
    const std::string first_line = tpl.substr(0, tpl.find('\n'));
    if (prompt.rfind(first_line, 0) != 0) continue;
    const auto parents = native_parents(prompt);
    if (parents.empty()) {
      return "The given code is not a native class, so no transformation is proposed.";
    }
    return mock_class_response(op, parents, rng);
  }
  throw Error("llm", "mock client cannot interpret the prompt");
}

// ---------------------------------------------------------------------------
// Levels

LevelResult run_level(const std::vector<MilpClassRecord>& pool, const LevelOptions& options,
                      LlmClient& llm, Rng& rng) {
  if (pool.empty()) throw Error("config", "evolution pool is empty");
  if (options.k < 1) throw Error("config", "K must be at least 1");
  const TemplateSet templates = options.templates ? *options.templates : TemplateSet::builtin();
  const std::uint64_t base = rng.next_u64();
  LevelResult result;
  for (int slot = 0; slot < options.k; ++slot) {
    Rng srng(mix_seed(mix_seed(base, static_cast<std::uint64_t>(options.level)),
                      static_cast<std::uint64_t>(slot)));
    const MilpClassRecord& parent = pool[srng.index(pool.size())];
    const Operator op = select_operator(srng, options.weights, parent.solve_seconds);
    PromptContext ctx;
    if (op == Operator::kCrossOver) {
      std::size_t j = 0;
      if (pool.size() > 1) {
        const std::size_t pi = static_cast<std::size_t>(&parent - pool.data());
        j = srng.index(pool.size() - 1);
        if (j >= pi) ++j;
      }
      ctx.second = &pool[j];
    }
    if (needs_topic(op)) {
      if (!options.topics || options.topics->empty()) {
        result.failures.push_back({slot, std::string(to_string(op)), "no topics available"});
        continue;
      }
      ctx.topic = (*options.topics)[srng.index(options.topics->size())];
    }
    try {
      const std::string prompt = build_prompt(op, parent, ctx, srng, templates);
      const std::string response = llm.complete(prompt);
      const ExtractedCode code = extract_class_code(response);
      MilpClassRecord rec;
      const auto header = native_header(code.marked_code);
      rec.native = header.has_value();
      if (header) rec.recipe = *header;
      rec.code = code.marked_code;
      rec.params = code.params;
      rec.level = options.level;
      rec.op = std::string(to_string(op));
      rec.parents.push_back(parent.id);
      if (ctx.second) rec.parents.push_back(ctx.second->id);
      rec.id = "L" + std::to_string(options.level) + "-" + std::to_string(slot) + "-" +
               hex64(fnv1a64(code.marked_code)).substr(0, 8);
      rec.description = rec.native ? recipe_title(rec.recipe) : std::string{};
      result.records.push_back(std::move(rec));
    } catch (const Error& e) {
      result.failures.push_back({slot, std::string(to_string(op)), e.code() + ": " + e.what()});
    } catch (const std::exception& e) {
      result.failures.push_back({slot, std::string(to_string(op)), e.what()});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Descriptions

namespace {

std::string template_description(const MilpClassRecord* record, const MilpInstance& inst) {
  int bin = 0, integer = 0, cont = 0;
  for (VarKind k : inst.kind) {
    if (k == VarKind::kBinary) ++bin;
    else if (k == VarKind::kContinuous) ++cont;
    else ++integer;
  }
  int le = 0, ge = 0, eq = 0;
  for (const Row& r : inst.rows) {
    if (r.relation == Relation::kLessEqual) ++le;
    else if (r.relation == Relation::kGreaterEqual) ++ge;
    else ++eq;
  }
  std::ostringstream s;
  if (record) {
    const std::string title = record->native ? recipe_title(record->recipe)
                              : !record->description.empty() ? record->description
                                                             : record->id;
    s << "A " << title << " problem. ";
  }
  s << "The model " << (inst.sense == Sense::kMaximize ? "maximizes" : "minimizes")
    << " a linear objective over " << inst.n_vars() << " variables (" << bin << " binary, "
    << integer << " integer, " << cont << " continuous) subject to " << inst.n_cons()
    << " linear constraints (" << le << " less-or-equal, " << ge << " greater-or-equal, " << eq
    << " equality).";
  return s.str();
}

}  // namespace

Description describe_instance(const MilpClassRecord* record, const MilpInstance& instance,
                              LlmClient* llm) {
  Description d;
  d.text = template_description(record, instance);
  if (!llm) return d;
  std::string prompt(kDescribePromptHeader);
  prompt += "\nClass characteristics: " + d.text + "\n";
  prompt += "Sections: " + describe_mps(write_mps(instance)) + "\n";
  try {
    d.text = llm->complete(prompt);
  } catch (const Error&) {
    d.fallback = true;
  }
  return d;
}

std::string describe_mps(std::string_view mps) {
  enum { kNone, kRows, kCols, kRhs, kBounds, kRanges } section = kNone;
  int rows_l = 0, rows_g = 0, rows_e = 0, rhs = 0, bounds = 0, ranges = 0;
  std::set<std::string> columns, integer_cols;
  bool in_marker = false;
  std::istringstream in{std::string(mps)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '*') continue;
    const auto tok = split_whitespace(line);
    if (tok.empty()) continue;
    if (!std::isspace(static_cast<unsigned char>(line[0]))) {
      const std::string head = tok[0];
      section = head == "ROWS" ? kRows : head == "COLUMNS" ? kCols : head == "RHS" ? kRhs
              : head == "BOUNDS" ? kBounds : head == "RANGES" ? kRanges : kNone;
      continue;
    }
    switch (section) {
      case kRows:
        if (tok[0] == "L") ++rows_l;
        else if (tok[0] == "G") ++rows_g;
        else if (tok[0] == "E") ++rows_e;
        break;
      case kCols:
        if (tok.size() >= 3 && tok[1] == "'MARKER'") {
          in_marker = tok[2] == "'INTORG'";
          break;
        }
        columns.insert(tok[0]);
        if (in_marker) integer_cols.insert(tok[0]);
        break;
      case kRhs: rhs += static_cast<int>((tok.size() - 1) / 2); break;
      case kBounds: ++bounds; break;
      case kRanges: ++ranges; break;
      case kNone: break;
    }
  }
  std::ostringstream s;
  s << "An MPS model with " << rows_l + rows_g + rows_e << " rows (" << rows_l
    << " less-or-equal, " << rows_g << " greater-or-equal, " << rows_e << " equality), "
    << columns.size() << " columns of which " << integer_cols.size() << " are integer, " << rhs
    << " right-hand-side entries, " << ranges << " range entries and " << bounds
    << " bound entries.";
  return s.str();
}

}  // namespace milpevo
