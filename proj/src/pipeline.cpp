#include "milpevo/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "milpevo/evalkit.hpp"

namespace milpevo {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

PipelineConfig PipelineConfig::defaults(std::string_view profile) {
  PipelineConfig c;
  const std::string p(profile);
  FilterCriteria::profile(p);  // validates the name
  c.profile = p;
  c.gap_train = TrainConfig::defaults(Task::kGap, p);
  c.branch_train = TrainConfig::defaults(Task::kBranch, p);
  c.align_train = TrainConfig::defaults(Task::kAlign, p);
  if (p == "paper") {
    c.time_limit = 200.0;
    c.k = 108;
    c.filter_budget = 240;
    c.topic_count = 5000;
    c.filter_stop_after = 0;
  }
  return c;
}

namespace {

ojson train_json(const TrainConfig& t) { return ojson::parse(train_config_to_json(t)); }

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error("config", std::string("bad value for '") + key + "'");
  }
}

TrainConfig merge_train(const nlohmann::json& j, TrainConfig base) {
  nlohmann::json full = nlohmann::json::parse(train_config_to_json(base));
  for (const auto& [k, v] : j.items()) {
    if (!full.contains(k)) throw Error("config", "unknown training key '" + k + "'");
    full[k] = v;
  }
  full["task"] = std::string(to_string(base.task));
  TrainConfig out = train_config_from_json(full.dump());
  return out;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config", std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("config", "config must be a JSON object");
  static const std::set<std::string> known = {
      "workspace", "template_dir", "mock_dir", "runner_command", "runner_timeout", "profile",
      "llm", "seed", "time_limit", "max_nodes", "seed_instances", "levels", "k", "filter_budget", "filter_stop_after",
      "topic_count", "weights", "gap_instances", "gap_include_seeds", "branch_classes",
      "branch_instances", "expert_prob", "max_samples", "align_instances",
      "align_include_evolved", "gap_train", "branch_train", "align_train", "eval_instances"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw Error("config", "unknown config key '" + k + "'");
  }
  PipelineConfig c = defaults(j.value("profile", std::string("desk")));
  read_key(j, "workspace", c.workspace);
  read_key(j, "template_dir", c.template_dir);
  read_key(j, "mock_dir", c.mock_dir);
  read_key(j, "runner_command", c.runner_command);
  read_key(j, "runner_timeout", c.runner_timeout);
  read_key(j, "llm", c.llm);
  read_key(j, "seed", c.seed);
  read_key(j, "time_limit", c.time_limit);
  read_key(j, "max_nodes", c.max_nodes);
  read_key(j, "seed_instances", c.seed_instances);
  read_key(j, "levels", c.levels);
  read_key(j, "k", c.k);
  read_key(j, "filter_budget", c.filter_budget);
  read_key(j, "filter_stop_after", c.filter_stop_after);
  read_key(j, "topic_count", c.topic_count);
  if (j.contains("weights")) c.weights = weights_from_json(j.at("weights").dump());
  read_key(j, "gap_instances", c.gap_instances);
  read_key(j, "gap_include_seeds", c.gap_include_seeds);
  read_key(j, "branch_classes", c.branch_classes);
  read_key(j, "branch_instances", c.branch_instances);
  read_key(j, "expert_prob", c.expert_prob);
  read_key(j, "max_samples", c.max_samples);
  read_key(j, "align_instances", c.align_instances);
  read_key(j, "align_include_evolved", c.align_include_evolved);
  read_key(j, "eval_instances", c.eval_instances);
  if (j.contains("gap_train")) c.gap_train = merge_train(j.at("gap_train"), c.gap_train);
  if (j.contains("branch_train")) c.branch_train = merge_train(j.at("branch_train"), c.branch_train);
  if (j.contains("align_train")) c.align_train = merge_train(j.at("align_train"), c.align_train);
  c.validate();
  return c;
}

std::string PipelineConfig::to_json() const {
  ojson j;
  j["workspace"] = workspace;
  j["template_dir"] = template_dir;
  j["mock_dir"] = mock_dir;
  j["runner_command"] = runner_command;
  j["runner_timeout"] = runner_timeout;
  j["profile"] = profile;
  j["llm"] = llm;
  j["seed"] = seed;
  j["time_limit"] = time_limit;
  j["max_nodes"] = max_nodes;
  j["seed_instances"] = seed_instances;
  j["levels"] = levels;
  j["k"] = k;
  j["filter_budget"] = filter_budget;
  j["filter_stop_after"] = filter_stop_after;
  j["topic_count"] = topic_count;
  j["weights"] = ojson::parse(weights_to_json(weights));
  j["gap_instances"] = gap_instances;
  j["gap_include_seeds"] = gap_include_seeds;
  j["branch_classes"] = branch_classes;
  j["branch_instances"] = branch_instances;
  j["expert_prob"] = expert_prob;
  j["max_samples"] = max_samples;
  j["align_instances"] = align_instances;
  j["align_include_evolved"] = align_include_evolved;
  j["gap_train"] = train_json(gap_train);
  j["branch_train"] = train_json(branch_train);
  j["align_train"] = train_json(align_train);
  j["eval_instances"] = eval_instances;
  return j.dump(2);
}

void PipelineConfig::validate() const {
  FilterCriteria::profile(profile);
  if (llm != "mock" && llm != "live") throw Error("config", "llm must be 'mock' or 'live'");
  if (workspace.empty()) throw Error("config", "workspace path is empty");
  if (!(time_limit > 0.0)) throw Error("config", "time_limit must be positive");
  if (max_nodes < 0) throw Error("config", "max_nodes must be non-negative");
  if (seed_instances < 1 || levels < 0 || k < 1 || filter_budget < 1 || topic_count < 1 ||
      gap_instances < 1 || branch_instances < 1 || align_instances < 1 || max_samples < 1 ||
      eval_instances < 1 || filter_stop_after < 0 || !(expert_prob > 0.0 && expert_prob <= 1.0)) {
    throw Error("config", "counts must be positive and expert_prob in (0, 1]");
  }
  weights.validate();
  gap_train.validate();
  branch_train.validate();
  align_train.validate();
  if (!template_dir.empty() && !fs::is_directory(template_dir)) {
    throw Error("config", "template_dir does not exist: " + template_dir);
  }
  if (!mock_dir.empty() && !fs::is_directory(mock_dir)) {
    throw Error("config", "mock_dir does not exist: " + mock_dir);
  }
}

// ---------------------------------------------------------------------------
// Workspace helpers

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

fs::path workspace_dir(const PipelineConfig& c) {
  const fs::path root(c.workspace);
  if (!fs::is_directory(root)) {
    throw Error("config", "workspace directory does not exist: " + c.workspace);
  }
  return root;
}

fs::path ensure(const fs::path& p) {
  fs::create_directories(p);
  return p;
}

std::string content_hash(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

/// Writes `data` and records its hash under `rel` in `files`.
void put_file(const fs::path& root, const std::string& rel, const std::string& data, ojson& files) {
  const fs::path p = root / rel;
  fs::create_directories(p.parent_path());
  write_file(p.string(), data);
  files[rel] = content_hash(data);
}

StageReport finish(const std::string& stage, const fs::path& manifest_path, const ojson& manifest,
                   const ojson& summary) {
  const std::string text = manifest.dump(2) + "\n";
  fs::create_directories(manifest_path.parent_path());
  write_file(manifest_path.string(), text);
  StageReport r;
  r.stage = stage;
  r.manifest_path = manifest_path.string();
  r.manifest_hash = content_hash(text);
  r.summary = summary.dump();
  return r;
}

SolveOptions solve_options(const PipelineConfig& c) {
  SolveOptions o;
  o.limits.time_seconds = c.time_limit;
  o.limits.deterministic_time = true;
  if (c.max_nodes > 0) o.limits.max_nodes = c.max_nodes;
  return o;
}

std::unique_ptr<SandboxRunner> make_runner(const PipelineConfig& c) {
  if (!c.runner_command.empty()) {
    return std::make_unique<CommandRunner>(c.runner_command, c.runner_timeout);
  }
  return std::make_unique<MockRunner>(c.mock_dir);
}

TemplateSet templates_for(const PipelineConfig& c) {
  return c.template_dir.empty() ? TemplateSet::builtin() : TemplateSet::load(c.template_dir);
}

std::vector<MilpClassRecord> read_records(const fs::path& dir, const std::vector<std::string>& ids) {
  std::vector<MilpClassRecord> out;
  for (const auto& id : ids) {
    out.push_back(record_from_json(read_file((dir / (id + ".json")).string())));
  }
  return out;
}

std::vector<MilpClassRecord> seed_classes(const fs::path& root) {
  const fs::path m = root / "classes" / "seeds" / "manifest.json";
  if (!fs::exists(m)) throw Error("config", "no seed classes in the workspace; run seed-gen first");
  const auto j = nlohmann::json::parse(read_file(m.string()));
  return read_records(root / "classes" / "seeds", j.at("classes").get<std::vector<std::string>>());
}

std::vector<MilpClassRecord> evolved_classes(const fs::path& root) {
  const fs::path m = root / "classes" / "evolved" / "manifest.json";
  if (!fs::exists(m)) return {};
  const auto j = nlohmann::json::parse(read_file(m.string()));
  std::vector<std::string> ids;
  for (const auto& level : j.at("levels")) {
    for (const auto& id : level.at("accepted")) ids.push_back(id.get<std::string>());
  }
  return read_records(root / "classes" / "evolved", ids);
}

const MilpClassRecord& find_class(const std::vector<MilpClassRecord>& all, const std::string& id) {
  for (const auto& r : all) {
    if (r.id == id) return r;
  }
  throw Error("config", "unknown class '" + id + "'");
}

std::vector<std::string> read_lines(const fs::path& p) {
  if (!fs::exists(p)) throw Error("config", "missing dataset " + p.string() + "; run collect first");
  std::vector<std::string> out;
  std::istringstream in(read_file(p.string()));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

}  // namespace

std::vector<MilpClassRecord> load_classes(const std::string& workspace) {
  const fs::path root(workspace);
  auto all = seed_classes(root);
  auto evolved = evolved_classes(root);
  all.insert(all.end(), evolved.begin(), evolved.end());
  return all;
}

Split split_groups(const std::vector<std::string>& group_ids, std::uint64_t seed) {
  std::vector<std::string> unique(group_ids.begin(), group_ids.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  SplitSpec spec;
  spec.seed = mix_seed(seed, 0x5917);
  return split_classes(unique, spec);
}

std::unique_ptr<LlmClient> make_llm(const PipelineConfig& c) {
  if (c.llm == "live") return std::make_unique<HttpLlm>(HttpLlmConfig::from_env());
  return std::make_unique<MockLlm>(c.seed, c.mock_dir, templates_for(c));
}

// ---------------------------------------------------------------------------
// seed-gen

StageReport run_seed_gen(const PipelineConfig& config, const Logger& log) {
  config.validate();
  const fs::path root = workspace_dir(config);
  ojson files = ojson::object();
  ojson classes = ojson::array();
  for (SeedClass c : kAllSeedClasses) {
    MilpClassRecord rec = seed_record(c);
    const MilpInstance probe = instantiate(rec, rec.params, 42);
    rec.solve_seconds = solve_milp(probe, solve_options(config)).deterministic_seconds;
    put_file(root, "classes/seeds/" + rec.id + ".json", record_to_json(rec), files);
    classes.push_back(rec.id);
    for (int i = 0; i < config.seed_instances; ++i) {
      const std::uint64_t s = config.seed + static_cast<std::uint64_t>(i);
      const MilpInstance inst = instantiate(rec, rec.params, s);
      put_file(root, "instances/" + rec.id + "/" + rec.id + "_" + std::to_string(s) + ".mps",
               write_mps(inst), files);
    }
    say(log, "seed-gen: " + rec.id + " (" + std::to_string(config.seed_instances) + " instances)");
  }
  ojson m;
  m["stage"] = "seed-gen";
  m["seed"] = config.seed;
  m["classes"] = classes;
  m["files"] = files;
  ojson summary;
  summary["classes"] = classes.size();
  summary["instances"] = classes.size() * static_cast<std::size_t>(config.seed_instances);
  return finish("seed-gen", root / "classes" / "seeds" / "manifest.json", m, summary);
}

// ---------------------------------------------------------------------------
// evolve

StageReport run_evolve(const PipelineConfig& config, LlmClient& llm, bool resume,
                       const Logger& log) {
  config.validate();
  const fs::path root = workspace_dir(config);
  const fs::path dir = ensure(root / "classes" / "evolved");
  const auto seeds = seed_classes(root);
  const TemplateSet templates = templates_for(config);
  Rng topic_rng(mix_seed(config.seed, 0x70));
  const auto topics = generate_topics(builtin_applications(), builtin_methodologies(),
                                      static_cast<std::size_t>(config.topic_count), topic_rng);
  auto runner = make_runner(config);
  FilterOptions fopt;
  fopt.criteria = config.criteria();
  fopt.stop_after_accepted = config.filter_stop_after;

  ojson levels = ojson::array();
  ojson files = ojson::object();
  std::vector<std::vector<MilpClassRecord>> accepted_by_level = {seeds};
  const fs::path manifest_path = dir / "manifest.json";
  if (resume && fs::exists(manifest_path)) {
    const auto old = ojson::parse(read_file(manifest_path.string()));
    if (old.at("seed").get<std::uint64_t>() != config.seed ||
        old.at("profile").get<std::string>() != config.profile) {
      throw Error("config", "cannot resume: seed or profile differs from the manifest");
    }
    levels = old.at("levels");
    files = old.at("files");
    for (const auto& level : levels) {
      accepted_by_level.push_back(
          read_records(dir, level.at("accepted").get<std::vector<std::string>>()));
    }
  }
  const int done = static_cast<int>(accepted_by_level.size()) - 1;
  for (int level = done + 1; level <= config.levels; ++level) {
    std::vector<MilpClassRecord> pool = accepted_by_level.back();
    if (pool.empty()) {
      for (const auto& lv : accepted_by_level) pool.insert(pool.end(), lv.begin(), lv.end());
    }
    LevelOptions lo;
    lo.level = level;
    lo.k = config.k;
    lo.weights = config.weights;
    lo.topics = &topics;
    lo.templates = &templates;
    Rng level_rng(mix_seed(config.seed, static_cast<std::uint64_t>(level)));
    LevelResult gen = run_level(pool, lo, llm, level_rng);

    ojson entry;
    entry["level"] = level;
    entry["attempted"] = config.k;
    entry["generated"] = gen.records.size();
    ojson failures = ojson::array();
    for (const auto& f : gen.failures) {
      failures.push_back({{"slot", f.slot}, {"op", f.op}, {"reason", f.reason}});
    }
    ojson accepted_ids = ojson::array();
    ojson rejected = ojson::array();
    std::vector<MilpClassRecord> accepted;
    std::set<std::string> known;
    for (const auto& lv : accepted_by_level) {
      for (const auto& r : lv) known.insert(r.code);
    }
    for (MilpClassRecord rec : gen.records) {
      if (!known.insert(rec.code).second) {
        rejected.push_back({{"id", rec.id}, {"op", rec.op}, {"reasons", {{"duplicate", 1}}}});
        say(log, "evolve: level " + std::to_string(level) + " duplicate " + rec.id);
        continue;
      }
      Rng frng(mix_seed(mix_seed(config.seed, static_cast<std::uint64_t>(level)), fnv1a64(rec.id)));
      const FilterResult fr = search_and_filter(rec, config.filter_budget, fopt, frng, runner.get());
      if (fr.accepted.empty()) {
        ojson reasons = ojson::object();
        for (const auto& t : fr.trials) {
          for (const auto& r : t.verdict.reasons) {
            const std::string key = r.rfind("generation", 0) == 0 ? "generation" : r;
            reasons[key] = reasons.value(key, 0) + 1;
          }
        }
        rejected.push_back({{"id", rec.id}, {"op", rec.op}, {"reasons", reasons}});
        say(log, "evolve: level " + std::to_string(level) + " rejected " + rec.id + " (" + rec.op + ")");
        continue;
      }
      rec.accepted_params = fr.accepted;
      rec.params = fr.accepted.front();
      for (const auto& t : fr.trials) {
        if (t.verdict.ok) {
          rec.solve_seconds = t.stats.solve_time;
          break;
        }
      }
      put_file(root, "classes/evolved/" + rec.id + ".json", record_to_json(rec), files);
      accepted_ids.push_back(rec.id);
      say(log, "evolve: level " + std::to_string(level) + " accepted " + rec.id + " (" + rec.op +
                   ", " + std::to_string(fr.accepted.size()) + " parameter sets)");
      accepted.push_back(std::move(rec));
    }
    entry["accepted"] = accepted_ids;
    entry["rejected"] = rejected;
    entry["failures"] = failures;
    levels.push_back(entry);
    accepted_by_level.push_back(std::move(accepted));
  }

  std::size_t total = 0;
  for (std::size_t i = 1; i < accepted_by_level.size(); ++i) total += accepted_by_level[i].size();
  ojson m;
  m["stage"] = "evolve";
  m["seed"] = config.seed;
  m["profile"] = config.profile;
  m["llm"] = config.llm;
  m["k"] = config.k;
  m["filter_budget"] = config.filter_budget;
  m["filter_stop_after"] = config.filter_stop_after;
  m["criteria"] = ojson::parse(criteria_to_json(fopt.criteria));
  m["levels"] = levels;
  m["files"] = files;
  ojson summary;
  summary["levels"] = levels.size();
  summary["accepted"] = total;
  return finish("evolve", manifest_path, m, summary);
}

// ---------------------------------------------------------------------------
// collect

StageReport run_collect(const PipelineConfig& config, Task task, const Logger& log) {
  config.validate();
  const fs::path root = workspace_dir(config);
  const auto seeds = seed_classes(root);
  const auto evolved = evolved_classes(root);
  std::vector<MilpClassRecord> all = seeds;
  all.insert(all.end(), evolved.begin(), evolved.end());
  auto runner = make_runner(config);
  std::vector<std::string> lines;
  ojson summary;
  ojson excluded = ojson::array();
  const std::string name(to_string(task));

  if (task == Task::kGap) {
    std::vector<MilpClassRecord> classes = evolved;
    if (config.gap_include_seeds) classes.insert(classes.begin(), seeds.begin(), seeds.end());
    std::set<std::string> used;
    for (const auto& rec : classes) {
      for (int i = 0; i < config.gap_instances; ++i) {
        const std::uint64_t s = 1000 + static_cast<std::uint64_t>(i);
        const std::string id = rec.id + "#" + std::to_string(s);
        try {
          const MilpInstance inst = instantiate(rec, rec.params, s, runner.get());
          const MilpResult r = solve_milp(inst, solve_options(config));
          if (r.status != MilpStatus::kOptimal || !r.objective) {
            excluded.push_back({{"id", id}, {"status", std::string(to_string(r.status))}});
            say(log, "collect gap: excluded " + id + " (" + std::string(to_string(r.status)) + ")");
            continue;
          }
          const LpSolution lp = solve_lp(inst);
          GapExample e;
          e.id = id;
          e.class_id = rec.id;
          e.graph = extract_gap_features(inst, lp);
          e.label = integrality_gap(r.root_lp_objective, *r.objective, 1.0);
          lines.push_back(gap_example_to_json(e));
          used.insert(rec.id);
        } catch (const Error& err) {
          excluded.push_back({{"id", id}, {"status", std::string("error: ") + err.what()}});
        }
      }
      say(log, "collect gap: " + rec.id + " done");
    }
    summary["classes"] = used.size();
  } else if (task == Task::kBranch) {
    for (const auto& cid : config.branch_classes) {
      const MilpClassRecord& rec = find_class(all, cid);
      for (int i = 0; i < config.branch_instances; ++i) {
        const std::uint64_t s = 1000 + static_cast<std::uint64_t>(i);
        const std::string id = rec.id + "#" + std::to_string(s);
        const MilpInstance inst = instantiate(rec, rec.params, s, runner.get());
        CollectOptions co;
        co.expert_prob = config.expert_prob;
        co.max_samples = config.max_samples;
        co.limits = solve_options(config).limits;
        co.seed = mix_seed(config.seed, fnv1a64(id));
        const CollectResult cr = collect_branching_data(inst, id, co);
        if (cr.excluded) excluded.push_back({{"id", id}, {"status", "excluded"}});
        for (const auto& sample : cr.samples) lines.push_back(sample_to_json(sample));
        say(log, "collect branch: " + id + " -> " + std::to_string(cr.samples.size()) + " samples");
      }
    }
    summary["classes"] = config.branch_classes.size();
  } else {
    std::vector<MilpClassRecord> classes = seeds;
    if (config.align_include_evolved) classes.insert(classes.end(), evolved.begin(), evolved.end());
    auto llm = make_llm(config);
    for (const auto& rec : classes) {
      for (int i = 0; i < config.align_instances; ++i) {
        const std::uint64_t s = 2000 + static_cast<std::uint64_t>(i);
        AlignExample e;
        e.id = rec.id + "#" + std::to_string(s);
        e.class_id = rec.id;
        const MilpInstance inst = instantiate(rec, rec.params, s, runner.get());
        const LpSolution lp = solve_lp(inst);
        if (lp.status != LpStatus::kOptimal) {
          excluded.push_back({{"id", e.id}, {"status", "root LP not optimal"}});
          continue;
        }
        e.graph = extract_gap_features(inst, lp);
        const Description d = describe_instance(&rec, inst, llm.get());
        e.text = d.text;
        e.text_embedding = text_embed(e.text, config.align_train.embed_dim);
        lines.push_back(align_example_to_json(e));
      }
      say(log, "collect align: " + rec.id + " done");
    }
    summary["classes"] = classes.size();
  }

  if (lines.empty()) throw Error("data", "collect produced no records");
  ojson files = ojson::object();
  put_file(root, "datasets/" + name + ".jsonl", join_lines(lines), files);
  ojson m;
  m["stage"] = "collect";
  m["task"] = name;
  m["seed"] = config.seed;
  m["time_limit"] = config.time_limit;
  m["max_nodes"] = config.max_nodes;
  m["records"] = lines.size();
  m["excluded"] = excluded;
  m["files"] = files;
  summary["records"] = lines.size();
  summary["excluded"] = excluded.size();
  return finish("collect", root / "datasets" / (name + ".manifest.json"), m, summary);
}

// ---------------------------------------------------------------------------
// train / eval

namespace {

struct Loaded {
  std::vector<GapExample> gap;
  std::vector<BranchSample> branch;
  std::vector<AlignExample> align;
};

Loaded load_dataset(const fs::path& root, Task task) {
  Loaded d;
  for (const auto& line : read_lines(root / "datasets" / (std::string(to_string(task)) + ".jsonl"))) {
    switch (task) {
      case Task::kGap: d.gap.push_back(gap_example_from_json(line)); break;
      case Task::kBranch: d.branch.push_back(sample_from_json(line)); break;
      case Task::kAlign: d.align.push_back(align_example_from_json(line)); break;
    }
  }
  if (d.gap.empty() && d.branch.empty() && d.align.empty()) {
    throw Error("data", "dataset " + std::string(to_string(task)) + " is empty");
  }
  return d;
}

template <typename T, typename Key>
std::array<std::vector<T>, 3> partition(const std::vector<T>& items, Key key, std::uint64_t seed) {
  std::vector<std::string> groups;
  for (const auto& it : items) groups.push_back(key(it));
  const Split s = split_groups(groups, seed);
  const std::set<std::string> tr(s.train.begin(), s.train.end());
  const std::set<std::string> va(s.valid.begin(), s.valid.end());
  std::array<std::vector<T>, 3> out;
  for (const auto& it : items) {
    const std::string g = key(it);
    out[tr.count(g) ? 0 : va.count(g) ? 1 : 2].push_back(it);
  }
  return out;
}

const TrainConfig& train_config(const PipelineConfig& c, Task t) {
  return t == Task::kGap ? c.gap_train : t == Task::kBranch ? c.branch_train : c.align_train;
}

}  // namespace

StageReport run_train(const PipelineConfig& config, Task task, const Logger& log) {
  config.validate();
  const fs::path root = workspace_dir(config);
  const Loaded data = load_dataset(root, task);
  TrainConfig tc = train_config(config, task);
  tc.seed = mix_seed(config.seed, static_cast<std::uint64_t>(task) + 1);
  TrainResult result;
  std::size_t n_train = 0, n_valid = 0;
  switch (task) {
    case Task::kGap: {
      auto parts = partition(data.gap, [](const GapExample& e) { return e.id; }, config.seed);
      n_train = parts[0].size();
      n_valid = parts[1].size();
      result = train_gap(parts[0], parts[1], tc);
      break;
    }
    case Task::kBranch: {
      auto parts =
          partition(data.branch, [](const BranchSample& s) { return s.instance_id; }, config.seed);
      n_train = parts[0].size();
      n_valid = parts[1].size();
      result = train_branch(parts[0], parts[1], tc);
      break;
    }
    case Task::kAlign: {
      auto parts = partition(data.align, [](const AlignExample& e) { return e.id; }, config.seed);
      n_train = parts[0].size();
      n_valid = parts[1].size();
      result = train_align(parts[0], parts[1], tc);
      break;
    }
  }
  const std::string name(to_string(task));
  ojson history = ojson::array();
  for (const auto& h : result.history) {
    history.push_back({{"step", h.step},
                       {"train_loss", h.train_loss},
                       {"val_loss", std::isnan(h.val_loss) ? ojson() : ojson(h.val_loss)}});
    say(log, "train " + name + ": step " + std::to_string(h.step) + " train " +
                 format_double(h.train_loss) + " val " + format_double(h.val_loss));
  }
  ojson files = ojson::object();
  put_file(root, "models/" + name + ".bin", params_to_bytes(result.params), files);
  put_file(root, "models/" + name + ".history.json", history.dump(2) + "\n", files);
  ojson m;
  m["stage"] = "train";
  m["task"] = name;
  m["config"] = train_json(tc);
  m["train_records"] = n_train;
  m["valid_records"] = n_valid;
  m["best_step"] = result.best_step;
  m["files"] = files;
  ojson summary;
  summary["train_records"] = n_train;
  summary["best_step"] = result.best_step;
  return finish("train", root / "models" / (name + ".manifest.json"), m, summary);
}

StageReport run_eval(const PipelineConfig& config, Task task, const Logger& log) {
  config.validate();
  const fs::path root = workspace_dir(config);
  const std::string name(to_string(task));
  const Loaded data = load_dataset(root, task);
  const fs::path model_path = root / "models" / (name + ".bin");
  if (!fs::exists(model_path)) throw Error("config", "missing model; run train first");
  const GnnParams params = load_params(model_path.string());
  ojson report;
  report["task"] = name;
  ojson timing = ojson::object();
  switch (task) {
    case Task::kGap: {
      auto parts = partition(data.gap, [](const GapExample& e) { return e.id; }, config.seed);
      const auto& test = parts[2];
      if (test.empty()) throw Error("data", "empty evaluation set");
      std::vector<double> preds, labels;
      for (const auto& e : test) {
        preds.push_back(forward_gap(e.graph, params, {eval_seed(e.id), false}));
        labels.push_back(e.label);
      }
      report["test_records"] = test.size();
      report["deviation"] = deviation(preds, labels);
      try {
        report["pearson"] = pearson(preds, labels);
      } catch (const Error&) {
        report["pearson"] = nullptr;
      }
      std::vector<double> clipped;
      for (double p : preds) clipped.push_back(std::clamp(p, 0.0, 1.0));
      try {
        const auto hs = histogram_similarity(clipped, labels);
        report["histogram"] = {{"correlation", hs.correlation},
                               {"intersection", hs.intersection},
                               {"chi_square", hs.chi_square},
                               {"bhattacharyya", hs.bhattacharyya}};
      } catch (const Error&) {
        report["histogram"] = nullptr;
      }
      break;
    }
    case Task::kBranch: {
      auto parts =
          partition(data.branch, [](const BranchSample& s) { return s.instance_id; }, config.seed);
      const auto& test = parts[2];
      if (test.empty()) throw Error("data", "empty evaluation set");
      double hits = 0.0, baseline = 0.0;
      for (const auto& s : test) {
        const Vec logits = forward_branch(s.graph, s.candidates, params);
        Eigen::Index best = 0;
        logits.maxCoeff(&best);
        hits += s.candidates[static_cast<std::size_t>(best)] == s.expert_action ? 1.0 : 0.0;
        baseline += 1.0 / static_cast<double>(s.candidates.size());
      }
      const double n = static_cast<double>(test.size());
      report["test_records"] = test.size();
      report["top1_accuracy"] = hits / n;
      report["random_baseline"] = baseline / n;
      // Solver comparison against the default rule on fresh instances.
      const auto classes = load_classes(config.workspace);
      std::vector<MilpStatus> st_default, st_learned;
      std::vector<double> det_default, det_learned, wall_default, wall_learned, overhead;
      auto runner = make_runner(config);
      for (const auto& cid : config.branch_classes) {
        const MilpClassRecord& rec = find_class(classes, cid);
        for (int i = 0; i < config.eval_instances; ++i) {
          const MilpInstance inst =
              instantiate(rec, rec.params, 3000 + static_cast<std::uint64_t>(i), runner.get());
          SolveOptions base = solve_options(config);
          SolveOptions learned = base;
          learned.rule = BranchRule::kLearned;
          learned.policy = make_learned_policy(params);
          const MilpResult a = solve_milp(inst, base);
          const MilpResult b = solve_milp(inst, learned);
          st_default.push_back(a.status);
          st_learned.push_back(b.status);
          if (a.status == MilpStatus::kOptimal && b.status == MilpStatus::kOptimal) {
            det_default.push_back(std::max(a.deterministic_seconds, 1e-9));
            det_learned.push_back(std::max(b.deterministic_seconds, 1e-9));
            wall_default.push_back(std::max(a.solve_seconds, 1e-9));
            wall_learned.push_back(std::max(b.solve_seconds, 1e-9));
            overhead.push_back(b.policy_seconds);
          }
        }
        say(log, "eval branch: " + cid + " solved");
      }
      report["solved_default"] = solved_fraction(st_default);
      report["solved_learned"] = solved_fraction(st_learned);
      report["compared_instances"] = det_default.size();
      if (!det_default.empty()) {
        report["time_improvement_deterministic"] = time_improvement(det_default, det_learned);
        timing["time_improvement"] = time_improvement(wall_default, wall_learned);
        timing["time_improvement_excluding_overhead"] =
            time_improvement_excluding(wall_default, wall_learned, overhead);
      }
      break;
    }
    case Task::kAlign: {
      auto parts = partition(data.align, [](const AlignExample& e) { return e.id; }, config.seed);
      const auto& test = parts[2];
      if (test.empty()) throw Error("data", "empty evaluation set");
      std::vector<Vec> milp, text;
      std::vector<std::string> cls;
      for (const auto& e : test) {
        milp.push_back(forward_embed(e.graph, params, {eval_seed(e.id), false}));
        text.push_back(align_text_vector(params, e));
        cls.push_back(e.class_id);
      }
      const std::set<std::string> distinct(cls.begin(), cls.end());
      report["test_records"] = test.size();
      report["classes"] = distinct.size();
      for (int k : {4, 10}) {
        const std::string key = std::to_string(k) + "way_accuracy";
        if (static_cast<int>(distinct.size()) < k) {
          report[key] = nullptr;
          continue;
        }
        Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(k)));
        report[key] = kway_accuracy(milp, text, cls, k, 2000, rng);
      }
      break;
    }
  }
  ojson files = ojson::object();
  put_file(root, "reports/" + name + ".json", report.dump(2) + "\n", files);
  // Wall-clock figures vary between runs and stay out of the manifest.
  if (!timing.empty()) write_file((root / "reports" / (name + ".timing.json")).string(), timing.dump(2) + "\n");
  ojson m;
  m["stage"] = "eval";
  m["task"] = name;
  m["files"] = files;
  return finish("eval", root / "reports" / (name + ".manifest.json"), m, report);
}

}  // namespace milpevo
