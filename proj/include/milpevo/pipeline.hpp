#pragma once

#include <functional>
#include <string>
#include <vector>

#include "milpevo/classes.hpp"
#include "milpevo/evalkit.hpp"
#include "milpevo/evolve.hpp"
#include "milpevo/filter.hpp"
#include "milpevo/learn.hpp"

namespace milpevo {

/// Settings shared by every pipeline stage. Stages read and write a
/// workspace with classes/, instances/, datasets/, models/ and reports/.
struct PipelineConfig {
  std::string workspace = "workspace";
  /// Prompt template directory; empty uses the built-in copies.
  std::string template_dir;
  /// Canned mock responses keyed by prompt hash; optional.
  std::string mock_dir;
  /// Command template for external class code; empty disables it.
  std::string runner_command;
  double runner_timeout = 120.0;
  /// "paper" or "desk".
  std::string profile = "desk";
  /// "mock" or "live".
  std::string llm = "mock";
  std::uint64_t seed = 0;
  /// Deterministic-clock limit for data collection and evaluation solves.
  double time_limit = 20.0;
  /// Node limit for the same solves; 0 means unlimited.
  std::int64_t max_nodes = 0;

  // seed-gen
  int seed_instances = 2;

  // evolve
  int levels = 3;
  int k = 10;
  int filter_budget = 6;
  /// Stop a class's parameter search after this many accepted sets (0: never).
  int filter_stop_after = 1;
  int topic_count = 200;
  OperatorWeights weights;

  // collect
  int gap_instances = 6;
  bool gap_include_seeds = true;
  std::vector<std::string> branch_classes = {"IS", "SAT"};
  int branch_instances = 20;
  double expert_prob = 0.05;
  int max_samples = 50;
  int align_instances = 30;
  bool align_include_evolved = false;

  // train / eval
  TrainConfig gap_train;
  TrainConfig branch_train;
  TrainConfig align_train;
  /// Instances solved per method in branch evaluation.
  int eval_instances = 6;

  FilterCriteria criteria() const { return FilterCriteria::profile(profile); }

  /// Profile defaults ("paper" or "desk").
  static PipelineConfig defaults(std::string_view profile = "desk");
  /// JSON object; absent keys keep the profile defaults. Error("config") on
  /// unknown keys or bad values.
  static PipelineConfig from_json(std::string_view text);
  std::string to_json() const;
  void validate() const;
};

struct StageReport {
  std::string stage;
  std::string manifest_path;
  /// fnv1a64 of the manifest bytes.
  std::string manifest_hash;
  /// Compact JSON summary for printing.
  std::string summary;
};

using Logger = std::function<void(const std::string&)>;

/// Level-0 records plus `seed_instances` MPS files per seed class.
StageReport run_seed_gen(const PipelineConfig& config, const Logger& log = {});

/// Generation and filtering for config.levels levels. With `resume`, levels
/// already in the manifest are kept and evolution continues after them.
StageReport run_evolve(const PipelineConfig& config, LlmClient& llm, bool resume = false,
                       const Logger& log = {});

/// Writes datasets/<task>.jsonl.
StageReport run_collect(const PipelineConfig& config, Task task, const Logger& log = {});

/// Trains on the train part of an instance-level split and writes
/// models/<task>.bin.
StageReport run_train(const PipelineConfig& config, Task task, const Logger& log = {});

/// Evaluates models/<task>.bin on the test part of the split and writes
/// reports/<task>.json.
StageReport run_eval(const PipelineConfig& config, Task task, const Logger& log = {});

/// Seed and accepted evolved classes of a workspace, in manifest order.
std::vector<MilpClassRecord> load_classes(const std::string& workspace);

/// Instance-level split used by train and eval: groups are shuffled with the
/// seed and cut 7:1:2.
Split split_groups(const std::vector<std::string>& group_ids, std::uint64_t seed);

/// One LLM client per config: MockLlm or HttpLlm from the environment.
std::unique_ptr<LlmClient> make_llm(const PipelineConfig& config);

}  // namespace milpevo
