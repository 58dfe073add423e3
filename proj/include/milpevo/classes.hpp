#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "milpevo/core.hpp"
#include "milpevo/seeds.hpp"

namespace milpevo {

struct Recipe;

/// One structural edit applied on top of a generated instance.
///
/// Parameters of chain step i live in the flat class parameter map under
/// "t<i>.<name>"; a crossover partner's own parameters use "t<i>.b.<name>".
struct Transform {
  enum class Kind {
    kKnapsack,   // t<i>.rows, t<i>.density, t<i>.tightness
    kConflicts,  // t<i>.pairs
    kScale,      // t<i>.factor applied to base parameter `target`
    kDrop,       // removes rows whose name starts with `target`
    kCross,      // block-diagonal union with `other`, t<i>.links linking rows
  };
  Kind kind = Kind::kKnapsack;
  std::string target;
  std::shared_ptr<const Recipe> other;
};

std::string_view to_string(Transform::Kind kind);
Transform::Kind parse_transform_kind(std::string_view text);

/// A native class: seed generator followed by a transform chain.
struct Recipe {
  SeedClass base = SeedClass::kIS;
  std::vector<Transform> chain;
};

std::string recipe_to_json(const Recipe& recipe);
Recipe recipe_from_json(std::string_view text);

/// Default parameters a transform adds to the class parameter map.
ParamMap transform_default_params(Transform::Kind kind);

/// Seed parameters plus every transform's parameters, prefixed as above.
ParamMap recipe_default_params(const Recipe& recipe);

/// Row-name prefixes present in instances of the recipe.
std::vector<std::string> recipe_families(const Recipe& recipe);

/// Human-readable summary ("combinatorial auction with knapsack side
/// constraints").
std::string recipe_title(const Recipe& recipe);

/// Deterministic in (recipe, params, seed). Throws Error("bad-params") for
/// missing or out-of-range parameters and Error("bad-recipe") when a
/// transform cannot apply (no binaries, dropping every row, ...).
MilpInstance generate_native(const Recipe& recipe, const ParamMap& params, std::uint64_t seed);

/// The six block markers, in the order given-data, new-data, given-model,
/// new-model, given-params, new-params.
const std::vector<std::string>& code_markers();

/// Python-style class script for a recipe, with the marker comments placed
/// at the end of each block. The first line carries the recipe so a native
/// class can be recovered from its code text.
std::string render_native_code(const Recipe& recipe, const ParamMap& params,
                               const std::string& class_name);

/// Removes every line consisting only of a block marker.
std::string strip_markers(std::string_view code);

/// Recipe header of a code block, when present.
std::optional<Recipe> native_header(std::string_view code);

struct MilpClassRecord {
  std::string id;
  /// Native classes are generated in-process; external ones need a runner.
  bool native = true;
  Recipe recipe;
  /// Code text with block markers, as shown to the model in prompts.
  std::string code;
  ParamMap params;
  int level = 0;
  /// "seed" for level-0 classes, otherwise the operator name.
  std::string op = "seed";
  std::vector<std::string> parents;
  std::string description;
  /// Filled by the filter stage.
  std::vector<ParamMap> accepted_params;
  /// Solve time of the instance at `params` (drives the Delete adjustment).
  double solve_seconds = 0.0;
};

std::string record_to_json(const MilpClassRecord& record);
MilpClassRecord record_from_json(std::string_view text);

/// Level-0 record for a seed class at its default parameters.
MilpClassRecord seed_record(SeedClass c);

/// Executes external class code out of process.
class SandboxRunner {
 public:
  virtual ~SandboxRunner() = default;
  /// Returns MPS text of one instance; throws Error("runner") on failure.
  virtual std::string run(const std::string& code, const ParamMap& params,
                          std::uint64_t seed) = 0;
};

/// Serves canned MPS files named <fnv1a64(code) hex>.mps from a directory;
/// fails for unknown code.
class MockRunner : public SandboxRunner {
 public:
  explicit MockRunner(std::string directory = {}) : dir_(std::move(directory)) {}
  std::string run(const std::string& code, const ParamMap& params, std::uint64_t seed) override;

 private:
  std::string dir_;
};

/// Runs a shell command template in a scratch directory. Placeholders:
/// {script} (code file), {params} (JSON file), {seed}, {out} (MPS path).
/// The command is wrapped in `timeout <seconds>`.
class CommandRunner : public SandboxRunner {
 public:
  CommandRunner(std::string command_template, double timeout_seconds)
      : template_(std::move(command_template)), timeout_(timeout_seconds) {}
  std::string run(const std::string& code, const ParamMap& params, std::uint64_t seed) override;

 private:
  std::string template_;
  double timeout_;
};

/// Native records generate in-process; external records go through the
/// runner (Error("runner") when none is given).
MilpInstance instantiate(const MilpClassRecord& record, const ParamMap& params,
                         std::uint64_t seed, SandboxRunner* runner = nullptr);

}  // namespace milpevo
