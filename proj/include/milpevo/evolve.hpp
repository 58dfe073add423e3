#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "milpevo/classes.hpp"
#include "milpevo/util.hpp"

namespace milpevo {

enum class Operator {
  kFormulationAdd,
  kTopicAdd,
  kConvAdd,
  kCrossOver,
  kMutate,
  kFormulationMutate,
  kMutateRedundancy,
  kTopicNew,
  kNew,
  kDelete,
};

/// Canonical order.
inline constexpr std::array<Operator, 10> kAllOperators = {
    Operator::kFormulationAdd, Operator::kTopicAdd,         Operator::kConvAdd,
    Operator::kCrossOver,      Operator::kMutate,           Operator::kFormulationMutate,
    Operator::kMutateRedundancy, Operator::kTopicNew,       Operator::kNew,
    Operator::kDelete};

/// "Formulation_Add", "Topic_Add", "conv_add", ...
std::string_view to_string(Operator op);
Operator parse_operator(std::string_view name);

bool needs_topic(Operator op);
bool needs_methods(Operator op);
bool needs_letters(Operator op);

struct OperatorWeights {
  std::array<double, 10> w{1.0, 0.5, 0.5, 1.0, 1.0, 0.8, 0.8, 1.0, 0.8, 0.5};

  double& operator[](Operator op) { return w[static_cast<std::size_t>(op)]; }
  double operator[](Operator op) const { return w[static_cast<std::size_t>(op)]; }
  /// Throws Error("config") unless every weight is positive and finite.
  void validate() const;
};

std::string weights_to_json(const OperatorWeights& w);
/// Requires exactly the 10 operator keys.
OperatorWeights weights_from_json(std::string_view text);

/// Solve time above which a parent is considered long-solving.
inline constexpr double kLongSolveSeconds = 150.0;

/// Long-solving parents: Delete becomes 0.8 and the Add family
/// (Formulation_Add, Topic_Add, conv_add) is halved.
OperatorWeights adjusted_weights(const OperatorWeights& weights, double parent_solve_seconds);

/// Operator whose cumulative weight interval contains u * total, u in [0, 1).
Operator operator_at(double u, const OperatorWeights& weights);

Operator select_operator(Rng& rng, const OperatorWeights& weights, double parent_solve_seconds);

/// The 12 formulation methods offered by the formulation operators.
const std::vector<std::string>& formulation_methods();

struct Topic {
  std::string application;
  std::string methodology;
  std::string text() const { return application + " using " + methodology; }
};

/// Uniform sample without replacement from the cross product; ordering is
/// the draw order. Error("config") when count exceeds the product size.
std::vector<Topic> generate_topics(const std::vector<std::string>& applications,
                                   const std::vector<std::string>& methodologies, std::size_t count,
                                   Rng& rng);

/// Prompt templates keyed by operator.
class TemplateSet {
 public:
  /// Built-in copies compiled into the library.
  static TemplateSet builtin();
  /// Reads manifest.json and the files it names.
  static TemplateSet load(const std::string& directory);
  static TemplateSet from_parts(std::array<std::string, 10> text,
                                std::array<std::string, 10> origin);

  const std::string& text(Operator op) const;
  /// "printed" or "reconstructed".
  const std::string& origin(Operator op) const;

 private:
  std::array<std::string, 10> text_;
  std::array<std::string, 10> origin_;
};

/// Built-in topic word lists.
const std::vector<std::string>& builtin_applications();
const std::vector<std::string>& builtin_methodologies();

struct PromptContext {
  const MilpClassRecord* second = nullptr;
  std::optional<Topic> topic;
  /// Filled by build_prompt when the operator needs them and they are empty.
  std::vector<std::string> methods;
  std::string letters;
};

/// Fills the operator's template. Formulation operators get three distinct
/// methods, Mutate/Topic_new five distinct capital letters. Error("config")
/// when a required context entry is missing.
std::string build_prompt(Operator op, const MilpClassRecord& parent, PromptContext& context,
                         Rng& rng, const TemplateSet& templates = TemplateSet::builtin());

struct ExtractedCode {
  /// Final fenced block with markers removed.
  std::string code;
  /// The same block as received.
  std::string marked_code;
  ParamMap params;
};

/// Takes the last fenced block, checks the six markers, strips them and
/// parses the `parameters = {...}` block. Error("no-code") without a fenced
/// block or with a marker missing; Error("bad-params") for values that are
/// not constants.
ExtractedCode extract_class_code(std::string_view response);

/// Parses `'name': constant` entries of the first `parameters = {` block.
ParamMap parse_parameter_block(std::string_view code);

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Throws Error("llm") on failure.
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Offline client. Reads <fnv1a64(prompt) hex>.txt from the canned
/// directory when present; otherwise answers operator prompts with a native
/// transform of the parent class and description prompts with a summary.
/// Deterministic in (prompt, seed).
class MockLlm : public LlmClient {
 public:
  explicit MockLlm(std::uint64_t seed, std::string canned_dir = {},
                   TemplateSet templates = TemplateSet::builtin());
  std::string complete(const std::string& prompt) override;

 private:
  std::uint64_t seed_;
  std::string canned_dir_;
  TemplateSet templates_;
};

struct HttpLlmConfig {
  std::string endpoint;  // full chat-completions URL
  std::string api_key;
  std::string model;
  double timeout_seconds = 120.0;
  int retries = 3;

  /// Reads LLM_ENDPOINT, LLM_API_KEY, LLM_MODEL (and optional
  /// LLM_TIMEOUT, LLM_RETRIES). Error("config") when one is missing.
  static HttpLlmConfig from_env();
};

/// Chat-completions client over HTTP(S).
class HttpLlm : public LlmClient {
 public:
  explicit HttpLlm(HttpLlmConfig config);
  std::string complete(const std::string& prompt) override;

 private:
  HttpLlmConfig config_;
};

struct LevelOptions {
  int level = 1;
  int k = 4;
  OperatorWeights weights;
  const std::vector<Topic>* topics = nullptr;
  const TemplateSet* templates = nullptr;
};

struct LevelFailure {
  int slot = 0;
  std::string op;
  std::string reason;
};

struct LevelResult {
  std::vector<MilpClassRecord> records;
  std::vector<LevelFailure> failures;
};

/// Attempts K generations, each from a uniformly drawn parent and an
/// operator drawn with adjusted weights. Slot s uses its own generator
/// seeded from one draw of `rng` and s, so results do not depend on
/// completion order. Failed slots are reported, not thrown.
LevelResult run_level(const std::vector<MilpClassRecord>& pool, const LevelOptions& options,
                      LlmClient& llm, Rng& rng);

struct Description {
  std::string text;
  /// The client failed and the template text was used instead.
  bool fallback = false;
};

/// Template description of an instance, optionally refined by a client.
Description describe_instance(const MilpClassRecord* record, const MilpInstance& instance,
                              LlmClient* llm = nullptr);

/// Description built only from the sections of an MPS file.
std::string describe_mps(std::string_view mps_text);

/// First line of every description prompt.
inline constexpr std::string_view kDescribePromptHeader =
    "Write a short natural-language description of the MILP instance summarized below.";

}  // namespace milpevo
