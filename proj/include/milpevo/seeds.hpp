#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "milpevo/core.hpp"

namespace milpevo {

/// Native seed problem classes.
enum class SeedClass { kIS, kSC, kCA, kCF, kKS, kGIS, kNF, kSAT };

inline constexpr SeedClass kAllSeedClasses[] = {SeedClass::kIS, SeedClass::kSC, SeedClass::kCA,
                                                SeedClass::kCF, SeedClass::kKS, SeedClass::kGIS,
                                                SeedClass::kNF, SeedClass::kSAT};

/// Short id ("IS", "CA", ...).
std::string_view to_string(SeedClass c);
/// Lowercase descriptive name ("independent set", "combinatorial auction", ...).
std::string_view class_title(SeedClass c);
SeedClass parse_seed_class(std::string_view id);

using ParamValue = std::variant<std::int64_t, double, bool, std::string>;
using ParamMap = std::map<std::string, ParamValue>;

std::string param_to_string(const ParamValue& v);
double param_as_double(const ParamValue& v);

enum class ParamKind { kInt, kFloat, kBool };

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::kInt;
  double min = 0.0;
  double max = 0.0;
  /// Probabilities must lie in (0, 1].
  bool probability = false;
};

struct SeedParams {
  SeedClass class_id = SeedClass::kIS;
  ParamMap params;
  std::uint64_t seed = 42;
};

const std::vector<ParamSpec>& param_schema(SeedClass c);
/// Size parameter whose doubling at least doubles the variable count.
std::string_view primary_param(SeedClass c);

/// Desk-scale defaults; every class solves in a few seconds at these values.
SeedParams default_params(SeedClass c);

/// Throws Error("bad-params") naming the offending entry.
void check_params(const SeedParams& sp);

/// Deterministic in (class_id, params, seed). Rows are named with a
/// per-family prefix ("edge_", "cover_", ...).
MilpInstance generate_instance(const SeedParams& sp);

/// Row-name prefixes of the constraint families of a class.
std::vector<std::string> constraint_families(SeedClass c);

std::string params_to_json(const ParamMap& params);
ParamMap params_from_json(std::string_view text);

}  // namespace milpevo
