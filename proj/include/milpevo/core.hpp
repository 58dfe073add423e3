#pragma once

#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace milpevo {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { kMinimize, kMaximize };
enum class VarKind { kBinary, kInteger, kImpliedInteger, kContinuous };
enum class Relation { kLessEqual, kGreaterEqual, kEqual };

inline bool is_integral_kind(VarKind kind) {
  return kind == VarKind::kBinary || kind == VarKind::kInteger;
}

struct Coef {
  int index = 0;
  double value = 0.0;
  friend bool operator==(const Coef&, const Coef&) = default;
};

struct Row {
  std::vector<Coef> coefs;
  Relation relation = Relation::kLessEqual;
  double rhs = 0.0;
  friend bool operator==(const Row&, const Row&) = default;
};

/// A mixed-integer linear program: optimize c'x subject to rows and bounds.
///
/// Identity is index based. Variable and row names are kept for I/O only;
/// empty name vectors mean "use canonical names".
struct MilpInstance {
  std::string name;
  Sense sense = Sense::kMinimize;
  std::vector<double> objective;
  double objective_offset = 0.0;
  std::vector<Row> rows;
  std::vector<VarKind> kind;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::string> var_names;
  std::vector<std::string> row_names;
  std::map<std::string, std::string> metadata;

  int n_vars() const { return static_cast<int>(objective.size()); }
  int n_cons() const { return static_cast<int>(rows.size()); }

  /// Appends a variable and returns its index.
  int add_var(VarKind k, double lo, double hi, double cost, std::string var_name = {});
  /// Appends a row and returns its index.
  int add_row(std::vector<Coef> coefs, Relation rel, double rhs, std::string row_name = {});

  std::string var_name(int j) const;
  std::string row_name(int i) const;
  std::size_t nnz() const;

  friend bool operator==(const MilpInstance&, const MilpInstance&) = default;
};

enum class Severity { kWarning, kError };

struct ValidationIssue {
  Severity severity;
  std::string code;
  std::string message;
};

struct ValidationReport {
  bool ok = true;
  std::vector<ValidationIssue> issues;

  bool has(std::string_view code) const;
};

/// Checks structural invariants. Never throws; problems are reported.
ValidationReport validate(const MilpInstance& instance);

/// Parses free-format MPS (fixed-column files whose names contain no spaces
/// read the same way). Throws Error("parse", ...) with the line number.
MilpInstance parse_mps(std::string_view text);

/// Writes free-format MPS with 17 significant digits.
std::string write_mps(const MilpInstance& instance);

/// Same instance with every variable continuous; bounds untouched.
MilpInstance lp_relaxation(const MilpInstance& instance);

/// Normal form used when comparing instances across an MPS round trip:
/// implied-integer becomes integer, integers boxed in [0,1] become binary,
/// empty names are filled with canonical ones, metadata is dropped.
MilpInstance canonical_form(const MilpInstance& instance);

std::string_view to_string(VarKind kind);
std::string_view to_string(Sense sense);

}  // namespace milpevo
