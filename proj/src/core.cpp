#include "milpevo/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "milpevo/util.hpp"

namespace milpevo {

int MilpInstance::add_var(VarKind k, double lo, double hi, double cost, std::string var_name) {
  objective.push_back(cost);
  kind.push_back(k);
  lower.push_back(lo);
  upper.push_back(hi);
  if (!var_name.empty() || !var_names.empty()) {
    for (std::size_t j = var_names.size(); j + 1 < objective.size(); ++j) {
      var_names.push_back("x" + std::to_string(j));
    }
    var_names.push_back(var_name.empty() ? "x" + std::to_string(objective.size() - 1)
                                         : std::move(var_name));
  }
  return n_vars() - 1;
}

int MilpInstance::add_row(std::vector<Coef> coefs, Relation rel, double rhs, std::string row_name) {
  rows.push_back(Row{std::move(coefs), rel, rhs});
  if (!row_name.empty() || !row_names.empty()) {
    for (std::size_t i = row_names.size(); i + 1 < rows.size(); ++i) {
      row_names.push_back("c" + std::to_string(i));
    }
    row_names.push_back(row_name.empty() ? "c" + std::to_string(rows.size() - 1)
                                         : std::move(row_name));
  }
  return n_cons() - 1;
}

std::string MilpInstance::var_name(int j) const {
  if (static_cast<std::size_t>(j) < var_names.size() && !var_names[j].empty()) return var_names[j];
  return "x" + std::to_string(j);
}

std::string MilpInstance::row_name(int i) const {
  if (static_cast<std::size_t>(i) < row_names.size() && !row_names[i].empty()) return row_names[i];
  return "c" + std::to_string(i);
}

std::size_t MilpInstance::nnz() const {
  std::size_t total = 0;
  for (const auto& r : rows) total += r.coefs.size();
  return total;
}

bool ValidationReport::has(std::string_view code) const {
  return std::any_of(issues.begin(), issues.end(),
                     [&](const ValidationIssue& i) { return i.code == code; });
}

std::string_view to_string(VarKind kind) {
  switch (kind) {
    case VarKind::kBinary: return "binary";
    case VarKind::kInteger: return "integer";
    case VarKind::kImpliedInteger: return "implied-integer";
    case VarKind::kContinuous: return "continuous";
  }
  return "?";
}

std::string_view to_string(Sense sense) {
  return sense == Sense::kMinimize ? "minimize" : "maximize";
}

ValidationReport validate(const MilpInstance& inst) {
  ValidationReport rep;
  auto add = [&](Severity s, std::string code, std::string msg) {
    if (s == Severity::kError) rep.ok = false;
    rep.issues.push_back({s, std::move(code), std::move(msg)});
  };
  const int n = inst.n_vars();
  if (inst.kind.size() != static_cast<std::size_t>(n) ||
      inst.lower.size() != static_cast<std::size_t>(n) ||
      inst.upper.size() != static_cast<std::size_t>(n)) {
    add(Severity::kError, "size-mismatch", "kind/bound vectors do not match n_vars");
    return rep;
  }
  if (n == 0) add(Severity::kWarning, "empty-model", "instance has no variables");
  bool all_zero = true;
  for (int j = 0; j < n; ++j) {
    if (!std::isfinite(inst.objective[j])) {
      add(Severity::kError, "non-finite", "objective coefficient of " + inst.var_name(j));
    }
    if (inst.objective[j] != 0.0) all_zero = false;
    const double lo = inst.lower[j], hi = inst.upper[j];
    if (std::isnan(lo) || std::isnan(hi) || lo == kInf || hi == -kInf) {
      add(Severity::kError, "bad-bound", "invalid bound on " + inst.var_name(j));
      continue;
    }
    if (lo > hi) {
      add(Severity::kError, "empty-domain", "lower > upper on " + inst.var_name(j));
    } else if (lo == hi) {
      add(Severity::kWarning, "fixed-var", inst.var_name(j) + " is fixed");
    }
    if (inst.kind[j] == VarKind::kBinary && (lo < 0.0 || hi > 1.0)) {
      add(Severity::kError, "binary-bounds", "binary " + inst.var_name(j) + " outside [0,1]");
    }
  }
  if (n > 0 && all_zero) add(Severity::kWarning, "zero-objective", "objective is all zero");
  if (!std::isfinite(inst.objective_offset)) {
    add(Severity::kError, "non-finite", "objective offset");
  }
  for (int i = 0; i < inst.n_cons(); ++i) {
    const Row& row = inst.rows[i];
    if (!std::isfinite(row.rhs)) add(Severity::kError, "non-finite", "rhs of " + inst.row_name(i));
    if (row.coefs.empty()) add(Severity::kWarning, "empty-row", inst.row_name(i) + " is empty");
    std::unordered_set<int> seen;
    for (const Coef& c : row.coefs) {
      if (c.index < 0 || c.index >= n) {
        add(Severity::kError, "bad-index",
            "row " + inst.row_name(i) + " references variable " + std::to_string(c.index));
        continue;
      }
      if (!seen.insert(c.index).second) {
        add(Severity::kError, "duplicate-index",
            "row " + inst.row_name(i) + " repeats variable " + std::to_string(c.index));
      }
      if (!std::isfinite(c.value)) {
        add(Severity::kError, "non-finite", "coefficient in " + inst.row_name(i));
      }
    }
  }
  return rep;
}

MilpInstance lp_relaxation(const MilpInstance& instance) {
  MilpInstance out = instance;
  std::fill(out.kind.begin(), out.kind.end(), VarKind::kContinuous);
  return out;
}

namespace {

bool valid_mps_name(const std::string& name) {
  if (name.empty()) return false;
  return std::none_of(name.begin(), name.end(),
                      [](char ch) { return std::isspace(static_cast<unsigned char>(ch)); });
}

std::vector<std::string> effective_names(const std::vector<std::string>& names, std::size_t count,
                                         char prefix) {
  bool usable = names.size() == count;
  if (usable) {
    std::unordered_set<std::string> seen;
    for (const auto& nm : names) {
      if (!valid_mps_name(nm) || !seen.insert(nm).second) {
        usable = false;
        break;
      }
    }
  }
  if (usable) return names;
  std::vector<std::string> out(count);
  for (std::size_t k = 0; k < count; ++k) out[k] = prefix + std::to_string(k);
  return out;
}

class MpsParser {
 public:
  explicit MpsParser(std::string_view text) : text_(text) {}

  MilpInstance run();

 private:
  enum class Section { kNone, kName, kObjSense, kRows, kColumns, kRhs, kRanges, kBounds, kEnd };

  [[noreturn]] void fail(const std::string& what) const {
    throw Error("parse", "MPS line " + std::to_string(line_no_) + ": " + what);
  }

  double number(const std::string& token) const {
    double value = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (!token.empty() && token[0] == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
      // from_chars rejects forms like "1.e5" on some libraries; fall back.
      char* end = nullptr;
      value = std::strtod(token.c_str(), &end);
      if (end != token.c_str() + token.size()) fail("bad number '" + token + "'");
    }
    if (std::isnan(value)) fail("NaN value");
    return value;
  }

  int row_index(const std::string& name) const {
    auto it = row_lookup_.find(name);
    return it == row_lookup_.end() ? -2 : it->second;
  }

  void header(const std::vector<std::string>& tok);
  void rows_line(const std::vector<std::string>& tok);
  void columns_line(const std::vector<std::string>& tok);
  void rhs_line(const std::vector<std::string>& tok);
  void ranges_line(const std::vector<std::string>& tok);
  void bounds_line(const std::vector<std::string>& tok);
  void finish();

  std::string_view text_;
  std::size_t line_no_ = 0;
  Section section_ = Section::kNone;
  bool seen_rows_ = false, seen_columns_ = false;
  MilpInstance inst_;
  std::string objective_row_;
  std::unordered_set<std::string> free_rows_;
  // -1 marks the objective row.
  std::unordered_map<std::string, int> row_lookup_;
  std::unordered_map<std::string, int> col_lookup_;
  std::set<std::pair<int, int>> entries_;
  std::vector<double> ranges_;
  std::vector<bool> has_range_;
  std::vector<bool> in_marker_;
  std::vector<bool> bounded_lower_;
  std::vector<bool> bv_;
  bool integer_block_ = false;
};

void MpsParser::header(const std::vector<std::string>& tok) {
  const std::string& kw = tok[0];
  if (kw == "NAME") {
    section_ = Section::kName;
    if (tok.size() > 1) inst_.name = tok[1];
  } else if (kw == "OBJSENSE") {
    section_ = Section::kObjSense;
    if (tok.size() > 1) {
      const std::string v = tok[1];
      if (v == "MAX" || v == "MAXIMIZE") inst_.sense = Sense::kMaximize;
      else if (v == "MIN" || v == "MINIMIZE") inst_.sense = Sense::kMinimize;
      else fail("bad OBJSENSE '" + v + "'");
    }
  } else if (kw == "ROWS") {
    section_ = Section::kRows;
    seen_rows_ = true;
  } else if (kw == "COLUMNS") {
    if (!seen_rows_) fail("COLUMNS before ROWS");
    section_ = Section::kColumns;
    seen_columns_ = true;
  } else if (kw == "RHS") {
    section_ = Section::kRhs;
  } else if (kw == "RANGES") {
    section_ = Section::kRanges;
  } else if (kw == "BOUNDS") {
    section_ = Section::kBounds;
  } else if (kw == "ENDATA") {
    section_ = Section::kEnd;
  } else {
    fail("unknown section header '" + kw + "'");
  }
}

void MpsParser::rows_line(const std::vector<std::string>& tok) {
  if (tok.size() != 2) fail("ROWS entry needs type and name");
  const std::string& type = tok[0];
  const std::string& name = tok[1];
  if (row_lookup_.count(name) || free_rows_.count(name)) fail("duplicate row '" + name + "'");
  if (type == "N") {
    if (objective_row_.empty()) {
      objective_row_ = name;
      row_lookup_[name] = -1;
    } else {
      free_rows_.insert(name);
    }
    return;
  }
  Relation rel;
  if (type == "L") rel = Relation::kLessEqual;
  else if (type == "G") rel = Relation::kGreaterEqual;
  else if (type == "E") rel = Relation::kEqual;
  else fail("bad row type '" + type + "'");
  row_lookup_[name] = inst_.n_cons();
  inst_.rows.push_back(Row{{}, rel, 0.0});
  inst_.row_names.push_back(name);
  ranges_.push_back(0.0);
  has_range_.push_back(false);
}

void MpsParser::columns_line(const std::vector<std::string>& tok) {
  if (tok.size() >= 3 && tok[1] == "'MARKER'") {
    if (tok[2] == "'INTORG'") integer_block_ = true;
    else if (tok[2] == "'INTEND'") integer_block_ = false;
    else fail("bad MARKER '" + tok[2] + "'");
    return;
  }
  if (tok.size() != 3 && tok.size() != 5) fail("COLUMNS entry needs 3 or 5 fields");
  const std::string& col = tok[0];
  int j;
  auto it = col_lookup_.find(col);
  if (it == col_lookup_.end()) {
    j = inst_.n_vars();
    col_lookup_[col] = j;
    inst_.objective.push_back(0.0);
    inst_.kind.push_back(integer_block_ ? VarKind::kInteger : VarKind::kContinuous);
    inst_.lower.push_back(0.0);
    inst_.upper.push_back(kInf);
    inst_.var_names.push_back(col);
    in_marker_.push_back(integer_block_);
    bounded_lower_.push_back(false);
    bv_.push_back(false);
  } else {
    j = it->second;
  }
  for (std::size_t k = 1; k + 1 < tok.size(); k += 2) {
    const std::string& row = tok[k];
    const double value = number(tok[k + 1]);
    if (!std::isfinite(value)) fail("non-finite coefficient");
    if (free_rows_.count(row)) continue;
    const int i = row_index(row);
    if (i == -2) fail("unknown row '" + row + "'");
    if (!entries_.insert({i, j}).second) {
      fail("duplicate entry for column '" + col + "' in row '" + row + "'");
    }
    if (i == -1) {
      inst_.objective[j] = value;
    } else {
      inst_.rows[i].coefs.push_back({j, value});
    }
  }
}

void MpsParser::rhs_line(const std::vector<std::string>& tok) {
  // Optional leading set name: odd field counts carry one.
  const std::size_t start = (tok.size() % 2 == 1) ? 1 : 0;
  if (tok.size() < 2 || tok.size() > 5) fail("RHS entry needs 2 to 5 fields");
  for (std::size_t k = start; k + 1 < tok.size(); k += 2) {
    const std::string& row = tok[k];
    const double value = number(tok[k + 1]);
    if (!std::isfinite(value)) fail("non-finite rhs");
    if (free_rows_.count(row)) continue;
    const int i = row_index(row);
    if (i == -2) fail("RHS for unknown row '" + row + "'");
    if (i == -1) {
      inst_.objective_offset = -value;
    } else {
      inst_.rows[i].rhs = value;
    }
  }
}

void MpsParser::ranges_line(const std::vector<std::string>& tok) {
  const std::size_t start = (tok.size() % 2 == 1) ? 1 : 0;
  if (tok.size() < 2 || tok.size() > 5) fail("RANGES entry needs 2 to 5 fields");
  for (std::size_t k = start; k + 1 < tok.size(); k += 2) {
    const int i = row_index(tok[k]);
    if (i < 0) fail("RANGES for unknown row '" + tok[k] + "'");
    const double value = number(tok[k + 1]);
    if (!std::isfinite(value)) fail("non-finite range");
    ranges_[i] = value;
    has_range_[i] = true;
  }
}

void MpsParser::bounds_line(const std::vector<std::string>& tok) {
  if (tok.size() < 2) fail("BOUNDS entry too short");
  const std::string& type = tok[0];
  const bool valued = type == "UP" || type == "LO" || type == "FX" || type == "LI" ||
                      type == "UI";
  const bool unvalued = type == "FR" || type == "MI" || type == "PL";
  const bool binary = type == "BV";
  if (!valued && !unvalued && !binary) fail("bad bound type '" + type + "'");
  std::string col;
  std::string value_token;
  if (valued) {
    if (tok.size() == 4) {
      col = tok[2];
      value_token = tok[3];
    } else if (tok.size() == 3) {
      col = tok[1];
      value_token = tok[2];
    } else {
      fail("bound '" + type + "' needs a value");
    }
  } else if (unvalued) {
    if (tok.size() == 3) col = tok[2];
    else if (tok.size() == 2) col = tok[1];
    else fail("bound '" + type + "' takes no value");
  } else {
    if (tok.size() == 4) col = tok[2];
    else if (tok.size() == 3) col = col_lookup_.count(tok[2]) ? tok[2] : tok[1];
    else col = tok[1];
  }
  auto it = col_lookup_.find(col);
  if (it == col_lookup_.end()) fail("bound for unknown column '" + col + "'");
  const int j = it->second;
  double value = valued ? number(value_token) : 0.0;
  if (value >= 1e30) value = kInf;
  if (value <= -1e30) value = -kInf;
  if (type == "UP" || type == "UI") {
    inst_.upper[j] = value;
    if (value < 0.0 && inst_.lower[j] == 0.0 && !bounded_lower_[j]) inst_.lower[j] = -kInf;
  } else if (type == "LO" || type == "LI") {
    inst_.lower[j] = value;
    bounded_lower_[j] = true;
  } else if (type == "FX") {
    inst_.lower[j] = inst_.upper[j] = value;
    bounded_lower_[j] = true;
  } else if (type == "FR") {
    inst_.lower[j] = -kInf;
    inst_.upper[j] = kInf;
  } else if (type == "MI") {
    inst_.lower[j] = -kInf;
  } else if (type == "PL") {
    inst_.upper[j] = kInf;
  } else {
    inst_.lower[j] = 0.0;
    inst_.upper[j] = 1.0;
    bv_[j] = true;
  }
  if (type == "LI" || type == "UI") in_marker_[j] = true;
}

void MpsParser::finish() {
  if (!seen_rows_) fail("missing ROWS section");
  if (!seen_columns_) fail("missing COLUMNS section");
  for (int j = 0; j < inst_.n_vars(); ++j) {
    if (bv_[j]) {
      inst_.kind[j] = VarKind::kBinary;
    } else if (in_marker_[j]) {
      inst_.kind[j] = (inst_.lower[j] >= 0.0 && inst_.upper[j] <= 1.0) ? VarKind::kBinary
                                                                         : VarKind::kInteger;
    }
  }
  // Ranged rows become a pair of one-sided rows; the second copy is appended.
  const int m = inst_.n_cons();
  for (int i = 0; i < m; ++i) {
    if (!has_range_[i]) continue;
    Row& row = inst_.rows[i];
    const double r = ranges_[i];
    double lo, hi;
    switch (row.relation) {
      case Relation::kEqual:
        lo = r >= 0 ? row.rhs : row.rhs + r;
        hi = r >= 0 ? row.rhs + r : row.rhs;
        break;
      case Relation::kLessEqual:
        lo = row.rhs - std::abs(r);
        hi = row.rhs;
        break;
      case Relation::kGreaterEqual:
      default:
        lo = row.rhs;
        hi = row.rhs + std::abs(r);
        break;
    }
    if (lo == hi) {
      row.relation = Relation::kEqual;
      row.rhs = lo;
      continue;
    }
    row.relation = Relation::kGreaterEqual;
    row.rhs = lo;
    Row upper_row{row.coefs, Relation::kLessEqual, hi};
    inst_.rows.push_back(std::move(upper_row));
    inst_.row_names.push_back(inst_.row_names[i] + "_rng");
  }
  for (auto& row : inst_.rows) {
    std::sort(row.coefs.begin(), row.coefs.end(),
              [](const Coef& a, const Coef& b) { return a.index < b.index; });
  }
}

MilpInstance MpsParser::run() {
  std::size_t pos = 0;
  while (pos <= text_.size() && section_ != Section::kEnd) {
    std::size_t eol = text_.find('\n', pos);
    if (eol == std::string_view::npos) eol = text_.size();
    std::string_view line = text_.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line[0] == '*') continue;
    const auto tok = split_whitespace(line);
    if (tok.empty()) continue;
    if (!std::isspace(static_cast<unsigned char>(line[0]))) {
      header(tok);
      continue;
    }
    switch (section_) {
      case Section::kNone: fail("data line before any section header");
      case Section::kName: fail("unexpected data after NAME");
      case Section::kObjSense:
        if (tok[0] == "MAX" || tok[0] == "MAXIMIZE") inst_.sense = Sense::kMaximize;
        else if (tok[0] == "MIN" || tok[0] == "MINIMIZE") inst_.sense = Sense::kMinimize;
        else fail("bad OBJSENSE '" + tok[0] + "'");
        break;
      case Section::kRows: rows_line(tok); break;
      case Section::kColumns: columns_line(tok); break;
      case Section::kRhs: rhs_line(tok); break;
      case Section::kRanges: ranges_line(tok); break;
      case Section::kBounds: bounds_line(tok); break;
      case Section::kEnd: break;
    }
    if (pos > text_.size()) break;
  }
  finish();
  return std::move(inst_);
}

void append_number(std::string& out, double value) {
  out += format_double(value);
}

}  // namespace

MilpInstance parse_mps(std::string_view text) { return MpsParser(text).run(); }

std::string write_mps(const MilpInstance& inst) {
  const int n = inst.n_vars();
  const int m = inst.n_cons();
  if (n == 0) throw Error("empty model", "empty model: instance has no variables");
  const auto report = validate(inst);
  if (!report.ok) {
    for (const auto& issue : report.issues) {
      if (issue.severity == Severity::kError) {
        throw Error(issue.code == "non-finite" ? "non-finite" : "invalid",
                    "cannot write MPS: " + issue.message);
      }
    }
  }
  const auto vnames = effective_names(inst.var_names, n, 'x');
  const auto rnames = effective_names(inst.row_names, m, 'c');
  std::string obj_name = "obj";
  while (std::find(rnames.begin(), rnames.end(), obj_name) != rnames.end()) obj_name += "_";

  // Column-wise view of the row data.
  std::vector<std::vector<std::pair<int, double>>> cols(n);
  for (int i = 0; i < m; ++i) {
    for (const Coef& c : inst.rows[i].coefs) cols[c.index].push_back({i, c.value});
  }
  for (auto& col : cols) std::sort(col.begin(), col.end());

  std::string out;
  out.reserve(64 * (n + m) + 32 * inst.nnz());
  out += "NAME";
  if (valid_mps_name(inst.name)) {
    out += "          ";
    out += inst.name;
  }
  out += "\n";
  if (inst.sense == Sense::kMaximize) out += "OBJSENSE\n    MAX\n";
  out += "ROWS\n N  " + obj_name + "\n";
  for (int i = 0; i < m; ++i) {
    const char* type = inst.rows[i].relation == Relation::kLessEqual      ? " L  "
                       : inst.rows[i].relation == Relation::kGreaterEqual ? " G  "
                                                                          : " E  ";
    out += type;
    out += rnames[i];
    out += "\n";
  }
  out += "COLUMNS\n";
  bool in_int = false;
  int marker = 0;
  for (int j = 0; j < n; ++j) {
    const bool integral = inst.kind[j] != VarKind::kContinuous;
    if (integral != in_int) {
      out += "    MARKER" + std::to_string(marker++) + "  'MARKER'  ";
      out += integral ? "'INTORG'\n" : "'INTEND'\n";
      in_int = integral;
    }
    bool wrote = false;
    if (inst.objective[j] != 0.0 || cols[j].empty()) {
      out += "    " + vnames[j] + "  " + obj_name + "  ";
      append_number(out, inst.objective[j]);
      out += "\n";
      wrote = true;
    }
    for (const auto& [i, value] : cols[j]) {
      out += "    " + vnames[j] + "  " + rnames[i] + "  ";
      append_number(out, value);
      out += "\n";
      wrote = true;
    }
    (void)wrote;
  }
  if (in_int) out += "    MARKER" + std::to_string(marker++) + "  'MARKER'  'INTEND'\n";
  out += "RHS\n";
  for (int i = 0; i < m; ++i) {
    if (inst.rows[i].rhs == 0.0) continue;
    out += "    RHS  " + rnames[i] + "  ";
    append_number(out, inst.rows[i].rhs);
    out += "\n";
  }
  if (inst.objective_offset != 0.0) {
    out += "    RHS  " + obj_name + "  ";
    append_number(out, -inst.objective_offset);
    out += "\n";
  }
  std::string bounds;
  for (int j = 0; j < n; ++j) {
    const double lo = inst.lower[j], hi = inst.upper[j];
    const std::string& nm = vnames[j];
    auto line = [&](const char* type, const double* value) {
      bounds += " ";
      bounds += type;
      bounds += " BND  " + nm;
      if (value) {
        bounds += "  ";
        append_number(bounds, *value);
      }
      bounds += "\n";
    };
    if (lo == hi) {
      line("FX", &lo);
      continue;
    }
    if (lo == -kInf && hi == kInf) {
      line("FR", nullptr);
      continue;
    }
    if (lo == -kInf) {
      line("MI", nullptr);
    } else if (lo != 0.0) {
      line("LO", &lo);
    }
    if (hi != kInf) line("UP", &hi);
  }
  if (!bounds.empty()) out += "BOUNDS\n" + bounds;
  out += "ENDATA\n";
  return out;
}

MilpInstance canonical_form(const MilpInstance& instance) {
  MilpInstance out = instance;
  out.metadata.clear();
  if (!valid_mps_name(out.name)) out.name.clear();
  out.var_names = effective_names(instance.var_names, instance.n_vars(), 'x');
  out.row_names = effective_names(instance.row_names, instance.n_cons(), 'c');
  for (int j = 0; j < out.n_vars(); ++j) {
    if (out.kind[j] == VarKind::kContinuous) continue;
    if (out.kind[j] == VarKind::kImpliedInteger) out.kind[j] = VarKind::kInteger;
    if (out.lower[j] >= 0.0 && out.upper[j] <= 1.0) out.kind[j] = VarKind::kBinary;
    else if (out.kind[j] == VarKind::kBinary) out.kind[j] = VarKind::kInteger;
  }
  for (auto& row : out.rows) {
    std::stable_sort(row.coefs.begin(), row.coefs.end(),
                     [](const Coef& a, const Coef& b) { return a.index < b.index; });
  }
  return out;
}

}  // namespace milpevo
