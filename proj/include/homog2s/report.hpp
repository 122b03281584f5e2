#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace homog2s::report {

using Json = nlohmann::ordered_json;

enum class Comparison { AtMost, AtLeast, IsTrue };

std::string to_string(Comparison c);

struct Check {
  std::string stage;
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  Comparison comparison = Comparison::AtMost;
  bool passed = false;
};

/// Checks plus free-form data sections. Contains no timestamps or host data, so
/// two runs of one config on one build serialize to identical JSON.
class VerificationReport {
 public:
  VerificationReport() = default;
  VerificationReport(std::string config_name, std::string config_hash);

  const std::string& config_name() const { return config_name_; }
  const std::string& config_hash() const { return config_hash_; }
  const std::vector<Check>& checks() const { return checks_; }

  /// Records value <= tolerance (AtMost) or value >= tolerance (AtLeast). NaN fails.
  bool check(const std::string& stage, const std::string& name, double value, double tolerance,
             Comparison cmp = Comparison::AtMost);
  bool check_true(const std::string& stage, const std::string& name, bool ok);

  void mark_stage(const std::string& stage);
  const std::vector<std::string>& stages() const { return stages_; }

  Json& data(const std::string& section) { return data_[section]; }
  const Json& data() const { return data_; }

  bool all_passed() const;
  std::size_t failures() const;
  const Check* find(const std::string& name) const;

  Json to_json() const;
  static VerificationReport from_json(const Json& j);

 private:
  std::string config_name_;
  std::string config_hash_;
  std::vector<std::string> stages_;
  std::vector<Check> checks_;
  Json data_ = Json::object();
};

/// Build and toolchain stamp plus the completed stages.
Json environment_stamp(const std::vector<std::string>& stages);

/// RFC-4180 field quoting.
std::string csv_field(const std::string& s);
/// Shortest round-trip decimal representation; empty for NaN.
std::string csv_number(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& fields);
  void row(const std::vector<double>& values);
  std::string str() const { return text_; }
  void save(const std::string& path) const;

 private:
  std::size_t columns_;
  std::string text_;
};

/// Convergence rows {epsilon, error, order} as CSV. The first order entry is empty.
std::string convergence_csv(const Json& sweep);

/// Writes convergence.csv and convergence.json for the report's sweep section
/// (header-only CSV when no sweep ran). Returns the written paths.
std::vector<std::string> emit_plot_data(const VerificationReport& report, const std::string& dir);

/// Writes text verbatim, creating parent directories.
void save_text(const std::string& path, const std::string& text);
void write_json(const Json& j, const std::string& path);
Json read_json(const std::string& path);

struct GoldenMismatch {
  std::string key;
  double expected = 0.0;
  double actual = 0.0;
};

/// Compares every numeric leaf of `expected` against the same path in `actual`
/// with |a - e| <= abs_tol + rel_tol |e|. Booleans and strings must match exactly.
/// Missing paths are reported with NaN as the actual value.
std::vector<GoldenMismatch> compare_semantic(const Json& expected, const Json& actual, double rel_tol,
                                             double abs_tol);

}  // namespace homog2s::report
