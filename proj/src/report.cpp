#include "homog2s/report.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "homog2s/error.hpp"

#ifndef HOMOG2S_BUILD_TYPE
#define HOMOG2S_BUILD_TYPE "unknown"
#endif

namespace homog2s::report {

std::string to_string(Comparison c) {
  switch (c) {
    case Comparison::AtMost: return "<=";
    case Comparison::AtLeast: return ">=";
    case Comparison::IsTrue: return "true";
  }
  return "?";
}

namespace {

Comparison comparison_from(const std::string& s) {
  if (s == "<=") return Comparison::AtMost;
  if (s == ">=") return Comparison::AtLeast;
  if (s == "true") return Comparison::IsTrue;
  throw Error(ErrorKind::Config, "unknown comparison '" + s + "'");
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double number_from(const Json& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

}  // namespace

void save_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << text;
}

VerificationReport::VerificationReport(std::string config_name, std::string config_hash)
    : config_name_(std::move(config_name)), config_hash_(std::move(config_hash)) {}

bool VerificationReport::check(const std::string& stage, const std::string& name, double value, double tolerance,
                               Comparison cmp) {
  bool ok = false;
  if (std::isfinite(value)) ok = cmp == Comparison::AtLeast ? value >= tolerance : value <= tolerance;
  checks_.push_back({stage, name, value, tolerance, cmp, ok});
  return ok;
}

bool VerificationReport::check_true(const std::string& stage, const std::string& name, bool ok) {
  checks_.push_back({stage, name, ok ? 1.0 : 0.0, 1.0, Comparison::IsTrue, ok});
  return ok;
}

void VerificationReport::mark_stage(const std::string& stage) { stages_.push_back(stage); }

bool VerificationReport::all_passed() const { return failures() == 0; }

std::size_t VerificationReport::failures() const {
  std::size_t n = 0;
  for (const auto& c : checks_) n += c.passed ? 0 : 1;
  return n;
}

const Check* VerificationReport::find(const std::string& name) const {
  for (const auto& c : checks_)
    if (c.name == name) return &c;
  return nullptr;
}

Json VerificationReport::to_json() const {
  Json j;
  j["config"] = config_name_;
  j["config_hash"] = config_hash_;
  j["environment"] = environment_stamp(stages_);
  j["passed"] = all_passed();
  j["failures"] = failures();
  Json checks = Json::array();
  for (const auto& c : checks_) {
    Json e;
    e["stage"] = c.stage;
    e["name"] = c.name;
    e["value"] = number_or_null(c.value);
    e["tolerance"] = c.tolerance;
    e["comparison"] = to_string(c.comparison);
    e["passed"] = c.passed;
    checks.push_back(std::move(e));
  }
  j["checks"] = std::move(checks);
  j["data"] = data_;
  return j;
}

VerificationReport VerificationReport::from_json(const Json& j) {
  VerificationReport r(j.value("config", std::string()), j.value("config_hash", std::string()));
  if (j.contains("environment") && j["environment"].contains("stages")) {
    for (const auto& s : j["environment"]["stages"]) r.stages_.push_back(s.get<std::string>());
  }
  if (j.contains("checks")) {
    for (const auto& e : j["checks"]) {
      Check c;
      c.stage = e.value("stage", std::string());
      c.name = e.value("name", std::string());
      c.value = number_from(e["value"]);
      c.tolerance = number_from(e["tolerance"]);
      c.comparison = comparison_from(e.value("comparison", std::string("<=")));
      c.passed = e.value("passed", false);
      r.checks_.push_back(std::move(c));
    }
  }
  if (j.contains("data")) r.data_ = j["data"];
  return r;
}

Json environment_stamp(const std::vector<std::string>& stages) {
  Json e;
  e["program"] = "homog2s";
  e["version"] = "1.0.0";
#if defined(__clang__)
  e["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  e["compiler"] = std::string("gcc ") + __VERSION__;
#else
  e["compiler"] = "unknown";
#endif
  e["cxx_standard"] = static_cast<long>(__cplusplus);
  e["build_type"] = HOMOG2S_BUILD_TYPE;
  e["stages"] = stages;
  return e;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error(ErrorKind::Io, "number formatting failed");
  return std::string(buf, ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != columns_) throw Error(ErrorKind::Io, "CSV row has the wrong number of fields");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) text_ += ',';
    text_ += csv_field(fields[i]);
  }
  text_ += "\r\n";
}

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> fields;
  fields.reserve(values.size());
  for (double v : values) fields.push_back(csv_number(v));
  row(fields);
}

void CsvWriter::save(const std::string& path) const { save_text(path, text_); }

std::string convergence_csv(const Json& sweep) {
  CsvWriter csv({"epsilon", "error", "order"});
  if (sweep.is_object() && sweep.contains("rows")) {
    for (const auto& r : sweep["rows"]) {
      csv.row(std::vector<double>{number_from(r["epsilon"]), number_from(r["error"]), number_from(r["order"])});
    }
  }
  return csv.str();
}

std::vector<std::string> emit_plot_data(const VerificationReport& report, const std::string& dir) {
  const Json empty = Json::object();
  const Json& sweep = report.data().contains("sweep") ? report.data()["sweep"] : empty;
  const std::string csv_path = (std::filesystem::path(dir) / "convergence.csv").string();
  const std::string json_path = (std::filesystem::path(dir) / "convergence.json").string();
  save_text(csv_path, convergence_csv(sweep));
  Json plot;
  plot["config"] = report.config_name();
  plot["config_hash"] = report.config_hash();
  plot["l"] = sweep.contains("l") ? sweep["l"] : Json(nullptr);
  plot["rows"] = sweep.contains("rows") ? sweep["rows"] : Json::array();
  write_json(plot, json_path);
  return {csv_path, json_path};
}

void write_json(const Json& j, const std::string& path) { save_text(path, j.dump(2) + "\n"); }

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::Io, path + ": " + e.what());
  }
}

namespace {

void compare_into(const Json& e, const Json& a, const std::string& path, double rel, double abs_tol,
                  std::vector<GoldenMismatch>& out) {
  const double nan = std::nan("");
  if (e.is_object()) {
    for (auto it = e.begin(); it != e.end(); ++it) {
      const std::string sub = path.empty() ? it.key() : path + "." + it.key();
      if (!a.is_object() || !a.contains(it.key())) {
        out.push_back({sub, nan, nan});
        continue;
      }
      compare_into(it.value(), a[it.key()], sub, rel, abs_tol, out);
    }
  } else if (e.is_array()) {
    if (!a.is_array() || a.size() != e.size()) {
      out.push_back({path + ".size", static_cast<double>(e.size()), a.is_array() ? double(a.size()) : nan});
      return;
    }
    for (std::size_t i = 0; i < e.size(); ++i) {
      compare_into(e[i], a[i], path + "[" + std::to_string(i) + "]", rel, abs_tol, out);
    }
  } else if (e.is_number()) {
    const double ev = e.get<double>();
    const double av = number_from(a);
    if (!(std::abs(av - ev) <= abs_tol + rel * std::abs(ev))) out.push_back({path, ev, av});
  } else if (e.is_null()) {
    if (!a.is_null()) out.push_back({path, nan, number_from(a)});
  } else if (e != a) {
    out.push_back({path, e.is_boolean() ? double(e.get<bool>()) : nan,
                   a.is_boolean() ? double(a.get<bool>()) : nan});
  }
}

}  // namespace

std::vector<GoldenMismatch> compare_semantic(const Json& expected, const Json& actual, double rel_tol,
                                             double abs_tol) {
  std::vector<GoldenMismatch> out;
  compare_into(expected, actual, "", rel_tol, abs_tol, out);
  return out;
}

}  // namespace homog2s::report
