#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "homog2s/cell.hpp"
#include "homog2s/config.hpp"
#include "homog2s/error.hpp"
#include "homog2s/macro.hpp"
#include "homog2s/pipeline.hpp"
#include "homog2s/report.hpp"

using namespace homog2s;
using report::Json;

namespace {

const std::string root = HOMOG2S_SOURCE_DIR;

std::string config_path(const std::string& name) { return root + "/configs/" + name + ".toml"; }

ErrorKind kind_of(const std::string& toml) {
  try {
    parse_config(toml);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("config was accepted: " << toml);
  return ErrorKind::Io;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("homog2s_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("rational parsing") {
  CHECK(parse_rational("1/8") == 0.125);
  CHECK(parse_rational(" 3 / 4 ") == 0.75);
  CHECK(parse_rational("0.3") == 0.3);
  CHECK(parse_rational("-2") == -2.0);
  CHECK_THROWS_AS(parse_rational("1/0"), Error);
  CHECK_THROWS_AS(parse_rational("abc"), Error);
  CHECK_THROWS_AS(parse_rational("1/2/3"), Error);
  CHECK_THROWS_AS(parse_rational(""), Error);
}

TEST_CASE("config defaults and parsing") {
  const RunConfig c = parse_config("name = \"t\"\n[problem]\neps = [\"1/4\", 0.125]\n");
  CHECK(c.name == "t");
  CHECK(c.l == 0);
  REQUIRE(c.epsilons.size() == 2);
  CHECK(c.epsilons[0] == 0.25);
  CHECK(c.epsilons[1] == 0.125);
  CHECK(c.mesh.macro == 64);
  CHECK(c.cell.has_hole());
  CHECK(c.cell.reference_porosity() == doctest::Approx(15.0 / 16.0).epsilon(1e-15));
  CHECK(c.identity_transform());
  CHECK(c.tol.equivalence_fine == 6e-3);

  const RunConfig s = parse_config(R"(
[porosity]
kind = "sinusoidal"
mean = 0.9
amplitude = 0.04
k1 = 1
k2 = 1
[coefficient]
kind = "layered"
a0 = 2
a1 = 0.5
b = 3
trig = "sin"
direction = 1
[source]
kind = "cosine"
amplitude = 2
[problem]
l = 2
)");
  CHECK(s.l == 2);
  CHECK_FALSE(s.identity_transform());
  CHECK(s.porosity({0.125, 0.125}) == doctest::Approx(0.94).epsilon(1e-14));
  CHECK(s.coefficient({0, 0}, {0.0, 0.25}).a == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(s.coefficient({0, 0}, {0.0, 0.25}).d == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(s.source({0, 0}) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("no hole forces unit porosity") {
  const RunConfig c = parse_config("[geometry]\nhole = false\n[porosity]\nkind = \"constant\"\nvalue = 0.9\n");
  CHECK_FALSE(c.cell.has_hole());
  CHECK(c.porosity({0.3, 0.3}) == 1.0);
  CHECK(c.identity_transform());
}

TEST_CASE("malformed configs are rejected at load") {
  CHECK(kind_of("[problem]\neps = [\"1/3\"]\n[mesh]\nmacro = 64\n") == ErrorKind::Tiling);
  CHECK(kind_of("[problem]\neps = [0.3]\n") == ErrorKind::Tiling);
  CHECK(kind_of("[mesh]\nequivalence_eps = \"1/5\"\n") == ErrorKind::Tiling);
  CHECK(kind_of("[problem]\nl = 1\n") == ErrorKind::Config);
  CHECK(kind_of("[problem]\neps = [\"1/8\", \"1/4\"]\n") == ErrorKind::Config);
  CHECK(kind_of("[problem]\nepsilon = 0.25\n") == ErrorKind::Config);
  CHECK(kind_of("[extra]\n") == ErrorKind::Config);
  CHECK(kind_of("[porosity]\nkind = \"gaussian\"\n") == ErrorKind::Config);
  CHECK(kind_of("[porosity]\nkind = \"constant\"\nvalue = 0.8\n") == ErrorKind::ParameterOutOfRange);
  CHECK(kind_of("[porosity]\nkind = \"sinusoidal\"\nmean = 0.9\namplitude = 0.1\n") ==
        ErrorKind::ParameterOutOfRange);
  CHECK(kind_of("[mesh]\ncell = 12\ncell_refined = 24\n") == ErrorKind::MisalignedGrid);
  CHECK(kind_of("[mesh]\ncell = 32\ncell_refined = 32\n") == ErrorKind::Config);
  CHECK(kind_of("[coefficient]\nkind = \"isotropic\"\na0 = 1\na1 = 1.5\n") == ErrorKind::ParameterOutOfRange);
  CHECK(kind_of("name = \n") == ErrorKind::Config);
  CHECK(kind_of("[coefficient]\nkind = \"isotropic\"\ntrig = \"tan\"\n") == ErrorKind::Config);
  CHECK_THROWS_AS(load_config(root + "/configs/does-not-exist.toml"), Error);
}

TEST_CASE("config hash") {
  const RunConfig a = parse_config("[problem]\nl = 0\n");
  const RunConfig b = parse_config("# comment\n[problem]\nl = 0\n[output]\ndir = \"elsewhere\"\n");
  const RunConfig c = parse_config("[problem]\nl = 2\n");
  const RunConfig d = parse_config("[tolerances]\ntensor_gap = 0.01\n");
  CHECK(config_hash(a).size() == 16);
  CHECK(config_hash(a).find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a) != config_hash(d));
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : canonical_json(a)) h = (h ^ ch) * 1099511628211ull;
  char expect[17];
  std::snprintf(expect, sizeof expect, "%016llx", static_cast<unsigned long long>(h));
  CHECK(config_hash(a) == expect);
  CHECK(Json::parse(canonical_json(a))["l"] == 0);
}

TEST_CASE("bundled configs load") {
  for (const char* name : {"identity", "sinus-porosity-l0", "sinus-porosity-l2", "deformed-constant", "quick"}) {
    CAPTURE(name);
    const RunConfig c = load_config(config_path(name));
    CHECK(c.name == name);
  }
  const RunConfig id = load_config(config_path("identity"));
  CHECK(id.identity_transform());
  const RunConfig s = load_config(config_path("sinus-porosity-l0"));
  CHECK_FALSE(s.identity_transform());
  CHECK(std::filesystem::path(s.golden).filename() == "sinus-porosity-l0.json");
  CHECK(std::filesystem::exists(s.golden));
  CHECK(load_config(config_path("sinus-porosity-l2")).l == 2);
}

TEST_CASE("csv formatting") {
  CHECK(report::csv_field("plain") == "plain");
  CHECK(report::csv_field("a,b") == "\"a,b\"");
  CHECK(report::csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(report::csv_field("two\nlines") == "\"two\nlines\"");
  for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -1e-300}) CHECK(std::stod(report::csv_number(v)) == v);
  CHECK(report::csv_number(std::nan("")).empty());

  report::CsvWriter w({"a", "b"});
  w.row(std::vector<std::string>{"x,y", "1"});
  CHECK(w.str() == "a,b\r\n\"x,y\",1\r\n");
  CHECK_THROWS_AS(w.row(std::vector<double>{1.0}), Error);
}

TEST_CASE("convergence plot data") {
  CHECK(report::convergence_csv(Json::object()) == "epsilon,error,order\r\n");

  macro::ConvergenceTable t;
  t.l = 2;
  for (double e : {0.25, 0.125, 0.0625, 0.03125}) t.rows.push_back({e, 0.3 * e * e, 0.0, 0.0, 0.0, 0});
  macro::finalize_table(t);
  Json sweep;
  sweep["l"] = 2;
  sweep["rows"] = Json::array();
  for (const auto& r : t.rows) {
    sweep["rows"].push_back(
        {{"epsilon", r.epsilon}, {"error", r.error}, {"order", std::isfinite(r.order) ? Json(r.order) : Json()}});
  }
  const std::string csv = report::convergence_csv(sweep);
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 5);
  int orders = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string order = lines[i].substr(lines[i].rfind(',') + 1);
    if (order != "\r") {
      ++orders;
      CHECK(std::stod(order) == doctest::Approx(std::log2(4.0)).epsilon(1e-12));
    }
  }
  CHECK(orders == 3);
  CHECK(lines[1].back() == '\r');

  const auto dir = scratch("plot");
  report::VerificationReport empty("empty", "0000000000000000");
  const auto paths = report::emit_plot_data(empty, dir.string());
  REQUIRE(paths.size() == 2);
  CHECK(slurp(paths[0]) == "epsilon,error,order\r\n");
  CHECK(report::read_json(paths[1])["rows"].empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("verification report") {
  report::VerificationReport r("cfg", "0123456789abcdef");
  CHECK(r.check("s", "small", 1e-3, 2e-2));
  CHECK_FALSE(r.check("s", "large", 3e-2, 2e-2));
  CHECK(r.check("s", "order", 0.9, 0.8, report::Comparison::AtLeast));
  CHECK_FALSE(r.check("s", "nan", std::nan(""), 1.0));
  CHECK(r.check_true("s", "flag", true));
  r.mark_stage("s");
  r.data("section")["value"] = 1.5;
  CHECK(r.failures() == 2);
  CHECK_FALSE(r.all_passed());
  REQUIRE(r.find("order") != nullptr);
  CHECK(r.find("order")->passed);

  const Json j = r.to_json();
  CHECK(j["config_hash"] == "0123456789abcdef");
  CHECK(j["environment"]["stages"][0] == "s");
  CHECK(j["checks"][3]["value"].is_null());
  CHECK(j.dump().find("time") == std::string::npos);
  const report::VerificationReport back = report::VerificationReport::from_json(j);
  CHECK(back.to_json().dump() == j.dump());
}

TEST_CASE("semantic comparison") {
  const Json golden = Json::parse(R"({"a": 1.0, "b": {"c": [1.0, 2.0]}, "flag": true, "s": "x"})");
  Json same = golden;
  same["a"] = 1.0 + 1e-9;
  same["extra"] = 5;
  CHECK(report::compare_semantic(golden, same, 1e-6, 1e-12).empty());

  Json off = golden;
  off["b"]["c"][1] = 2.1;
  auto m = report::compare_semantic(golden, off, 1e-6, 1e-12);
  REQUIRE(m.size() == 1);
  CHECK(m[0].key == "b.c[1]");
  CHECK(m[0].actual == 2.1);

  Json missing = golden;
  missing.erase("a");
  missing["flag"] = false;
  m = report::compare_semantic(golden, missing, 1e-6, 1e-12);
  CHECK(m.size() == 2);

  Json shorter = golden;
  shorter["b"]["c"].erase(1);
  CHECK(report::compare_semantic(golden, shorter, 1e-6, 1e-12).size() == 1);
}

TEST_CASE("stage failures are tagged") {
  const RunConfig c = parse_config("");
  pipeline::Context ctx(c, {});
  try {
    pipeline::run_stage(ctx, "macro", [] { throw Error(ErrorKind::NoConvergence, "stalled"); });
    FAIL("no exception");
  } catch (const pipeline::StageFailure& e) {
    CHECK(e.stage() == "macro");
    CHECK(e.kind() == ErrorKind::NoConvergence);
    CHECK(std::string(e.what()).find("macro") != std::string::npos);
  }
  CHECK(ctx.rep.stages().empty());
  pipeline::run_stage(ctx, "geometry", [] {});
  CHECK(ctx.rep.stages() == std::vector<std::string>{"geometry"});
}

TEST_CASE("golden files match their configs") {
  for (const char* name : {"sinus-porosity-l0", "sinus-porosity-l2"}) {
    CAPTURE(name);
    const RunConfig c = load_config(config_path(name));
    const Json g = report::read_json(c.golden);
    CHECK(g["config_hash"] == config_hash(c));
    CHECK(g["passed"] == true);
    CHECK(g["oracle"]["tensors"].size() == pipeline::sample_thetas(c).size());
    for (const auto& t : g["oracle"]["tensors"]) {
      const double order = t["order"].get<double>();
      CHECK(order > 1.0);
      CHECK(order < 2.1);
    }
  }
}

TEST_CASE("reference tensor against the extrapolated golden value") {
  const RunConfig c = load_config(config_path("sinus-porosity-l0"));
  const Json ref = report::read_json(c.golden)["oracle"]["reference"];
  const Mat2 golden{ref["B"][0].get<double>(), ref["B"][1].get<double>(), ref["B"][2].get<double>(),
                    ref["B"][3].get<double>()};
  // Symmetry of the square cell: B* is a multiple of the identity.
  CHECK(std::abs(golden.a - golden.d) <= 1e-10);
  CHECK(std::abs(golden.b) <= 1e-12);
  CHECK(golden.a > 0.8);
  CHECK(golden.a < 15.0 / 16.0);  // below the Voigt bound |Y*|

  cell::CellProblem p;
  p.resolution = 64;
  const cell::EffectiveTensor t = cell::effective_tensor_transformed(p, {{0.5, 0.5}, 15.0 / 16.0});
  CHECK(cell::relative_gap(t.B, golden) <= 1e-3);
  CHECK(t.B.a > golden.a);  // conforming Q1 overestimates the energy
}

TEST_CASE("identity config passes every check") {
  const RunConfig c = load_config(config_path("identity"));
  const report::VerificationReport r = pipeline::run_pipeline(c);
  for (const auto& ch : r.checks()) {
    CAPTURE(ch.name);
    CHECK(ch.passed);
    if (ch.comparison == report::Comparison::AtMost && ch.stage != "substitute") CHECK(ch.value <= 1e-10);
  }
  CHECK(r.stages().size() == 8);
}

TEST_CASE("pipeline determinism on the quick config") {
  const RunConfig c = load_config(config_path("quick"));
  const auto dir = scratch("quick");
  pipeline::Options serial;
  serial.jobs = 1;
  serial.output_dir = dir.string();
  pipeline::Options threaded = serial;
  threaded.jobs = 4;
  const auto first = pipeline::run_pipeline_context(c, serial);
  const auto second = pipeline::run_pipeline_context(c, threaded);
  CHECK(first->rep.to_json().dump() == second->rep.to_json().dump());
  CHECK(first->files == second->files);
  CHECK(first->rep.all_passed());

  const auto paths = pipeline::write_outputs(*first);
  const Json written = report::read_json((dir / "report.json").string());
  CHECK(written["config_hash"] == config_hash(c));
  CHECK(written.dump() == first->rep.to_json().dump());
  const std::string csv = slurp((dir / "convergence.csv").string());
  CHECK(csv.rfind("epsilon,error,order\r\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(c.epsilons.size()));
  for (const auto& p : paths) CHECK(std::filesystem::exists(p));
  std::filesystem::remove_all(dir);
}
