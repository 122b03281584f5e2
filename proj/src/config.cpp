#include "homog2s/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "homog2s/error.hpp"
#include "json.hpp"
#include "toml.hpp"

namespace homog2s {

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::Config, msg); }

void check_keys(const toml::table& t, const std::string& section, const std::set<std::string>& allowed) {
  for (const auto& [key, node] : t) {
    if (!allowed.count(std::string(key.str()))) {
      config_error("unknown key '" + std::string(key.str()) + "' in [" + section + "]");
    }
  }
}

const toml::table* section(const toml::table& root, const std::string& name) {
  const toml::node* n = root.get(name);
  if (!n) return nullptr;
  if (!n->is_table()) config_error("[" + name + "] must be a table");
  return n->as_table();
}

double number(const toml::table* t, const std::string& key, double fallback, const std::string& where) {
  if (!t) return fallback;
  const toml::node* n = t->get(key);
  if (!n) return fallback;
  if (auto v = n->value<double>()) return *v;
  if (auto s = n->value<std::string>()) {
    try {
      return parse_rational(*s);
    } catch (const Error&) {
      config_error(where + "." + key + ": cannot parse '" + *s + "' as a number");
    }
  }
  config_error(where + "." + key + " must be a number or a rational string");
}

int integer(const toml::table* t, const std::string& key, int fallback, const std::string& where) {
  const double v = number(t, key, fallback, where);
  if (std::abs(v - std::round(v)) > 1e-12) config_error(where + "." + key + " must be an integer");
  return static_cast<int>(std::lround(v));
}

std::string text(const toml::table* t, const std::string& key, const std::string& fallback, const std::string& where) {
  if (!t) return fallback;
  const toml::node* n = t->get(key);
  if (!n) return fallback;
  if (auto s = n->value<std::string>()) return *s;
  config_error(where + "." + key + " must be a string");
}

bool flag(const toml::table* t, const std::string& key, bool fallback, const std::string& where) {
  if (!t) return fallback;
  const toml::node* n = t->get(key);
  if (!n) return fallback;
  if (auto b = n->value<bool>()) return *b;
  config_error(where + "." + key + " must be a boolean");
}

std::vector<double> number_list(const toml::table* t, const std::string& key, std::vector<double> fallback,
                                const std::string& where) {
  if (!t) return fallback;
  const toml::node* n = t->get(key);
  if (!n) return fallback;
  const toml::array* arr = n->as_array();
  if (!arr) config_error(where + "." + key + " must be an array");
  std::vector<double> out;
  for (const toml::node& item : *arr) {
    if (auto v = item.value<double>()) {
      out.push_back(*v);
    } else if (auto s = item.value<std::string>()) {
      out.push_back(parse_rational(*s));
    } else {
      config_error(where + "." + key + " entries must be numbers or rational strings");
    }
  }
  return out;
}

CoefficientField::Trig parse_trig(const std::string& s) {
  if (s == "sin") return CoefficientField::Trig::Sin;
  if (s == "cos") return CoefficientField::Trig::Cos;
  config_error("coefficient.trig must be \"sin\" or \"cos\"");
}

std::string resolve(const std::string& base, const std::string& path) {
  if (path.empty()) return {};
  std::filesystem::path p(path);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (std::filesystem::path(base) / p).lexically_normal().string();
}

bool is_reciprocal_integer(double eps, long& n) {
  if (!(eps > 0.0)) return false;
  const double inv = 1.0 / eps;
  n = std::lround(inv);
  return n >= 1 && std::abs(inv - static_cast<double>(n)) <= 1e-9 * inv;
}

}  // namespace

double parse_rational(const std::string& raw) {
  std::string s;
  for (char c : raw)
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  auto parse_double = [&](const std::string& part) {
    double v = 0.0;
    const auto* begin = part.data();
    const auto* end = part.data() + part.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (part.empty() || ec != std::errc() || ptr != end) {
      throw Error(ErrorKind::Config, "cannot parse '" + raw + "' as a number");
    }
    return v;
  };
  const auto slash = s.find('/');
  if (slash == std::string::npos) return parse_double(s);
  const double num = parse_double(s.substr(0, slash));
  const double den = parse_double(s.substr(slash + 1));
  if (den == 0.0) throw Error(ErrorKind::Config, "zero denominator in '" + raw + "'");
  return num / den;
}

bool RunConfig::identity_transform() const {
  if (!cell.has_hole()) return true;
  return porosity.kind == PorosityField::Kind::Constant &&
         std::abs(porosity.c0 - cell.reference_porosity()) <= 1e-14;
}

RunConfig parse_config(const std::string& toml_text, const std::string& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "TOML parse error: " << e.description() << " (line " << e.source().begin.line << ")";
    config_error(os.str());
  }
  check_keys(root, "root",
             {"name", "geometry", "porosity", "coefficient", "source", "problem", "mesh", "tolerances", "output"});

  RunConfig cfg;
  cfg.name = root["name"].value_or(std::string("run"));

  const toml::table* geo = section(root, "geometry");
  if (geo) check_keys(*geo, "geometry", {"hole", "hole_halfwidth", "blend_radius", "c_J", "C"});
  const bool hole = flag(geo, "hole", true, "geometry");
  const double hs = number(geo, "hole_halfwidth", 0.125, "geometry");
  const double rout = number(geo, "blend_radius", 0.375, "geometry");
  cfg.cell = hole ? ReferenceCell::square_hole(hs, rout) : ReferenceCell::unperforated();
  cfg.bounds.c_J = number(geo, "c_J", cfg.bounds.c_J, "geometry");
  cfg.bounds.C = number(geo, "C", cfg.bounds.C, "geometry");

  const toml::table* por = section(root, "porosity");
  if (por) check_keys(*por, "porosity", {"kind", "value", "mean", "amplitude", "k1", "k2", "c0", "c1", "c2"});
  const std::string pkind = text(por, "kind", "constant", "porosity");
  if (!hole) {
    cfg.porosity = PorosityField::constant(1.0);
  } else if (pkind == "constant") {
    cfg.porosity = PorosityField::constant(number(por, "value", cfg.cell.reference_porosity(), "porosity"));
  } else if (pkind == "affine") {
    cfg.porosity = PorosityField::affine(number(por, "c0", 0.9, "porosity"), number(por, "c1", 0.0, "porosity"),
                                         number(por, "c2", 0.0, "porosity"));
  } else if (pkind == "sinusoidal") {
    cfg.porosity = PorosityField::sinusoidal(number(por, "mean", 0.9, "porosity"),
                                             number(por, "amplitude", 0.0, "porosity"),
                                             number(por, "k1", 1.0, "porosity"), number(por, "k2", 0.0, "porosity"));
  } else {
    config_error("porosity.kind must be constant, affine or sinusoidal");
  }

  const toml::table* co = section(root, "coefficient");
  if (co) check_keys(*co, "coefficient", {"kind", "a0", "a1", "b", "trig", "direction", "x_modulation"});
  const std::string ckind = text(co, "kind", "identity", "coefficient");
  const double a0 = number(co, "a0", 1.0, "coefficient");
  const double a1 = number(co, "a1", 0.0, "coefficient");
  const auto trig = parse_trig(text(co, "trig", "cos", "coefficient"));
  const int dir = integer(co, "direction", 0, "coefficient");
  if (dir != 0 && dir != 1) config_error("coefficient.direction must be 0 or 1");
  if (ckind == "identity") {
    cfg.coefficient = CoefficientField::identity();
  } else if (ckind == "isotropic") {
    cfg.coefficient = CoefficientField::isotropic(a0, a1, trig, dir);
  } else if (ckind == "layered") {
    cfg.coefficient = CoefficientField::layered(a0, a1, number(co, "b", 1.0, "coefficient"), trig, dir);
  } else if (ckind == "checkerboard") {
    cfg.coefficient = CoefficientField::checkerboard(a0, a1);
  } else {
    config_error("coefficient.kind must be identity, isotropic, layered or checkerboard");
  }
  cfg.coefficient.x_modulation = number(co, "x_modulation", 0.0, "coefficient");

  const toml::table* src = section(root, "source");
  if (src) check_keys(*src, "source", {"kind", "value", "amplitude"});
  const std::string skind = text(src, "kind", "constant", "source");
  if (skind == "zero") {
    cfg.source = SourceField::zero();
  } else if (skind == "constant") {
    cfg.source = SourceField::constant(number(src, "value", 1.0, "source"));
  } else if (skind == "cosine") {
    cfg.source = SourceField::cosine(number(src, "amplitude", 1.0, "source"));
  } else {
    config_error("source.kind must be zero, constant or cosine");
  }

  const toml::table* prob = section(root, "problem");
  if (prob) check_keys(*prob, "problem", {"l", "eps"});
  cfg.l = integer(prob, "l", 0, "problem");
  cfg.epsilons = number_list(prob, "eps", cfg.epsilons, "problem");

  const toml::table* mesh = section(root, "mesh");
  if (mesh) {
    check_keys(*mesh, "mesh", {"macro", "per_cell", "cell", "cell_refined", "equivalence", "equivalence_eps"});
  }
  cfg.mesh.macro = integer(mesh, "macro", cfg.mesh.macro, "mesh");
  cfg.mesh.per_cell = integer(mesh, "per_cell", cfg.mesh.per_cell, "mesh");
  cfg.mesh.cell = integer(mesh, "cell", cfg.mesh.cell, "mesh");
  cfg.mesh.cell_refined = integer(mesh, "cell_refined", cfg.mesh.cell_refined, "mesh");
  cfg.mesh.equivalence_eps = number(mesh, "equivalence_eps", cfg.mesh.equivalence_eps, "mesh");
  {
    std::vector<double> eq(cfg.mesh.equivalence.begin(), cfg.mesh.equivalence.end());
    eq = number_list(mesh, "equivalence", eq, "mesh");
    cfg.mesh.equivalence.clear();
    for (double v : eq) cfg.mesh.equivalence.push_back(static_cast<int>(std::lround(v)));
  }

  const toml::table* tol = section(root, "tolerances");
  if (tol) {
    check_keys(*tol, "tolerances",
               {"equivalence_coarse", "equivalence_fine", "tensor_gap", "backtransform", "two_scale_route",
                "min_order", "uniform_ratio", "identity", "reparametrization", "golden_relative",
                "golden_absolute"});
  }
  Tolerances& t = cfg.tol;
  t.equivalence_coarse = number(tol, "equivalence_coarse", t.equivalence_coarse, "tolerances");
  t.equivalence_fine = number(tol, "equivalence_fine", t.equivalence_fine, "tolerances");
  t.tensor_gap = number(tol, "tensor_gap", t.tensor_gap, "tolerances");
  t.backtransform = number(tol, "backtransform", t.backtransform, "tolerances");
  t.two_scale_route = number(tol, "two_scale_route", t.two_scale_route, "tolerances");
  t.min_order = number(tol, "min_order", t.min_order, "tolerances");
  t.uniform_ratio = number(tol, "uniform_ratio", t.uniform_ratio, "tolerances");
  t.identity = number(tol, "identity", t.identity, "tolerances");
  t.reparametrization = number(tol, "reparametrization", t.reparametrization, "tolerances");
  t.golden_relative = number(tol, "golden_relative", t.golden_relative, "tolerances");
  t.golden_absolute = number(tol, "golden_absolute", t.golden_absolute, "tolerances");

  const toml::table* out = section(root, "output");
  if (out) check_keys(*out, "output", {"dir", "golden", "cache"});
  cfg.output_dir = text(out, "dir", "out/" + cfg.name, "output");
  cfg.golden = resolve(base_dir, text(out, "golden", "", "output"));
  cfg.cache = text(out, "cache", "", "output");

  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string base = std::filesystem::path(path).parent_path().string();
  return parse_config(ss.str(), base.empty() ? "." : base);
}

void validate(const RunConfig& cfg) {
  if (cfg.l != 0 && cfg.l != 2) throw Error(ErrorKind::Config, "problem.l must be 0 or 2");
  if (cfg.mesh.macro < 1 || cfg.mesh.per_cell < 1 || cfg.mesh.cell < 1) {
    throw Error(ErrorKind::Config, "mesh resolutions must be positive");
  }
  if (cfg.mesh.cell_refined <= cfg.mesh.cell) throw Error(ErrorKind::Config, "mesh.cell_refined must exceed mesh.cell");
  if (cfg.mesh.equivalence.empty()) throw Error(ErrorKind::Config, "mesh.equivalence needs at least one resolution");

  auto check_eps = [&](double eps, const std::string& what) {
    long n = 0;
    if (!is_reciprocal_integer(eps, n)) {
      std::ostringstream os;
      os << what << " = " << eps << " is not the reciprocal of an integer";
      throw Error(ErrorKind::Tiling, os.str());
    }
    if (cfg.mesh.macro % n != 0) {
      std::ostringstream os;
      os << what << " = 1/" << n << " does not tile the macro mesh of resolution " << cfg.mesh.macro;
      throw Error(ErrorKind::Tiling, os.str());
    }
  };
  for (double e : cfg.epsilons) check_eps(e, "eps");
  for (std::size_t i = 1; i < cfg.epsilons.size(); ++i) {
    if (!(cfg.epsilons[i] < cfg.epsilons[i - 1])) throw Error(ErrorKind::Config, "eps list must be decreasing");
  }
  check_eps(cfg.mesh.equivalence_eps, "mesh.equivalence_eps");

  for (int r : {cfg.mesh.per_cell, cfg.mesh.cell, cfg.mesh.cell_refined}) cfg.cell.check_alignment(r);
  for (int r : cfg.mesh.equivalence) cfg.cell.check_alignment(r);

  if (!(cfg.coefficient.coercivity() > 0.0)) {
    throw Error(ErrorKind::ParameterOutOfRange, "coefficient is not uniformly coercive");
  }
  if (cfg.bounds.c_J <= 0.0 || cfg.bounds.C <= 1.0) throw Error(ErrorKind::Config, "need c_J > 0 and C > 1");
  if (cfg.cell.has_hole()) {
    const CellTransform t = cfg.transform();
    auto [lo, hi] = cfg.porosity.range(1.0, 1.0);
    t.require_admissible(lo);
    t.require_admissible(hi);
  }
}

std::string canonical_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["geometry"] = {{"hole", c.cell.has_hole()},
                   {"hole_halfwidth", c.cell.hole_halfwidth_ref},
                   {"blend_radius", c.cell.blend_radius},
                   {"c_J", c.bounds.c_J},
                   {"C", c.bounds.C}};
  j["porosity"] = c.porosity.describe();
  j["coefficient"] = c.coefficient.describe();
  j["source"] = c.source.describe();
  j["l"] = c.l;
  j["eps"] = c.epsilons;
  j["mesh"] = {{"macro", c.mesh.macro},
               {"per_cell", c.mesh.per_cell},
               {"cell", c.mesh.cell},
               {"cell_refined", c.mesh.cell_refined},
               {"equivalence", c.mesh.equivalence},
               {"equivalence_eps", c.mesh.equivalence_eps}};
  const Tolerances& t = c.tol;
  j["tolerances"] = {{"equivalence_coarse", t.equivalence_coarse}, {"equivalence_fine", t.equivalence_fine},
                     {"tensor_gap", t.tensor_gap},                 {"backtransform", t.backtransform},
                     {"two_scale_route", t.two_scale_route},       {"min_order", t.min_order},
                     {"uniform_ratio", t.uniform_ratio},           {"identity", t.identity},
                     {"reparametrization", t.reparametrization},   {"golden_relative", t.golden_relative},
                     {"golden_absolute", t.golden_absolute}};
  return j.dump();
}

std::string config_hash(const RunConfig& cfg) {
  const std::string s = canonical_json(cfg);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace homog2s
