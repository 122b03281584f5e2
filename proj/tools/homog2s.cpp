#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "homog2s/config.hpp"
#include "homog2s/lattice.hpp"
#include "homog2s/micro.hpp"
#include "homog2s/parallel.hpp"
#include "homog2s/pipeline.hpp"
#include "homog2s/report.hpp"

namespace {

using namespace homog2s;
using pipeline::Context;
using report::Json;

struct Args {
  std::string config;
  std::string eps;
  int mesh = 0;
  int jobs = 0;
  bool oracle = false;
  std::string out;
  std::string input;
  int l = -1;
  double theta = -1.0;
  bool field = false;
};

std::vector<double> parse_eps_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_rational(item));
  }
  if (out.empty()) throw Error(ErrorKind::Config, "--eps needs at least one value");
  return out;
}

RunConfig load(const Args& a) {
  RunConfig cfg = load_config(a.config);
  if (!a.eps.empty()) cfg.epsilons = parse_eps_list(a.eps);
  if (!a.out.empty()) cfg.output_dir = a.out;
  return cfg;
}

void print_checks(const report::VerificationReport& rep) {
  for (const auto& c : rep.checks()) {
    std::printf("%s %-48s %.6e %s %.3e\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.value,
                report::to_string(c.comparison).c_str(), c.tolerance);
  }
  std::printf("%zu checks, %zu failed (config %s, hash %s)\n", rep.checks().size(), rep.failures(),
              rep.config_name().c_str(), rep.config_hash().c_str());
}

int finish(Context& ctx) {
  for (const auto& p : pipeline::write_outputs(ctx)) std::printf("wrote %s\n", p.c_str());
  print_checks(ctx.rep);
  return ctx.rep.all_passed() ? 0 : 1;
}

std::string solution_csv(const micro::MicroSolution& s) {
  report::CsvWriter csv({"x1", "x2", "u"});
  const auto mask = s.mesh.vertex_mask();
  for (int v = 0; v < s.mesh.num_vertices(); ++v) {
    if (!mask[v]) continue;
    const Vec2 x = s.mesh.vertex(v);
    csv.row(std::vector<double>{x.x, x.y, s.values[v]});
  }
  return csv.str();
}

std::vector<double> read_nodal_csv(const std::string& path, std::size_t expected) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find_last_of(',');
    values.push_back(parse_rational(comma == std::string::npos ? line : line.substr(comma + 1)));
  }
  if (values.size() != expected) {
    throw Error(ErrorKind::ResolutionMismatch, path + ": expected " + std::to_string(expected) + " nodal values, got " +
                                                   std::to_string(values.size()));
  }
  return values;
}

int cmd_unfold(const Args& a) {
  const RunConfig cfg = load(a);
  Context ctx(cfg, {a.jobs, false, cfg.output_dir});
  const int n = a.mesh > 0 ? a.mesh : cfg.mesh.macro;
  lattice::GridFunction u =
      a.input.empty()
          ? lattice::GridFunction::from_function(n, n, 1.0 / n, [&](Vec2 x) { return cfg.source(x); })
          : lattice::GridFunction::from_nodal(n, n, 1.0 / n, read_nodal_csv(a.input, std::size_t(n + 1) * (n + 1)));
  pipeline::run_stage(ctx, "unfold", [&] {
    for (double eps : cfg.epsilons) {
      const lattice::UnfoldedFunction t = lattice::unfold(eps, u);
      const double integral = u.integral();
      const double rel = std::abs(t.integral() - integral) / std::max(std::abs(integral), 1e-300);
      ctx.rep.check("unfold", "unfold.integral[eps=" + report::csv_number(eps) + "]", integral == 0.0 ? std::abs(t.integral()) : rel, 1e-12);
      ctx.rep.check("unfold", "unfold.l2_isometry[eps=" + report::csv_number(eps) + "]",
                    lattice::unfold_isometry_check(eps, u, lattice::PNorm::L2), 1e-12);
      report::CsvWriter csv({"kx", "ky", "i", "j", "value"});
      const int m = t.micro_resolution();
      for (int ky = 0; ky < t.cells_y(); ++ky)
        for (int kx = 0; kx < t.cells_x(); ++kx)
          for (int j = 0; j <= m; ++j)
            for (int i = 0; i <= m; ++i)
              csv.row(std::vector<double>{double(kx), double(ky), double(i), double(j), t.nodal(kx, ky, i, j)});
      ctx.files["unfolded_eps=" + report::csv_number(eps) + ".csv"] = csv.str();
    }
  });
  return finish(ctx);
}

int cmd_solve(const Args& a, bool fine) {
  const RunConfig cfg = load(a);
  Context ctx(cfg, {a.jobs, false, cfg.output_dir});
  const int per_cell = a.mesh > 0 ? a.mesh : cfg.mesh.per_cell;
  const std::string stage = fine ? "fine" : "substitute";
  pipeline::run_stage(ctx, stage, [&] {
    for (double eps : cfg.epsilons) {
      const micro::MicroProblem p = pipeline::micro_problem(cfg, eps, per_cell, cfg.l, a.jobs);
      const micro::MicroSolution s = fine ? micro::solve_fine_mapped(p) : micro::solve_substitute(p);
      const std::string at = "[eps=" + report::csv_number(eps) + "]";
      ctx.rep.check_true(stage, stage + ".converged" + at, s.solver.converged);
      if (!fine) {
        ctx.rep.check(stage, stage + ".coercivity" + at, s.coercivity.min_eigenvalue, s.coercivity.bound,
                      report::Comparison::AtLeast);
      }
      ctx.rep.data(stage)["eps=" + report::csv_number(eps)] = {{"l2", s.norms.l2},
                                                             {"gradient_l2", s.norms.gradient_l2},
                                                             {"estimate", s.norms.estimate},
                                                             {"iterations", s.solver.iterations}};
      ctx.files[stage + "_eps=" + report::csv_number(eps) + ".csv"] = solution_csv(s);
    }
  });
  return finish(ctx);
}

int cmd_equivalence(const Args& a) {
  RunConfig cfg = load(a);
  if (!a.eps.empty()) cfg.mesh.equivalence_eps = cfg.epsilons.front();
  if (a.mesh > 0) cfg.mesh.equivalence = {a.mesh, 2 * a.mesh};
  validate(cfg);
  Context ctx(cfg, {a.jobs, false, cfg.output_dir});
  pipeline::run_stage(ctx, "equivalence", [&] { pipeline::stage_equivalence(ctx, cfg.mesh.equivalence); });
  return finish(ctx);
}

int cmd_cell_tensor(const Args& a) {
  RunConfig cfg = load(a);
  if (a.mesh > 0) {
    cfg.mesh.cell = a.mesh;
    cfg.mesh.cell_refined = 2 * a.mesh;
  }
  std::vector<Vec2> points = pipeline::sample_points();
  if (a.theta > 0.0 && !a.field) {
    cfg.porosity = PorosityField::constant(a.theta);
    points = {{0.5, 0.5}};
  }
  validate(cfg);
  Context ctx(cfg, {a.jobs, false, cfg.output_dir});
  pipeline::run_stage(ctx, "cell", [&] { pipeline::stage_cell_tensors(ctx, points, cfg.mesh.cell, cfg.mesh.cell_refined); });
  return finish(ctx);
}

int cmd_homogenized(const Args& a) {
  RunConfig cfg = load(a);
  if (a.mesh > 0) cfg.mesh.macro = a.mesh;
  validate(cfg);
  Context ctx(cfg, {a.jobs, false, cfg.output_dir});
  pipeline::run_stage(ctx, "macro", [&] { pipeline::stage_macro(ctx, cfg.mesh.macro); });
  return finish(ctx);
}

int cmd_two_scale(const Args& a) {
  RunConfig cfg = load(a);
  if (a.mesh > 0) cfg.mesh.cell = a.mesh;
  if (cfg.mesh.cell_refined <= cfg.mesh.cell) cfg.mesh.cell_refined = 2 * cfg.mesh.cell;
  validate(cfg);
  Context ctx(cfg, {a.jobs, false, cfg.output_dir});
  pipeline::run_stage(ctx, "two_scale", [&] { pipeline::stage_two_scale(ctx, pipeline::sample_thetas(cfg)); });
  return finish(ctx);
}

int cmd_sweep(const Args& a) {
  RunConfig cfg = load(a);
  if (a.mesh > 0) cfg.mesh.per_cell = a.mesh;
  const int l = a.l >= 0 ? a.l : cfg.l;
  if (l != 0 && l != 2) throw Error(ErrorKind::Config, "--l must be 0 or 2");
  validate(cfg);
  Context ctx(cfg, {a.jobs, false, cfg.output_dir});
  pipeline::run_stage(ctx, "sweep", [&] { pipeline::stage_sweep(ctx, l); });
  return finish(ctx);
}

int cmd_run(const Args& a) {
  RunConfig cfg = load(a);
  if (a.mesh > 0) cfg.mesh.macro = a.mesh;
  validate(cfg);
  if (a.oracle) {
    const Json golden = pipeline::generate_golden(cfg, {a.jobs, false, cfg.output_dir});
    const std::string path = cfg.golden.empty() ? (std::filesystem::path(cfg.output_dir) / "golden.json").string()
                                                : cfg.golden;
    report::write_json(golden, path);
    std::printf("wrote %s\n", path.c_str());
    return golden.value("passed", false) ? 0 : 1;
  }
  auto ctx = pipeline::run_pipeline_context(cfg, {a.jobs, true, cfg.output_dir});
  return finish(*ctx);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-scale homogenization solver and verification harness for locally periodic perforated domains"};
  app.require_subcommand(1);
  Args args;

  auto common = [&](CLI::App* sub, const std::string& mesh_help) {
    sub->add_option("--config", args.config, "TOML run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--eps", args.eps, "comma-separated eps values, e.g. 1/4,1/8");
    sub->add_option("--mesh", args.mesh, mesh_help)->check(CLI::PositiveNumber);
    sub->add_option("--jobs", args.jobs, "worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", args.out, "output directory (overrides the config)");
  };

  auto* unfold = app.add_subcommand("unfold", "unfold a grid function and check the unfolding identities");
  common(unfold, "macro grid resolution");
  unfold->add_option("--input", args.input, "CSV of nodal values in row-major vertex order (last column used)");

  auto* sub = app.add_subcommand("solve-substitute", "transformed micro problem on the reference perforated mesh");
  common(sub, "elements per eps-cell edge");
  auto* fine = app.add_subcommand("solve-fine", "micro problem on the vertex-mapped deformed mesh");
  common(fine, "elements per eps-cell edge");
  auto* eq = app.add_subcommand("verify-equivalence", "substitute versus fine mapped solution");
  common(eq, "coarse elements per eps-cell edge (the fine level doubles it)");
  auto* ct = app.add_subcommand("cell-tensor", "effective tensors by both routes");
  common(ct, "cell mesh resolution (refined level doubles it)");
  ct->add_option("--theta", args.theta, "single porosity value")->check(CLI::Range(0.0, 1.0));
  ct->add_flag("--field", args.field, "sample the configured porosity field (default)");
  auto* hom = app.add_subcommand("solve-homogenized", "macro problem by both routes");
  common(hom, "macro mesh resolution");
  auto* ts = app.add_subcommand("solve-two-scale", "l = 2 limit cell solutions and route gaps");
  common(ts, "cell mesh resolution");
  auto* sw = app.add_subcommand("sweep-epsilon", "eps-convergence study against the limit");
  common(sw, "elements per eps-cell edge");
  sw->add_option("--l", args.l, "scaling exponent (0 or 2)")->check(CLI::IsMember({0, 2}));
  auto* run = app.add_subcommand("run", "full verification pipeline");
  common(run, "macro mesh resolution");
  run->add_flag("--oracle", args.oracle, "write golden values from overkill meshes instead of checking");

  CLI11_PARSE(app, argc, argv);
  if (args.jobs > 0) set_default_jobs(args.jobs);

  try {
    if (unfold->parsed()) return cmd_unfold(args);
    if (sub->parsed()) return cmd_solve(args, false);
    if (fine->parsed()) return cmd_solve(args, true);
    if (eq->parsed()) return cmd_equivalence(args);
    if (ct->parsed()) return cmd_cell_tensor(args);
    if (hom->parsed()) return cmd_homogenized(args);
    if (ts->parsed()) return cmd_two_scale(args);
    if (sw->parsed()) return cmd_sweep(args);
    if (run->parsed()) return cmd_run(args);
  } catch (const pipeline::StageFailure& e) {
    std::fprintf(stderr, "error [%s]: %s\n", e.stage().c_str(), e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
