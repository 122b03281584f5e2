#pragma once

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "homog2s/cell.hpp"
#include "homog2s/config.hpp"
#include "homog2s/error.hpp"
#include "homog2s/micro.hpp"
#include "homog2s/report.hpp"

namespace homog2s::pipeline {

/// A stage aborted; carries the stage name and the underlying error kind.
class StageFailure : public std::runtime_error {
 public:
  StageFailure(std::string stage, ErrorKind kind, const std::string& what);
  const std::string& stage() const { return stage_; }
  ErrorKind kind() const { return kind_; }

 private:
  std::string stage_;
  ErrorKind kind_;
};

struct Options {
  int jobs = 0;
  bool compare_golden = true;
  std::string output_dir;  // overrides the config's output directory when non-empty
};

/// State shared by the stages of one run.
struct Context {
  Context(const RunConfig& cfg, Options opt);

  const RunConfig& cfg;
  Options opt;
  report::VerificationReport rep;
  std::map<std::string, std::string> files;  // artifact name -> contents
  bool identity = false;

  std::string output_dir() const;
  /// Tensor cache per route, loaded from the output directory when configured.
  cell::TensorCache* cache(cell::Route route, int resolution);
  void save_caches() const;

 private:
  std::map<std::string, std::unique_ptr<cell::TensorCache>> caches_;
};

micro::MicroProblem micro_problem(const RunConfig& cfg, double epsilon, int per_cell, int l, int jobs = 0);
cell::CellProblem cell_problem(const RunConfig& cfg, int resolution);

/// Diagonal macro sample points ((i + 1/2)/5, (i + 1/2)/5), i = 0..4.
std::vector<Vec2> sample_points();
/// Distinct porosity values at the sample points, ascending.
std::vector<double> sample_thetas(const RunConfig& cfg);

void stage_geometry(Context& ctx);
void stage_substitute(Context& ctx);
/// Fine mapped solves and the substitute/fine gap at the configured resolutions.
void stage_equivalence(Context& ctx, const std::vector<int>& per_cell);
/// Both tensor routes at the sample points (res and refined res) plus the reparametrization check.
void stage_cell_tensors(Context& ctx, const std::vector<Vec2>& points, int resolution, int refined);
void stage_macro(Context& ctx, int macro_resolution);
void stage_two_scale(Context& ctx, const std::vector<double>& thetas);
void stage_sweep(Context& ctx, int l);
void stage_backtransform(Context& ctx, const std::vector<double>& thetas);
void stage_golden(Context& ctx, const report::Json& golden);

/// Runs `fn` and converts library errors into StageFailure tagged with `stage`.
void run_stage(Context& ctx, const std::string& stage, const std::function<void()>& fn);

/// Writes report.json, plot data and every collected artifact into the output directory.
std::vector<std::string> write_outputs(const Context& ctx);

/// All stages in order; compares against the golden file when one is configured.
report::VerificationReport run_pipeline(const RunConfig& cfg, const Options& opt = {});
/// Same as run_pipeline, keeping the context for artifact output.
std::unique_ptr<Context> run_pipeline_context(const RunConfig& cfg, const Options& opt = {});

/// Regression snapshot: check name -> measured value (golden stage excluded).
report::Json snapshot(const report::VerificationReport& rep);

/// Overkill values for the golden file: tensors from 64, 128 and 256 cell meshes at the
/// sample porosities, Richardson-extrapolated with the observed order, plus the
/// reference-porosity tensor for A = I.
report::Json oracle_values(const RunConfig& cfg, int jobs = 0);

/// Golden document: config hash, snapshot of a full run and the oracle values.
report::Json generate_golden(const RunConfig& cfg, const Options& opt = {});

}  // namespace homog2s::pipeline
