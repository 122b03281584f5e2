#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "homog2s/fields.hpp"
#include "homog2s/microgeom.hpp"

namespace homog2s {

struct MeshSettings {
  int macro = 64;             // macro mesh resolution per unit length
  int per_cell = 8;           // micro elements per eps-cell edge in sweeps
  int cell = 32;              // cell-problem mesh
  int cell_refined = 64;      // refinement level for the decrease checks
  std::vector<int> equivalence{16, 32};  // per-cell resolutions of the equivalence check
  double equivalence_eps = 0.25;
};

struct Tolerances {
  double equivalence_coarse = 2e-2;  // at equivalence[0]
  double equivalence_fine = 6e-3;    // at equivalence[1]
  double tensor_gap = 2e-2;
  double backtransform = 2e-2;
  double two_scale_route = 2e-2;
  double min_order = 0.8;
  double uniform_ratio = 1.5;
  double identity = 1e-10;
  double reparametrization = 2e-2;
  double golden_relative = 1e-6;
  double golden_absolute = 1e-12;
};

/// Parsed and validated run configuration.
struct RunConfig {
  std::string name;
  ReferenceCell cell = ReferenceCell::square_hole();
  GeometryBounds bounds;
  PorosityField porosity = PorosityField::constant(15.0 / 16.0);
  CoefficientField coefficient = CoefficientField::identity();
  SourceField source = SourceField::constant(1.0);
  int l = 0;
  std::vector<double> epsilons{0.25, 0.125, 0.0625, 0.03125};
  MeshSettings mesh;
  Tolerances tol;
  std::string output_dir = "out";
  std::string golden;  // resolved path, empty when none
  std::string cache;   // resolved tensor cache path, empty when none

  CellTransform transform() const { return CellTransform(cell, bounds); }
  /// psi_eps and psi_0 reduce to the identity (no hole, or constant reference porosity).
  bool identity_transform() const;
};

/// Accepts a TOML number or a rational string such as "1/8".
double parse_rational(const std::string& text);

RunConfig parse_config(const std::string& toml_text, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

/// Throws Config / Tiling / ParameterOutOfRange / MisalignedGrid for invalid settings.
void validate(const RunConfig& cfg);

/// Canonical JSON of every setting that influences results (output paths excluded).
std::string canonical_json(const RunConfig& cfg);
/// FNV-1a 64-bit hash of canonical_json, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace homog2s
