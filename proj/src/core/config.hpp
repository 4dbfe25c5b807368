#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "core/formulation.hpp"

namespace hybem {

// Run configuration: flat key-value text with [sections]. '#' starts a
// comment, list-valued keys (surface, sphere, region, wires, dipole) append,
// scalar keys overwrite. See README for the full key reference.

// One interface, innermost first: a mesh file or a generated icosphere.
struct SurfaceSpec {
  std::string path;     // empty when generated
  double radius = 0.0;  // generated icosphere
  int level = 0;
};

struct RegionSpec {
  std::string path;
  int host_layer = 0;
};

struct WireSpec {
  std::string path;
  int host_layer = 0;
  double max_seg_len = 0.0;
};

// Exactly one of path / count; generated electrodes are spread evenly over
// the outermost surface and labeled E001, E002, ...
struct ElectrodeSpec {
  std::string path;
  int count = 0;
  double snap = 0.02;  // max projection distance onto the outer surface (m)
};

// Concentric-sphere accuracy sweep against the analytic series.
struct ValidateSpec {
  std::vector<double> radii = {0.087, 0.092, 0.1};
  std::vector<double> sigma = {0.33, 0.0125, 0.33};
  int level = 3;  // icosphere subdivision per interface
  int ecc_start = 5, ecc_stop = 95, ecc_step = 5;  // percent of the innermost radius
  Eigen::Vector3d moment = Eigen::Vector3d(1.0, 0.0, 1.0);  // A m, dipole on +z axis
  int electrodes = 60;
  double bound_pct = 5.0;
};

struct RunConfig {
  std::vector<SurfaceSpec> surfaces;
  std::vector<double> conductivity;  // one per compartment (>= 1 with no surfaces)
  std::vector<RegionSpec> regions;
  std::vector<WireSpec> wires;
  std::vector<Dipole> dipoles;
  ElectrodeSpec electrodes;
  SolverOptions solver;
  int threads = 1;
  std::string output_dir = "out";
  ValidateSpec validate;
  unsigned long long hash_state = 0;  // FNV-1a of the file bytes plus overrides
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text, const std::string& name);

// Applies one "section.key" entry on top of a parsed configuration and folds
// it into the hash, so overridden runs stamp distinct output headers.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// 16 hex digits of the accumulated hash.
std::string config_hash(const RunConfig& cfg);

}  // namespace hybem
