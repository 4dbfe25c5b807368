#pragma once

#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/formulation.hpp"
#include "core/geometry.hpp"

namespace hybem {

// Everything a run needs, realized from a configuration: meshes loaded or
// generated, electrodes placed and snapped onto the outermost surface.
struct Study {
  ConductionModel model;
  ElectrodeSet electrodes;

  std::vector<Eigen::Vector3d> electrode_positions() const;
};

Study build_study(const RunConfig& cfg);

// Human-readable mesh and degree-of-freedom statistics.
std::string describe_study(const RunConfig& cfg, const Study& study);

// Scenario drivers. Each writes CSV files into cfg.output_dir; numeric
// formatting is fixed so identical configurations produce identical bytes.
// Potentials are exported in millivolts, mean-referenced over electrodes.
void run_solve(const RunConfig& cfg);
void run_leadfield(const RunConfig& cfg);

// Concentric-sphere sweep against the analytic series. Writes the
// error-vs-eccentricity table, then fails with ErrorCode::bound if the worst
// relative error exceeds the configured bound. Returns the worst error (%).
double run_validate_sphere(const RunConfig& cfg);

}  // namespace hybem
