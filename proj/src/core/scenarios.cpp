#include "core/scenarios.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/analytic.hpp"
#include "core/basis.hpp"
#include "core/common.hpp"

namespace hybem {

namespace {

std::vector<Eigen::Vector3d> even_sphere_points(int n, double r) {
  std::vector<Eigen::Vector3d> out;
  const double ga = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    out.push_back(r * Eigen::Vector3d(rho * std::cos(ga * i), rho * std::sin(ga * i), z));
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9e", v);
  return buf;
}

std::string csv_header(const RunConfig& cfg) {
  return std::string("# hybem ") + kVersion + " config " + config_hash(cfg) + "\n";
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write '" + path + "'");
  out << content;
  if (!out) fail(ErrorCode::io, "write failed for '" + path + "'");
}

std::string output_path(const RunConfig& cfg, const std::string& name) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create output directory '" + cfg.output_dir + "'");
  return cfg.output_dir + "/" + name;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_sources_and_electrodes(const RunConfig& cfg, const Study& study) {
  if (cfg.dipoles.empty()) fail(ErrorCode::invalid, "no dipoles configured");
  if (study.electrodes.electrodes.empty()) fail(ErrorCode::invalid, "no electrodes configured");
}

}  // namespace

std::vector<Eigen::Vector3d> Study::electrode_positions() const {
  std::vector<Eigen::Vector3d> out;
  out.reserve(electrodes.electrodes.size());
  for (const auto& e : electrodes.electrodes) out.push_back(e.pos);
  return out;
}

Study build_study(const RunConfig& cfg) {
  for (const double s : cfg.conductivity)
    if (!(s > 0.0)) fail(ErrorCode::invalid, "conductivities must be positive");

  Study study;
  for (size_t i = 0; i < cfg.surfaces.size(); ++i) {
    const SurfaceSpec& spec = cfg.surfaces[i];
    TriangleSurface s = spec.path.empty()
                            ? generate_sphere_surface(spec.radius, spec.level)
                            : load_surface_mesh(spec.path, static_cast<int>(i));
    s.layer_index = static_cast<int>(i);
    study.model.head.surfaces.push_back(std::move(s));
  }
  study.model.head.sigma = cfg.conductivity;

  for (const RegionSpec& r : cfg.regions)
    study.model.regions.push_back(load_tet_region(r.path, r.host_layer));
  for (const WireSpec& w : cfg.wires) {
    if (!(w.max_seg_len > 0.0))
      fail(ErrorCode::invalid, "wire max segment length must be positive");
    study.model.bundles.push_back(load_wire_bundle(w.path, w.max_seg_len, w.host_layer));
  }

  const bool has_file = !cfg.electrodes.path.empty();
  const bool has_count = cfg.electrodes.count > 0;
  if (has_file && has_count)
    fail(ErrorCode::invalid,
         "configure either an electrode file or a generated count, not both");
  if (has_file) {
    study.electrodes = load_electrodes(cfg.electrodes.path);
    if (!study.model.head.surfaces.empty()) {
      if (!(cfg.electrodes.snap > 0.0))
        fail(ErrorCode::invalid, "electrode snap distance must be positive");
      snap_electrodes(study.electrodes, study.model.head.surfaces.back(), cfg.electrodes.snap);
    }
  } else if (has_count) {
    if (study.model.head.surfaces.empty())
      fail(ErrorCode::invalid, "generated electrodes need at least one surface");
    const TriangleSurface& outer = study.model.head.surfaces.back();
    double rmax = 0.0;
    for (const auto& v : outer.vertices) rmax = std::max(rmax, v.norm());
    int idx = 0;
    for (const auto& p : even_sphere_points(cfg.electrodes.count, rmax)) {
      Electrode e;
      char label[16];
      std::snprintf(label, sizeof(label), "E%03d", ++idx);
      e.label = label;
      e.pos = p;
      study.electrodes.electrodes.push_back(std::move(e));
    }
    snap_electrodes(study.electrodes, outer, 2.0 * rmax);
  }
  return study;
}

std::string describe_study(const RunConfig& cfg, const Study& study) {
  const ConductionModel& m = study.model;
  const ContrastField contrast = compute_contrast(m);
  const DofLayout layout = dof_layout(m, contrast);
  std::ostringstream out;
  out << "hybem " << kVersion << "\n";
  out << "config " << config_hash(cfg) << "\n";
  out << "interfaces: " << m.head.surfaces.size() << "\n";
  for (size_t i = 0; i < m.head.surfaces.size(); ++i) {
    const TriangleSurface& s = m.head.surfaces[i];
    out << "  interface " << i + 1 << ": " << s.vertices.size() << " vertices, "
        << s.triangles.size() << " triangles\n";
  }
  out << "conductivities [S/m]:";
  for (const double s : m.head.sigma) out << " " << s;
  out << "\n";
  out << "tet regions: " << m.regions.size() << "\n";
  for (size_t k = 0; k < m.regions.size(); ++k) {
    const size_t active =
        contrast.regions[k].active() ? contrast.regions[k].mesh.tets.size() : 0;
    out << "  region " << k + 1 << ": " << m.regions[k].tets.size() << " tets, " << active
        << " with contrast\n";
  }
  out << "wire bundles: " << m.bundles.size() << "\n";
  for (size_t w = 0; w < m.bundles.size(); ++w) {
    size_t segs = 0;
    for (const auto& f : m.bundles[w].fibers) segs += f.nodes.size() - 1;
    const size_t active =
        contrast.bundles[w].active() ? contrast.bundles[w].wires.fibers.size() : 0;
    out << "  bundle " << w + 1 << ": " << m.bundles[w].fibers.size() << " fibers, " << segs
        << " segments, " << active << " with contrast\n";
  }
  out << "electrodes: " << study.electrodes.electrodes.size() << "\n";
  int surface_dofs = 0, region_dofs = 0, bundle_dofs = 0;
  for (const auto& r : layout.surface) surface_dofs += r.count;
  for (const auto& r : layout.region) region_dofs += r.count;
  for (const auto& r : layout.bundle) bundle_dofs += r.count;
  out << "degrees of freedom: surface " << surface_dofs << ", volume " << region_dofs
      << ", wire " << bundle_dofs << ", total " << layout.total << "\n";
  out << "solver: "
      << (cfg.solver.method == SolverOptions::Method::direct ? "direct" : "iterative")
      << ", quadrature order " << cfg.solver.quadrature_order << "\n";
  return out.str();
}

void run_solve(const RunConfig& cfg) {
  const Study study = build_study(cfg);
  require_sources_and_electrodes(cfg, study);
  const auto positions = study.electrode_positions();
  const ForwardSolver solver(study.model, cfg.solver);
  for (size_t k = 0; k < cfg.dipoles.size(); ++k) {
    const Eigen::VectorXd phi =
        mean_referenced(solver.potentials(cfg.dipoles[k], positions));
    std::string csv = csv_header(cfg);
    csv += "electrode_index,label,phi_mV\n";
    for (size_t i = 0; i < positions.size(); ++i)
      csv += std::to_string(i) + "," + study.electrodes.electrodes[i].label + "," +
             num(1e3 * phi[static_cast<int>(i)]) + "\n";
    char name[32];
    std::snprintf(name, sizeof(name), "potentials_%03zu.csv", k);
    write_file(output_path(cfg, name), csv);
  }
}

void run_leadfield(const RunConfig& cfg) {
  const Study study = build_study(cfg);
  require_sources_and_electrodes(cfg, study);
  const auto positions = study.electrode_positions();
  const size_t ne = positions.size(), nd = cfg.dipoles.size();

  const auto t0 = std::chrono::steady_clock::now();
  const ContrastField contrast = compute_contrast(study.model);
  BlockSystem system = build_system(study.model, contrast);
  deflate(system);
  const double assembly_s = seconds_since(t0);

  const auto t1 = std::chrono::steady_clock::now();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  const bool direct = cfg.solver.method == SolverOptions::Method::direct;
  if (direct && system.layout.total > 0) lu.compute(system.matrix);
  const double factorization_s = seconds_since(t1);

  const auto t2 = std::chrono::steady_clock::now();
  Eigen::MatrixXd lf(ne, 3 * nd);
  for (size_t d = 0; d < nd; ++d)
    for (int axis = 0; axis < 3; ++axis) {
      Dipole unit;
      unit.position = cfg.dipoles[d].position;
      unit.moment = Eigen::Vector3d::Unit(axis);
      ForwardSolution sol;
      sol.source = unit;
      if (system.layout.total == 0) {
        sol.coefficients.resize(0);
      } else {
        const Eigen::VectorXd rhs =
            build_rhs(study.model, contrast, system.layout, unit, cfg.solver.quadrature_order);
        if (direct) {
          sol.coefficients = lu.solve(rhs);
          if (!sol.coefficients.allFinite())
            fail(ErrorCode::solver, "direct factorization produced non-finite coefficients");
        } else {
          sol = solve(system, rhs, unit, cfg.solver);
        }
      }
      lf.col(3 * d + axis) =
          mean_referenced(eval_potential(study.model, contrast, system.layout, sol, positions));
    }
  const double solve_s = seconds_since(t2);

  std::string csv = csv_header(cfg);
  csv += "# rows electrodes, columns dipole components, mV per unit moment\n";
  csv += "label";
  for (size_t d = 0; d < nd; ++d)
    for (const char* ax : {"x", "y", "z"}) {
      char col[24];
      std::snprintf(col, sizeof(col), ",d%03zu_%s", d, ax);
      csv += col;
    }
  csv += "\n";
  for (size_t i = 0; i < ne; ++i) {
    csv += study.electrodes.electrodes[i].label;
    for (size_t c = 0; c < 3 * nd; ++c) csv += "," + num(1e3 * lf(i, c));
    csv += "\n";
  }
  write_file(output_path(cfg, "leadfield.csv"), csv);

  std::printf("assembly_s %.3f\n", assembly_s);
  std::printf("factorization_s %.3f\n", factorization_s);
  std::printf("solve_s %.3f\n", solve_s);
  std::printf("electrodes %zu\n", ne);
  std::printf("columns %zu\n", 3 * nd);
}

double run_validate_sphere(const RunConfig& cfg) {
  const ValidateSpec& v = cfg.validate;
  if (v.radii.size() != v.sigma.size() || v.radii.empty())
    fail(ErrorCode::invalid, "validation radii and conductivities must pair up");
  for (size_t i = 0; i < v.radii.size(); ++i) {
    if (!(v.radii[i] > 0.0)) fail(ErrorCode::invalid, "validation radii must be positive");
    if (i > 0 && !(v.radii[i] > v.radii[i - 1]))
      fail(ErrorCode::invalid, "validation radii must increase outward");
    if (!(v.sigma[i] > 0.0))
      fail(ErrorCode::invalid, "validation conductivities must be positive");
  }
  if (v.ecc_step < 1 || v.ecc_start < 0 || v.ecc_stop < v.ecc_start ||
      v.ecc_stop >= 100)
    fail(ErrorCode::invalid, "eccentricity sweep must satisfy 0 <= start <= stop < 100");
  if (v.electrodes < 1) fail(ErrorCode::invalid, "validation needs at least one electrode");

  ConductionModel model;
  for (size_t i = 0; i < v.radii.size(); ++i) {
    TriangleSurface s = generate_sphere_surface(v.radii[i], v.level);
    s.layer_index = static_cast<int>(i);
    model.head.surfaces.push_back(std::move(s));
  }
  model.head.sigma = v.sigma;

  LayeredSphere reference;
  reference.radii = v.radii;
  reference.sigma = v.sigma;
  const auto points = even_sphere_points(v.electrodes, v.radii.back());

  const ForwardSolver solver(model, cfg.solver);
  std::string csv = csv_header(cfg);
  csv += "eccentricity_pct,relative_error_pct\n";
  double worst = 0.0;
  int worst_ecc = 0;
  for (int ecc = v.ecc_start; ecc <= v.ecc_stop; ecc += v.ecc_step) {
    Dipole d;
    d.position = Eigen::Vector3d(0, 0, ecc / 100.0 * v.radii.front());
    d.moment = v.moment;
    const Eigen::VectorXd phi = solver.potentials(d, points);
    const Eigen::VectorXd exact =
        layered_sphere_potential(reference, d.position, d.moment, points);
    const double re_pct = 100.0 * relative_error(phi, exact);
    if (re_pct > worst) {
      worst = re_pct;
      worst_ecc = ecc;
    }
    csv += std::to_string(ecc) + "," + num(re_pct) + "\n";
  }
  write_file(output_path(cfg, "sphere_validation.csv"), csv);

  if (worst > v.bound_pct) {
    char msg[128];
    std::snprintf(msg, sizeof(msg),
                  "relative error %.3f %% at eccentricity %d %% exceeds bound %.3f %%", worst,
                  worst_ecc, v.bound_pct);
    fail(ErrorCode::bound, msg);
  }
  return worst;
}

}  // namespace hybem
