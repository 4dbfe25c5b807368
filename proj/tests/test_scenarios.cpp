#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "core/analytic.hpp"
#include "core/common.hpp"
#include "core/config.hpp"
#include "core/geometry.hpp"
#include "core/scenarios.hpp"
#include "test_helpers.hpp"

using namespace hybem;
using Eigen::Matrix3d;
using Eigen::Vector3d;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string surf_text(const TriangleSurface& s) {
  std::ostringstream out;
  out << "surf " << s.vertices.size() << " " << s.triangles.size() << "\n";
  for (const auto& v : s.vertices)
    out << fmt(v.x()) << " " << fmt(v.y()) << " " << fmt(v.z()) << "\n";
  for (const auto& t : s.triangles) out << t[0] << " " << t[1] << " " << t[2] << "\n";
  return out.str();
}

std::string tet_text(const TetRegion& r) {
  std::ostringstream out;
  out << "tet " << r.vertices.size() << " " << r.tets.size() << "\n";
  for (const auto& v : r.vertices)
    out << fmt(v.x()) << " " << fmt(v.y()) << " " << fmt(v.z()) << "\n";
  for (size_t t = 0; t < r.tets.size(); ++t) {
    const Matrix3d& m = r.sigma[t];
    out << r.tets[t][0] << " " << r.tets[t][1] << " " << r.tets[t][2] << " " << r.tets[t][3]
        << " " << fmt(m(0, 0)) << " " << fmt(m(1, 1)) << " " << fmt(m(2, 2)) << " "
        << fmt(m(0, 1)) << " " << fmt(m(0, 2)) << " " << fmt(m(1, 2)) << "\n";
  }
  return out.str();
}

std::string wire_text(double radius, double sigma_l, const std::vector<Vector3d>& nodes) {
  std::ostringstream out;
  out << "wire 1\n";
  out << "fiber " << nodes.size() << " " << fmt(radius) << " " << fmt(sigma_l) << "\n";
  for (const auto& v : nodes)
    out << fmt(v.x()) << " " << fmt(v.y()) << " " << fmt(v.z()) << "\n";
  return out.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Data rows of a potentials CSV: skips the hash comment and the column header.
std::vector<double> phi_column(const std::string& path) {
  std::vector<double> out;
  for (const auto& line : read_lines(path)) {
    if (line.empty() || line[0] == '#' || line.rfind("electrode_index", 0) == 0) continue;
    const size_t comma = line.rfind(',');
    REQUIRE(comma != std::string::npos);
    out.push_back(std::stod(line.substr(comma + 1)));
  }
  return out;
}

std::string temp_dir(const std::string& stem) {
  const auto dir = std::filesystem::temp_directory_path() / stem;
  std::filesystem::remove_all(dir);
  return dir.string();
}

// A one-sphere solve study around generated meshes, extended per test.
std::string base_config(const std::string& outdir) {
  return "[model]\n"
         "sphere = 0.1 1\n"
         "conductivity = 0.33\n"
         "[sources]\n"
         "dipole = 0 0 0.05 1e-8 0 1e-8\n"
         "[electrodes]\n"
         "count = 8\n"
         "[output]\n"
         "directory = " +
         outdir + "\n";
}

}  // namespace

TEST_CASE("study builder loads meshes and snaps file electrodes") {
  const TriangleSurface sphere = generate_sphere_surface(0.1, 1);
  const std::string surf_path = test_helpers::write_temp("study.surf", surf_text(sphere));
  TetRegion cyl = generate_cylinder_tets(0.002, 0.04, 0.004, 0.9 * Matrix3d::Identity());
  const std::string tet_path = test_helpers::write_temp("study.tet", tet_text(cyl));
  const std::string wire_path = test_helpers::write_temp(
      "study.wire",
      wire_text(0.002, 2.0, {Vector3d(0.04, 0, -0.02), Vector3d(0.04, 0, 0.02)}));
  const std::string elec_path = test_helpers::write_temp(
      "study.elec", "Cz 0 0 0.11\nPz 0 0.07 0.08\nOz 0 -0.07 0.08\nFz 0.07 0 0.08\n");

  const std::string text = "[model]\nsurface = " + surf_path +
                           "\nconductivity = 0.33\nregion = " + tet_path +
                           " 0\nwires = " + wire_path +
                           " 0 0.005\n[electrodes]\nfile = " + elec_path + "\nsnap = 0.02\n";
  const RunConfig cfg = parse_run_config_text(text, "study.cfg");
  const Study study = build_study(cfg);

  REQUIRE(study.model.head.surfaces.size() == 1);
  CHECK(study.model.head.surfaces[0].triangles.size() == sphere.triangles.size());
  REQUIRE(study.model.regions.size() == 1);
  CHECK(study.model.regions[0].tets.size() == cyl.tets.size());
  REQUIRE(study.model.bundles.size() == 1);
  CHECK(study.model.bundles[0].fibers[0].nodes.size() > 2);  // resampled at 5 mm

  REQUIRE(study.electrodes.electrodes.size() == 4);
  CHECK(study.electrodes.electrodes[0].label == "Cz");
  for (const auto& e : study.electrodes.electrodes)
    CHECK(surface_distance2(study.model.head.surfaces[0], e.pos) < 1e-18);
}

TEST_CASE("generated electrodes are labeled and land on the outer surface") {
  const std::string text =
      "[model]\nsphere = 0.1 1\nconductivity = 0.33\n[electrodes]\ncount = 16\n";
  const Study study = build_study(parse_run_config_text(text, "gen.cfg"));
  REQUIRE(study.electrodes.electrodes.size() == 16);
  CHECK(study.electrodes.electrodes.front().label == "E001");
  CHECK(study.electrodes.electrodes.back().label == "E016");
  for (const auto& e : study.electrodes.electrodes)
    CHECK(surface_distance2(study.model.head.surfaces[0], e.pos) < 1e-18);
}

TEST_CASE("study builder rejects inconsistent electrode configuration") {
  const std::string elec_path = test_helpers::write_temp("both.elec", "Cz 0 0 0.1\n");
  const std::string text = "[model]\nsphere = 0.1 1\nconductivity = 0.33\n[electrodes]\nfile = " +
                           elec_path + "\ncount = 4\n";
  CHECK_THROWS_AS(build_study(parse_run_config_text(text, "both.cfg")), Error);

  const std::string negative =
      "[model]\nsphere = 0.1 1\nconductivity = -0.33\n[electrodes]\ncount = 4\n";
  CHECK_THROWS_AS(build_study(parse_run_config_text(negative, "neg.cfg")), Error);
}

TEST_CASE("solve scenario writes a deterministic schema-stable CSV per dipole") {
  const std::string outdir = temp_dir("hybem_solve_out");
  std::string text = base_config(outdir);
  text += "[sources]\ndipole = 0.02 0 0.04 0 1e-8 0\n";  // second dipole
  const RunConfig cfg = parse_run_config_text(text, "solve.cfg");

  run_solve(cfg);
  const std::string f0 = outdir + "/potentials_000.csv";
  const std::string f1 = outdir + "/potentials_001.csv";
  const auto lines = read_lines(f0);
  REQUIRE(lines.size() == 2 + 8);
  CHECK(lines[0] == "# hybem " + std::string(kVersion) + " config " + config_hash(cfg));
  CHECK(lines[1] == "electrode_index,label,phi_mV");
  CHECK(lines[2].rfind("0,E001,", 0) == 0);
  CHECK(lines[9].rfind("7,E008,", 0) == 0);

  const std::string first_bytes = read_bytes(f0), second_file_bytes = read_bytes(f1);
  CHECK(first_bytes != second_file_bytes);
  run_solve(cfg);
  CHECK(read_bytes(f0) == first_bytes);
  CHECK(read_bytes(f1) == second_file_bytes);

  // Mean reference: exported values sum to zero at printout precision.
  const auto phi = phi_column(f0);
  double sum = 0.0, amax = 0.0;
  for (const double v : phi) {
    sum += v;
    amax = std::max(amax, std::abs(v));
  }
  CHECK(std::abs(sum) < 1e-7 * amax);  // printout rounding, 10 significant digits
}

TEST_CASE("zero-contrast region leaves the exported potentials unchanged") {
  const std::string out_a = temp_dir("hybem_null_a");
  const RunConfig plain = parse_run_config_text(base_config(out_a), "plain.cfg");
  run_solve(plain);

  TetRegion cyl = generate_cylinder_tets(0.002, 0.04, 0.004, 0.33 * Matrix3d::Identity());
  const std::string tet_path = test_helpers::write_temp("null.tet", tet_text(cyl));
  const std::string out_b = temp_dir("hybem_null_b");
  std::string text = base_config(out_b) + "[model]\nregion = " + tet_path + " 0\n";
  const RunConfig loaded = parse_run_config_text(text, "loaded.cfg");
  run_solve(loaded);

  // Same identifiers except the header hash, and bit-identical values: the
  // contrast-free region must not enter the assembly at all.
  const auto la = read_lines(out_a + "/potentials_000.csv");
  const auto lb = read_lines(out_b + "/potentials_000.csv");
  REQUIRE(la.size() == lb.size());
  CHECK(la[0] != lb[0]);
  for (size_t i = 1; i < la.size(); ++i) CHECK(la[i] == lb[i]);
}

TEST_CASE("adding a wire bundle visibly changes the exported potentials") {
  const std::string out_a = temp_dir("hybem_wire_a");
  const RunConfig plain = parse_run_config_text(base_config(out_a), "plain.cfg");
  run_solve(plain);

  const std::string wire_path = test_helpers::write_temp(
      "visible.wire",
      wire_text(0.003, 2.0, {Vector3d(0.0, 0.01, -0.03), Vector3d(0.0, 0.01, 0.03)}));
  const std::string out_b = temp_dir("hybem_wire_b");
  std::string text = base_config(out_b) + "[model]\nwires = " + wire_path + " 0 0.004\n";
  const RunConfig wired = parse_run_config_text(text, "wired.cfg");
  run_solve(wired);

  const auto pa = phi_column(out_a + "/potentials_000.csv");
  const auto pb = phi_column(out_b + "/potentials_000.csv");
  REQUIRE(pa.size() == pb.size());
  double diff = 0.0, amax = 0.0;
  for (size_t i = 0; i < pa.size(); ++i) {
    diff = std::max(diff, std::abs(pa[i] - pb[i]));
    amax = std::max(amax, std::abs(pa[i]));
  }
  CHECK(diff > 1e-3 * amax);
}

TEST_CASE("quadrature order perturbs the source integrals without breaking them") {
  const std::string out_hi = temp_dir("hybem_quad_hi");
  RunConfig hi = parse_run_config_text(base_config(out_hi), "hi.cfg");
  run_solve(hi);
  const std::string out_lo = temp_dir("hybem_quad_lo");
  RunConfig lo = parse_run_config_text(base_config(out_lo), "lo.cfg");
  apply_override(lo, "output.directory", out_lo);
  apply_override(lo, "solver.quadrature", "1");
  run_solve(lo);

  const auto ph = phi_column(out_hi + "/potentials_000.csv");
  const auto pl = phi_column(out_lo + "/potentials_000.csv");
  double diff2 = 0.0, norm2 = 0.0;
  for (size_t i = 0; i < ph.size(); ++i) {
    diff2 += (ph[i] - pl[i]) * (ph[i] - pl[i]);
    norm2 += ph[i] * ph[i];
  }
  const double rel = std::sqrt(diff2 / norm2);
  CHECK(rel > 0.0);
  CHECK(rel < 0.01);
}

TEST_CASE("leadfield scenario exports columns consistent with direct solves") {
  const std::string outdir = temp_dir("hybem_lf_out");
  std::string text = base_config(outdir);
  text += "[sources]\ndipole = 0.02 0 0.04 0 1e-8 0\n";
  const RunConfig cfg = parse_run_config_text(text, "lf.cfg");
  run_leadfield(cfg);

  const auto lines = read_lines(outdir + "/leadfield.csv");
  REQUIRE(lines.size() == 3 + 8);
  CHECK(lines[2] == "label,d000_x,d000_y,d000_z,d001_x,d001_y,d001_z");
  Eigen::MatrixXd lf(8, 6);
  for (int i = 0; i < 8; ++i) {
    std::istringstream row(lines[3 + i]);
    std::string cell;
    std::getline(row, cell, ',');  // label
    for (int c = 0; c < 6; ++c) {
      REQUIRE(std::getline(row, cell, ','));
      lf(i, c) = std::stod(cell);
    }
  }

  run_solve(cfg);
  const auto phi0 = phi_column(outdir + "/potentials_000.csv");
  double amax = 0.0;
  for (const double v : phi0) amax = std::max(amax, std::abs(v));
  // dipole 0 moment (1e-8, 0, 1e-8): combine the unit-moment columns.
  for (int i = 0; i < 8; ++i) {
    const double combined = 1e-8 * lf(i, 0) + 1e-8 * lf(i, 2);
    CHECK(std::abs(combined - phi0[i]) < 1e-6 * amax);
  }

  const std::string bytes = read_bytes(outdir + "/leadfield.csv");
  run_leadfield(cfg);
  CHECK(read_bytes(outdir + "/leadfield.csv") == bytes);
}

TEST_CASE("sphere validation sweep writes the error table and enforces its bound") {
  const std::string outdir = temp_dir("hybem_val_out");
  const std::string text =
      "[validate]\n"
      "radii = 0.087 0.092 0.1\n"
      "conductivity = 0.33 0.0125 0.33\n"
      "level = 1\n"
      "eccentricity = 10 70 30\n"
      "moment = 1e-8 0 1e-8\n"
      "electrodes = 24\n"
      "bound_pct = 90\n"
      "[output]\n"
      "directory = " +
      outdir + "\n";
  const RunConfig cfg = parse_run_config_text(text, "val.cfg");
  const double worst = run_validate_sphere(cfg);
  CHECK(worst > 0.0);
  CHECK(worst < 90.0);

  const auto lines = read_lines(outdir + "/sphere_validation.csv");
  REQUIRE(lines.size() == 2 + 3);
  CHECK(lines[1] == "eccentricity_pct,relative_error_pct");
  CHECK(lines[2].rfind("10,", 0) == 0);
  CHECK(lines[3].rfind("40,", 0) == 0);
  CHECK(lines[4].rfind("70,", 0) == 0);
  double table_worst = 0.0;
  for (int i = 2; i < 5; ++i)
    table_worst = std::max(table_worst, std::stod(lines[i].substr(lines[i].find(',') + 1)));
  CHECK(table_worst == doctest::Approx(worst).epsilon(1e-9));

  RunConfig strict = cfg;
  apply_override(strict, "validate.bound_pct", fmt(worst / 2));
  try {
    run_validate_sphere(strict);
    FAIL("expected the bound to fail");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::bound);
    CHECK(std::string(e.what()).find("exceeds bound") != std::string::npos);
  }
}

TEST_CASE("validation sweep rejects inconsistent sphere parameters") {
  auto expect_invalid = [](const std::string& validate_body) {
    const RunConfig cfg =
        parse_run_config_text("[validate]\n" + validate_body, "vbad.cfg");
    try {
      run_validate_sphere(cfg);
      FAIL("expected rejection of: ", validate_body);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid);
    }
  };
  expect_invalid("radii = 0.1 0.09\nconductivity = 1 1\n");
  expect_invalid("radii = 0.06 0.1\nconductivity = 1\n");
  expect_invalid("radii = 0.06 0.1\nconductivity = 1 -1\n");
  expect_invalid("eccentricity = 50 40 5\n");
  expect_invalid("eccentricity = 5 100 5\n");
  expect_invalid("electrodes = 0\n");
}

TEST_CASE("describe reports mesh and degree-of-freedom statistics") {
  TetRegion cyl = generate_cylinder_tets(0.002, 0.04, 0.004, 0.9 * Matrix3d::Identity());
  const std::string tet_path = test_helpers::write_temp("info.tet", tet_text(cyl));
  const std::string text = "[model]\nsphere = 0.1 1\nconductivity = 0.33\nregion = " +
                           tet_path + " 0\n[electrodes]\ncount = 12\n";
  const RunConfig cfg = parse_run_config_text(text, "info.cfg");
  const Study study = build_study(cfg);
  const std::string info = describe_study(cfg, study);

  CHECK(info.find("interfaces: 1") != std::string::npos);
  CHECK(info.find("42 vertices, 80 triangles") != std::string::npos);
  CHECK(info.find("electrodes: 12") != std::string::npos);
  CHECK(info.find("tet regions: 1") != std::string::npos);

  const ContrastField contrast = compute_contrast(study.model);
  const DofLayout layout = dof_layout(study.model, contrast);
  CHECK(info.find("total " + std::to_string(layout.total)) != std::string::npos);
  CHECK(layout.total > 42);  // surface hats plus active volume faces
}
