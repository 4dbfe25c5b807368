#include <doctest.h>

#include <string>

#include "core/common.hpp"
#include "core/config.hpp"

using namespace hybem;

namespace {

template <typename Fn>
ErrorCode caught_code(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::invalid;
}

const char* kFullConfig = R"(# full example
[model]
surface = meshes/brain.surf
sphere = 0.092 2
sphere = 0.1 3
conductivity = 0.33 0.0125 0.33
region = meshes/white.tet 0
wires = meshes/tracts.wire 0 0.002

[sources]
dipole = 0 0 0.05  1e-8 0 1e-8
dipole = 0.01 0 0.06  0 0 2e-8

[electrodes]
file = layouts/cap.txt
snap = 0.015

[solver]
type = iterative
tolerance = 1e-9
restart = 60
max_iterations = 500
quadrature = 4
threads = 2

[output]
directory = results

[validate]
radii = 0.06 0.1
conductivity = 1.0 0.33
level = 2
eccentricity = 10 90 20
moment = 0 1 0
electrodes = 48
bound_pct = 7.5
)";

}  // namespace

TEST_CASE("config parser reads every section") {
  const RunConfig cfg = parse_run_config_text(kFullConfig, "full.cfg");

  REQUIRE(cfg.surfaces.size() == 3);
  CHECK(cfg.surfaces[0].path == "meshes/brain.surf");
  CHECK(cfg.surfaces[1].path.empty());
  CHECK(cfg.surfaces[1].radius == 0.092);
  CHECK(cfg.surfaces[1].level == 2);
  CHECK(cfg.surfaces[2].radius == 0.1);
  REQUIRE(cfg.conductivity.size() == 3);
  CHECK(cfg.conductivity[1] == 0.0125);
  REQUIRE(cfg.regions.size() == 1);
  CHECK(cfg.regions[0].path == "meshes/white.tet");
  CHECK(cfg.regions[0].host_layer == 0);
  REQUIRE(cfg.wires.size() == 1);
  CHECK(cfg.wires[0].max_seg_len == 0.002);

  REQUIRE(cfg.dipoles.size() == 2);
  CHECK(cfg.dipoles[0].position.z() == 0.05);
  CHECK(cfg.dipoles[1].moment.z() == 2e-8);

  CHECK(cfg.electrodes.path == "layouts/cap.txt");
  CHECK(cfg.electrodes.count == 0);
  CHECK(cfg.electrodes.snap == 0.015);

  CHECK(cfg.solver.method == SolverOptions::Method::iterative);
  CHECK(cfg.solver.tolerance == 1e-9);
  CHECK(cfg.solver.restart == 60);
  CHECK(cfg.solver.max_iterations == 500);
  CHECK(cfg.solver.quadrature_order == 4);
  CHECK(cfg.threads == 2);
  CHECK(cfg.output_dir == "results");

  CHECK(cfg.validate.radii == std::vector<double>{0.06, 0.1});
  CHECK(cfg.validate.sigma == std::vector<double>{1.0, 0.33});
  CHECK(cfg.validate.level == 2);
  CHECK(cfg.validate.ecc_start == 10);
  CHECK(cfg.validate.ecc_stop == 90);
  CHECK(cfg.validate.ecc_step == 20);
  CHECK(cfg.validate.moment == Eigen::Vector3d(0, 1, 0));
  CHECK(cfg.validate.electrodes == 48);
  CHECK(cfg.validate.bound_pct == 7.5);

  CHECK(config_hash(cfg).size() == 16);
}

TEST_CASE("config defaults survive an empty file") {
  const RunConfig cfg = parse_run_config_text("", "empty.cfg");
  CHECK(cfg.surfaces.empty());
  CHECK(cfg.dipoles.empty());
  CHECK(cfg.solver.method == SolverOptions::Method::direct);
  CHECK(cfg.solver.tolerance == 1e-8);
  CHECK(cfg.solver.quadrature_order == 3);
  CHECK(cfg.electrodes.snap == 0.02);
  CHECK(cfg.output_dir == "out");
  CHECK(cfg.validate.radii == std::vector<double>{0.087, 0.092, 0.1});
  CHECK(cfg.validate.bound_pct == 5.0);
}

TEST_CASE("config parser rejects malformed input with its location") {
  auto expect_parse = [](const std::string& text, const std::string& fragment) {
    try {
      parse_run_config_text(text, "bad.cfg");
      FAIL("expected a parse error for: ", text);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::parse);
      const std::string what = e.what();
      CHECK(what.find("bad.cfg:") != std::string::npos);
      CAPTURE(what);
      CHECK(what.find(fragment) != std::string::npos);
    }
  };
  expect_parse("[model]\nsurfaces = a.surf\n", "unknown key 'surfaces'");
  expect_parse("[head]\nsurface = a.surf\n", "unknown section [head]");
  expect_parse("[model]\nsurface a.surf\n", "expected 'key = value'");
  expect_parse("surface = a.surf\n", "outside any [section]");
  expect_parse("[model]\nsphere = 0.1\n", "malformed value");
  expect_parse("[model]\nsphere = 0.1 3 junk\n", "malformed value");
  expect_parse("[solver]\ntype = cholesky\n", "'direct' or 'iterative'");
  expect_parse("[model\nsurface = a.surf\n", "unterminated section header");
  expect_parse("[sources]\ndipole = 1 2 3\n", "malformed value");
  expect_parse("[model]\nconductivity =\n", "malformed value");
}

TEST_CASE("missing config file is an io error") {
  CHECK(caught_code([] { parse_run_config("/nonexistent/run.cfg"); }) == ErrorCode::io);
}

TEST_CASE("overrides rewrite entries and change the hash") {
  RunConfig cfg = parse_run_config_text(kFullConfig, "full.cfg");
  const std::string h0 = config_hash(cfg);

  apply_override(cfg, "solver.type", "direct");
  CHECK(cfg.solver.method == SolverOptions::Method::direct);
  const std::string h1 = config_hash(cfg);
  CHECK(h1 != h0);

  apply_override(cfg, "output.directory", "elsewhere");
  CHECK(cfg.output_dir == "elsewhere");
  CHECK(config_hash(cfg) != h1);

  apply_override(cfg, "sources.dipole", "0 0 0.01 1e-8 0 0");
  CHECK(cfg.dipoles.size() == 3);

  CHECK(caught_code([&] { apply_override(cfg, "solver", "direct"); }) == ErrorCode::invalid);
  CHECK(caught_code([&] { apply_override(cfg, "solver.mode", "direct"); }) ==
        ErrorCode::parse);
}

TEST_CASE("identical config text hashes identically") {
  const RunConfig a = parse_run_config_text(kFullConfig, "a.cfg");
  const RunConfig b = parse_run_config_text(kFullConfig, "b.cfg");
  CHECK(config_hash(a) == config_hash(b));
  const RunConfig c = parse_run_config_text(std::string(kFullConfig) + "\n# trailing\n", "c.cfg");
  CHECK(config_hash(c) != config_hash(a));
}
