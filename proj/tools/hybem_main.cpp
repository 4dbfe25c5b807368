#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hybem/hybem.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitBound = 4;

int exit_code_for(hybem_status status) {
  switch (status) {
    case HYBEM_OK: return 0;
    case HYBEM_ERR_SOLVER: return kExitSolver;
    case HYBEM_ERR_BOUND: return kExitBound;
    default: return kExitConfig;
  }
}

struct Flags {
  std::string config_path;
  std::string threads, output, solver, quadrature;
};

void add_common_flags(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config_path, "run configuration file")
      ->required();
  cmd->add_option("--threads", flags.threads, "worker threads for assembly");
  cmd->add_option("--output", flags.output, "output directory for CSV files");
  cmd->add_option("--solver", flags.solver, "linear solver: direct or iterative");
  cmd->add_option("--quadrature-order", flags.quadrature,
                  "source integral quadrature order");
}

int report(const char* verb, hybem_status status) {
  if (status != HYBEM_OK) std::fprintf(stderr, "hybem %s: %s\n", verb, hybem_last_error());
  return exit_code_for(status);
}

// Loads the configuration and layers the command-line overrides on top.
int load_config(const Flags& flags, hybem_config** out) {
  hybem_status status = hybem_config_load(flags.config_path.c_str(), out);
  if (status != HYBEM_OK) return report("config", status);
  const std::pair<const char*, const std::string*> overrides[] = {
      {"solver.threads", &flags.threads},
      {"output.directory", &flags.output},
      {"solver.type", &flags.solver},
      {"solver.quadrature", &flags.quadrature},
  };
  for (const auto& [key, value] : overrides) {
    if (value->empty()) continue;
    status = hybem_config_set(*out, key, value->c_str());
    if (status != HYBEM_OK) return report("config", status);
  }
  return 0;
}

int run_info(const hybem_config* cfg) {
  hybem_model* model = nullptr;
  hybem_status status = hybem_model_create(cfg, &model);
  if (status != HYBEM_OK) return report("info", status);
  size_t needed = 0;
  status = hybem_model_describe(model, nullptr, 0, &needed);
  if (status == HYBEM_OK) {
    std::vector<char> text(needed + 1);
    status = hybem_model_describe(model, text.data(), text.size(), nullptr);
    if (status == HYBEM_OK) std::fputs(text.data(), stdout);
  }
  hybem_model_destroy(model);
  return report("info", status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forward potentials in nested conductors with volume and wire currents"};
  app.require_subcommand(1);

  Flags flags;
  CLI::App* cmd_solve =
      app.add_subcommand("solve", "electrode potentials for each configured dipole");
  CLI::App* cmd_leadfield =
      app.add_subcommand("leadfield", "electrode-by-component transfer matrix");
  CLI::App* cmd_validate =
      app.add_subcommand("validate-sphere", "accuracy sweep against the layered-sphere series");
  CLI::App* cmd_info = app.add_subcommand("info", "mesh and degree-of-freedom statistics");
  for (CLI::App* cmd : {cmd_solve, cmd_leadfield, cmd_validate, cmd_info})
    add_common_flags(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  hybem_config* cfg = nullptr;
  const int config_exit = load_config(flags, &cfg);
  if (config_exit != 0) {
    hybem_config_destroy(cfg);
    return config_exit;
  }

  int code = kExitConfig;
  if (cmd_solve->parsed()) {
    code = report("solve", hybem_run_solve(cfg));
  } else if (cmd_leadfield->parsed()) {
    code = report("leadfield", hybem_run_leadfield(cfg));
  } else if (cmd_validate->parsed()) {
    code = report("validate-sphere", hybem_run_validate_sphere(cfg));
  } else if (cmd_info->parsed()) {
    code = run_info(cfg);
  }
  hybem_config_destroy(cfg);
  return code;
}
