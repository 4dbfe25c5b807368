#include "hybem/hybem.h"

#include <cstring>
#include <memory>
#include <string>

#include "core/common.hpp"
#include "core/config.hpp"
#include "core/formulation.hpp"
#include "core/scenarios.hpp"

struct hybem_config {
  hybem::RunConfig cfg;
};

// Geometry and bookkeeping are realized at creation; the dense system is
// assembled and factorized lazily on the first solve.
struct hybem_model {
  hybem::RunConfig cfg;
  hybem::Study study;
  hybem::ContrastField contrast;
  hybem::DofLayout layout;
  std::unique_ptr<hybem::ForwardSolver> solver;
};

namespace {

thread_local std::string g_last_error;

hybem_status to_status(hybem::ErrorCode code) {
  switch (code) {
    case hybem::ErrorCode::io: return HYBEM_ERR_IO;
    case hybem::ErrorCode::parse: return HYBEM_ERR_PARSE;
    case hybem::ErrorCode::invalid: return HYBEM_ERR_INVALID;
    case hybem::ErrorCode::solver: return HYBEM_ERR_SOLVER;
    case hybem::ErrorCode::bound: return HYBEM_ERR_BOUND;
  }
  return HYBEM_ERR_INVALID;
}

hybem_status set_error(hybem_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs a callable, translating exceptions into status codes.
template <typename Fn>
hybem_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return HYBEM_OK;
  } catch (const hybem::Error& e) {
    return set_error(to_status(e.code()), e.what());
  } catch (const std::exception& e) {
    return set_error(HYBEM_ERR_INVALID, e.what());
  }
}

}  // namespace

extern "C" {

const char* hybem_version(void) { return hybem::kVersion; }

const char* hybem_last_error(void) { return g_last_error.c_str(); }

hybem_status hybem_config_load(const char* path, hybem_config** out) {
  if (!path || !out) return set_error(HYBEM_ERR_INVALID, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto handle = std::make_unique<hybem_config>();
    handle->cfg = hybem::parse_run_config(path);
    *out = handle.release();
  });
}

hybem_status hybem_config_set(hybem_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return set_error(HYBEM_ERR_INVALID, "null argument");
  return guarded([&] { hybem::apply_override(cfg->cfg, key, value); });
}

void hybem_config_destroy(hybem_config* cfg) { delete cfg; }

hybem_status hybem_model_create(const hybem_config* cfg, hybem_model** out) {
  if (!cfg || !out) return set_error(HYBEM_ERR_INVALID, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto handle = std::make_unique<hybem_model>();
    handle->cfg = cfg->cfg;
    handle->study = hybem::build_study(handle->cfg);
    handle->contrast = hybem::compute_contrast(handle->study.model);
    handle->layout = hybem::dof_layout(handle->study.model, handle->contrast);
    *out = handle.release();
  });
}

void hybem_model_destroy(hybem_model* m) { delete m; }

hybem_status hybem_model_dof_count(const hybem_model* m, size_t* out) {
  if (!m || !out) return set_error(HYBEM_ERR_INVALID, "null argument");
  *out = static_cast<size_t>(m->layout.total);
  g_last_error.clear();
  return HYBEM_OK;
}

hybem_status hybem_model_electrode_count(const hybem_model* m, size_t* out) {
  if (!m || !out) return set_error(HYBEM_ERR_INVALID, "null argument");
  *out = m->study.electrodes.electrodes.size();
  g_last_error.clear();
  return HYBEM_OK;
}

hybem_status hybem_model_solve_dipole(hybem_model* m, const double position[3],
                                      const double moment[3], double* phi, size_t phi_len) {
  if (!m || !position || !moment || (!phi && phi_len > 0))
    return set_error(HYBEM_ERR_INVALID, "null argument");
  return guarded([&] {
    const size_t ne = m->study.electrodes.electrodes.size();
    if (ne == 0) hybem::fail(hybem::ErrorCode::invalid, "no electrodes configured");
    if (phi_len != ne)
      hybem::fail(hybem::ErrorCode::invalid,
                  "phi_len " + std::to_string(phi_len) + " does not match the electrode count " +
                      std::to_string(ne));
    if (!m->solver)
      m->solver = std::make_unique<hybem::ForwardSolver>(m->study.model, m->cfg.solver);
    hybem::Dipole d;
    d.position = Eigen::Vector3d(position[0], position[1], position[2]);
    d.moment = Eigen::Vector3d(moment[0], moment[1], moment[2]);
    const Eigen::VectorXd v =
        hybem::mean_referenced(m->solver->potentials(d, m->study.electrode_positions()));
    for (size_t i = 0; i < ne; ++i) phi[i] = v[static_cast<int>(i)];
  });
}

hybem_status hybem_model_describe(const hybem_model* m, char* buffer, size_t cap,
                                  size_t* needed) {
  if (!m || (!buffer && cap > 0)) return set_error(HYBEM_ERR_INVALID, "null argument");
  return guarded([&] {
    const std::string text = hybem::describe_study(m->cfg, m->study);
    if (needed) *needed = text.size();
    if (buffer && cap > 0) {
      const size_t n = std::min(cap - 1, text.size());
      std::memcpy(buffer, text.data(), n);
      buffer[n] = '\0';
    }
  });
}

hybem_status hybem_run_solve(const hybem_config* cfg) {
  if (!cfg) return set_error(HYBEM_ERR_INVALID, "null argument");
  return guarded([&] { hybem::run_solve(cfg->cfg); });
}

hybem_status hybem_run_leadfield(const hybem_config* cfg) {
  if (!cfg) return set_error(HYBEM_ERR_INVALID, "null argument");
  return guarded([&] { hybem::run_leadfield(cfg->cfg); });
}

hybem_status hybem_run_validate_sphere(const hybem_config* cfg) {
  if (!cfg) return set_error(HYBEM_ERR_INVALID, "null argument");
  return guarded([&] { hybem::run_validate_sphere(cfg->cfg); });
}

}  // extern "C"
