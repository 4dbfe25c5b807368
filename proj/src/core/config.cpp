#include "core/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "core/common.hpp"

namespace hybem {

namespace {

unsigned long long fnv1a(unsigned long long state, const std::string& bytes) {
  for (const char c : bytes) {
    state ^= static_cast<unsigned char>(c);
    state *= 1099511628211ULL;
  }
  return state;
}

constexpr unsigned long long kFnvOffset = 14695981039346656037ULL;

std::string trimmed(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad(const std::string& where, const std::string& msg) {
  fail(ErrorCode::parse, where + ": " + msg);
}

// Whole-value extraction: the stream must consume everything.
template <typename... Ts>
void scan(const std::string& where, const std::string& key, const std::string& value,
          Ts&... out) {
  std::istringstream in(value);
  ((in >> out), ...);
  std::string leftover;
  if (in.fail() || (in >> leftover))
    bad(where, "malformed value for '" + key + "': '" + value + "'");
}

std::vector<double> scan_list(const std::string& where, const std::string& key,
                              const std::string& value) {
  std::istringstream in(value);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  std::string leftover;
  in.clear();
  if ((in >> leftover) || out.empty())
    bad(where, "malformed value for '" + key + "': '" + value + "'");
  return out;
}

void apply_entry(RunConfig& cfg, const std::string& section, const std::string& key,
                 const std::string& value, const std::string& where) {
  if (section == "model") {
    if (key == "surface") {
      SurfaceSpec s;
      s.path = value;
      if (value.empty()) bad(where, "surface needs a mesh path");
      cfg.surfaces.push_back(s);
    } else if (key == "sphere") {
      SurfaceSpec s;
      scan(where, key, value, s.radius, s.level);
      cfg.surfaces.push_back(s);
    } else if (key == "conductivity") {
      cfg.conductivity = scan_list(where, key, value);
    } else if (key == "region") {
      RegionSpec r;
      scan(where, key, value, r.path, r.host_layer);
      cfg.regions.push_back(r);
    } else if (key == "wires") {
      WireSpec w;
      scan(where, key, value, w.path, w.host_layer, w.max_seg_len);
      cfg.wires.push_back(w);
    } else {
      bad(where, "unknown key '" + key + "' in [model]");
    }
  } else if (section == "sources") {
    if (key == "dipole") {
      Dipole d;
      scan(where, key, value, d.position.x(), d.position.y(), d.position.z(), d.moment.x(),
           d.moment.y(), d.moment.z());
      cfg.dipoles.push_back(d);
    } else {
      bad(where, "unknown key '" + key + "' in [sources]");
    }
  } else if (section == "electrodes") {
    if (key == "file") {
      if (value.empty()) bad(where, "file needs a path");
      cfg.electrodes.path = value;
    } else if (key == "count") {
      scan(where, key, value, cfg.electrodes.count);
    } else if (key == "snap") {
      scan(where, key, value, cfg.electrodes.snap);
    } else {
      bad(where, "unknown key '" + key + "' in [electrodes]");
    }
  } else if (section == "solver") {
    if (key == "type") {
      if (value == "direct")
        cfg.solver.method = SolverOptions::Method::direct;
      else if (value == "iterative")
        cfg.solver.method = SolverOptions::Method::iterative;
      else
        bad(where, "solver type must be 'direct' or 'iterative', got '" + value + "'");
    } else if (key == "tolerance") {
      scan(where, key, value, cfg.solver.tolerance);
    } else if (key == "restart") {
      scan(where, key, value, cfg.solver.restart);
    } else if (key == "max_iterations") {
      scan(where, key, value, cfg.solver.max_iterations);
    } else if (key == "quadrature") {
      scan(where, key, value, cfg.solver.quadrature_order);
    } else if (key == "threads") {
      scan(where, key, value, cfg.threads);
    } else {
      bad(where, "unknown key '" + key + "' in [solver]");
    }
  } else if (section == "output") {
    if (key == "directory") {
      if (value.empty()) bad(where, "directory needs a path");
      cfg.output_dir = value;
    } else {
      bad(where, "unknown key '" + key + "' in [output]");
    }
  } else if (section == "validate") {
    if (key == "radii") {
      cfg.validate.radii = scan_list(where, key, value);
    } else if (key == "conductivity") {
      cfg.validate.sigma = scan_list(where, key, value);
    } else if (key == "level") {
      scan(where, key, value, cfg.validate.level);
    } else if (key == "eccentricity") {
      scan(where, key, value, cfg.validate.ecc_start, cfg.validate.ecc_stop,
           cfg.validate.ecc_step);
    } else if (key == "moment") {
      scan(where, key, value, cfg.validate.moment.x(), cfg.validate.moment.y(),
           cfg.validate.moment.z());
    } else if (key == "electrodes") {
      scan(where, key, value, cfg.validate.electrodes);
    } else if (key == "bound_pct") {
      scan(where, key, value, cfg.validate.bound_pct);
    } else {
      bad(where, "unknown key '" + key + "' in [validate]");
    }
  } else {
    bad(where, "unknown section [" + section + "]");
  }
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text, const std::string& name) {
  RunConfig cfg;
  cfg.hash_state = fnv1a(kFnvOffset, text);
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trimmed(line);
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') bad(where, "unterminated section header");
      section = trimmed(line.substr(1, line.size() - 2));
      if (section.empty()) bad(where, "empty section name");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) bad(where, "expected 'key = value'");
    const std::string key = trimmed(line.substr(0, eq));
    const std::string value = trimmed(line.substr(eq + 1));
    if (key.empty()) bad(where, "empty key");
    if (section.empty()) bad(where, "key '" + key + "' outside any [section]");
    apply_entry(cfg, section, key, value, where);
  }
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str(), path);
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  const size_t dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size())
    fail(ErrorCode::invalid, "override key must look like 'section.key', got '" + key + "'");
  apply_entry(cfg, key.substr(0, dot), key.substr(dot + 1), trimmed(value),
              "override " + key);
  cfg.hash_state = fnv1a(cfg.hash_state, "\n!" + key + "=" + value);
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", cfg.hash_state);
  return buf;
}

}  // namespace hybem
