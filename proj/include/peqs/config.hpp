#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "peqs/grid.hpp"
#include "peqs/rednoise.hpp"
#include "peqs/timestep.hpp"

namespace peqs {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Full run configuration: flat key=value schema, no nesting. Unknown keys
/// are errors. Defaults are the desk-scale configuration.
struct RunConfig {
  GridSpec grid;                 // L, h, Nx, Ny, Nz, m, delta
  RedNoiseSpec noise;            // I_max, J_max, alpha, beta, b0 (+ m from grid)
  Real dt = std::ldexp(1.0, -7);
  Real monitor_K = 0.0;          // 0 disables the absorbing-set monitor
  std::uint64_t master_seed = 1;
  int steps = 50;
  int ensemble = 64;
  int burn_in = 50;
  int ref_size = 128;
  int subsample = 5;
  int probes = 48;               // random probe directions
  int coordinate_probes = 16;
  int n_probe_modes = 10;
  int n_time_slots = 1;
  Real pair_distance = 1e-3;
  int threads = 2;
  std::string out_dir = "out";

  StepperConfig stepper(Real t_end = 1.0) const {
    StepperConfig c;
    c.dt = dt;
    c.t_end = t_end;
    if (monitor_K > 0.0) c.monitor_K = monitor_K;
    return c;
  }

  void validate() const {
    try {
      grid.validate();
      RedNoiseSpec n = noise;
      n.m_sobolev = grid.m_sobolev;
      n.validate();
      StepperConfig sc = stepper();
      sc.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (stepper().dyadic_exponent() < noise.J_max)
      throw ConfigError("dt: must be 2^-p with p >= J_max (steps may not straddle noise jumps)");
    if (steps < 1) throw ConfigError("steps: must be >= 1");
    if (ensemble < 1) throw ConfigError("ensemble: must be >= 1");
    if (burn_in < 0) throw ConfigError("burn_in: must be >= 0");
    if (ref_size < 1) throw ConfigError("ref_size: must be >= 1");
    if (subsample < 1) throw ConfigError("subsample: must be >= 1");
    if (probes < 0 || coordinate_probes < 0) throw ConfigError("probes: must be >= 0");
    if (n_probe_modes < 1) throw ConfigError("n_probe_modes: must be >= 1");
    if (n_time_slots < 1) throw ConfigError("n_time_slots: must be >= 1");
    if (!(pair_distance > 0.0)) throw ConfigError("pair_distance: must be > 0");
    if (threads < 1) throw ConfigError("threads: must be >= 1");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline Real parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const Real r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: '" + v + "'");
  }
}

inline long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long r = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not an integer: '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::uint64_t>(r);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not an unsigned integer: '" + v + "'");
  }
}

inline std::string format_real(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Applies one key=value assignment. Throws ConfigError for unknown keys or
/// malformed values.
inline void config_set(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_int;
  using detail::parse_real;
  using detail::parse_u64;
  if (key == "L") c.grid.L = parse_real(key, value);
  else if (key == "h") c.grid.h = parse_real(key, value);
  else if (key == "Nx") c.grid.Nx = static_cast<int>(parse_int(key, value));
  else if (key == "Ny") c.grid.Ny = static_cast<int>(parse_int(key, value));
  else if (key == "Nz") c.grid.Nz = static_cast<int>(parse_int(key, value));
  else if (key == "m") c.grid.m_sobolev = static_cast<int>(parse_int(key, value));
  else if (key == "delta") c.grid.delta = parse_real(key, value);
  else if (key == "dt") c.dt = parse_real(key, value);
  else if (key == "monitor_K") c.monitor_K = parse_real(key, value);
  else if (key == "I_max") c.noise.I_max = static_cast<int>(parse_int(key, value));
  else if (key == "J_max") c.noise.J_max = static_cast<int>(parse_int(key, value));
  else if (key == "alpha") c.noise.alpha = parse_real(key, value);
  else if (key == "beta") c.noise.beta = parse_real(key, value);
  else if (key == "b0") c.noise.b0 = parse_real(key, value);
  else if (key == "seed") c.master_seed = parse_u64(key, value);
  else if (key == "steps") c.steps = static_cast<int>(parse_int(key, value));
  else if (key == "ensemble") c.ensemble = static_cast<int>(parse_int(key, value));
  else if (key == "burn_in") c.burn_in = static_cast<int>(parse_int(key, value));
  else if (key == "ref_size") c.ref_size = static_cast<int>(parse_int(key, value));
  else if (key == "subsample") c.subsample = static_cast<int>(parse_int(key, value));
  else if (key == "probes") c.probes = static_cast<int>(parse_int(key, value));
  else if (key == "coordinate_probes") c.coordinate_probes = static_cast<int>(parse_int(key, value));
  else if (key == "n_probe_modes") c.n_probe_modes = static_cast<int>(parse_int(key, value));
  else if (key == "n_time_slots") c.n_time_slots = static_cast<int>(parse_int(key, value));
  else if (key == "pair_distance") c.pair_distance = parse_real(key, value);
  else if (key == "threads") c.threads = static_cast<int>(parse_int(key, value));
  else if (key == "out_dir") c.out_dir = value;
  else throw ConfigError("unknown key '" + key + "'");
}

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "L",       "h",        "Nx",       "Ny",       "Nz",        "m",
      "delta",   "dt",       "monitor_K", "I_max",   "J_max",     "alpha",
      "beta",    "b0",       "seed",     "steps",    "ensemble",  "burn_in",
      "ref_size", "subsample", "probes", "coordinate_probes", "n_probe_modes",
      "n_time_slots", "pair_distance", "threads",   "out_dir"};
  return keys;
}

inline std::string config_get(const RunConfig& c, const std::string& key) {
  using detail::format_real;
  if (key == "L") return format_real(c.grid.L);
  if (key == "h") return format_real(c.grid.h);
  if (key == "Nx") return std::to_string(c.grid.Nx);
  if (key == "Ny") return std::to_string(c.grid.Ny);
  if (key == "Nz") return std::to_string(c.grid.Nz);
  if (key == "m") return std::to_string(c.grid.m_sobolev);
  if (key == "delta") return format_real(c.grid.delta);
  if (key == "dt") return format_real(c.dt);
  if (key == "monitor_K") return format_real(c.monitor_K);
  if (key == "I_max") return std::to_string(c.noise.I_max);
  if (key == "J_max") return std::to_string(c.noise.J_max);
  if (key == "alpha") return format_real(c.noise.alpha);
  if (key == "beta") return format_real(c.noise.beta);
  if (key == "b0") return format_real(c.noise.b0);
  if (key == "seed") return std::to_string(c.master_seed);
  if (key == "steps") return std::to_string(c.steps);
  if (key == "ensemble") return std::to_string(c.ensemble);
  if (key == "burn_in") return std::to_string(c.burn_in);
  if (key == "ref_size") return std::to_string(c.ref_size);
  if (key == "subsample") return std::to_string(c.subsample);
  if (key == "probes") return std::to_string(c.probes);
  if (key == "coordinate_probes") return std::to_string(c.coordinate_probes);
  if (key == "n_probe_modes") return std::to_string(c.n_probe_modes);
  if (key == "n_time_slots") return std::to_string(c.n_time_slots);
  if (key == "pair_distance") return format_real(c.pair_distance);
  if (key == "threads") return std::to_string(c.threads);
  if (key == "out_dir") return c.out_dir;
  throw ConfigError("unknown key '" + key + "'");
}

/// Canonical serialization: every key in schema order, one per line.
inline std::string config_canonical(const RunConfig& c) {
  std::ostringstream os;
  for (const std::string& k : config_keys()) os << k << "=" << config_get(c, k) << "\n";
  return os.str();
}

/// FNV-1a 64-bit over the canonical serialization. Identical configuration
/// text yields an identical hash on every platform.
inline std::uint64_t config_hash(const RunConfig& c) {
  std::uint64_t hash = 0xCBF29CE484222325ull;
  for (const char ch : config_canonical(c)) {
    hash ^= static_cast<unsigned char>(ch);
    hash *= 0x100000001B3ull;
  }
  return hash;
}

inline std::string config_hash_hex(const RunConfig& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  return buf;
}

/// Parses flat key=value text; '#' starts a comment, blank lines are
/// skipped. The noise's Sobolev exponent is tied to the grid's m.
inline RunConfig parse_config_text(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    config_set(c, key, value);
  }
  c.noise.m_sobolev = c.grid.m_sobolev;
  c.validate();
  return c;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

/// Environment overrides: PEQS_<KEY>=value for every schema key.
inline void apply_env_overrides(RunConfig& c) {
  for (const std::string& k : config_keys()) {
    const std::string var = "PEQS_" + k;
    if (const char* v = std::getenv(var.c_str())) config_set(c, k, v);
  }
  c.noise.m_sobolev = c.grid.m_sobolev;
}

}  // namespace peqs
