// Command-line front end: check | simulate | couple | mixing | gramian.
// Exit codes: 0 ok, 1 assertion failure, 2 config error, 3 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "peqs/config.hpp"
#include "peqs/dynamics.hpp"
#include "peqs/mixing.hpp"
#include "peqs/rednoise.hpp"
#include "peqs/snapshot.hpp"
#include "peqs/spectral.hpp"
#include "peqs/timestep.hpp"
#include "peqs/version.hpp"

using namespace peqs;

namespace {

bool quiet = false;

void say(const std::string& line) {
  if (!quiet) std::cout << line << "\n";
}

std::vector<std::string> report_header(const RunConfig& cfg, const std::string& what) {
  return {
      std::string(kVersion) + " " + what,
      "config_hash=" + config_hash_hex(cfg),
      "noise_truncation I_max=" + std::to_string(cfg.noise.I_max) +
          " J_max=" + std::to_string(cfg.noise.J_max) + " alpha=" +
          detail::format_real(cfg.noise.alpha) + " beta=" + detail::format_real(cfg.noise.beta) +
          " b0=" + detail::format_real(cfg.noise.b0),
      "dt=" + detail::format_real(cfg.dt) + " seed=" + std::to_string(cfg.master_seed),
  };
}

void write_failures(const RunConfig& cfg, const std::vector<std::string>& names) {
  std::filesystem::create_directories(cfg.out_dir);
  nlohmann::json j;
  j["failures"] = names;
  j["config_hash"] = config_hash_hex(cfg);
  std::ofstream os(cfg.out_dir + "/failures.json");
  os << j.dump(2) << "\n";
}

SpectralField initial_state(const RunConfig& cfg, const std::string& init_snapshot, int index,
                            Real norm_vm) {
  if (!init_snapshot.empty()) return load_snapshot(init_snapshot);
  SpectralField u0 = random_band_field(
      cfg.grid, derive_key({cfg.master_seed, 0x1717u, static_cast<std::uint64_t>(index)}), true,
      1.0);
  const Real nm = sobolev_norm(u0, cfg.grid.m_sobolev);
  if (nm > 0) u0 *= norm_vm / nm;
  return u0;
}

// ---------------------------------------------------------------- check

struct SuiteResult {
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<SuiteResult> run_check_suites(const RunConfig& cfg) {
  const GridSpec& g = cfg.grid;
  std::vector<SuiteResult> out;
  char buf[256];

  {  // advection energy pairing
    Real worst = 0;
    for (int t = 0; t < 100; ++t) {
      const SpectralField u = random_band_field(g, 10000 + static_cast<std::uint64_t>(t), true);
      const SpectralField v = random_band_field(g, 20000 + static_cast<std::uint64_t>(t), false);
      worst = std::max(worst, std::abs(inner_l2(advect(u, v), v)) /
                                  (sobolev_norm(u, 1) * std::pow(sobolev_norm(v, 1), 2)));
    }
    std::snprintf(buf, sizeof buf, "max relative pairing %.2e (tol 1e-11)", worst);
    out.push_back({"advection_energy_pairing", worst <= 1e-11, buf});
  }
  {  // projection
    Real idem = 0, ortho = 0, baro = 0;
    for (int t = 0; t < 100; ++t) {
      const SpectralField v =
          random_field(g, 30000 + static_cast<std::uint64_t>(t), 7, 7, 8, false, 1.0);
      const SpectralField pv = project(v);
      idem = std::max(idem, sobolev_norm(project(pv) - pv, 0));
      ortho = std::max(ortho, std::abs(inner_l2(pv, v - pv)));
      baro = std::max(baro, pv.barotropic_divergence());
    }
    std::snprintf(buf, sizeof buf, "idem %.2e ortho %.2e div %.2e (tol 1e-12)", idem, ortho, baro);
    out.push_back({"orthogonal_projection", idem <= 1e-12 && ortho <= 1e-12 && baro <= 1e-12, buf});
  }
  {  // Poincare
    const Real lam1 = lambda_min(g);
    bool ok = true;
    for (int t = 0; t < 100; ++t) {
      const SpectralField v = random_band_field(g, 40000 + static_cast<std::uint64_t>(t), true);
      ok = ok && sobolev_norm(v, 0) * std::sqrt(lam1) <= sobolev_norm(v, 1) * (1 + 1e-12);
    }
    std::snprintf(buf, sizeof buf, "lambda1 = %.6f", lam1);
    out.push_back({"poincare", ok, buf});
  }
  {  // projected-operator contraction + estimate audit
    Real worst_ratio = 0;
    bool contract = true;
    for (int t = 0; t < 100; ++t) {
      const SpectralField u = random_band_field(g, 50000 + static_cast<std::uint64_t>(t), true);
      const SpectralField v = random_band_field(g, 60000 + static_cast<std::uint64_t>(t), true);
      const SpectralField b = advect(u, v);
      contract = contract && sobolev_norm(project(b), 0) <= sobolev_norm(b, 0) * (1 + 1e-12);
      worst_ratio = std::max(worst_ratio,
                             sobolev_norm(b, 0) / std::min(sobolev_norm(u, 3) * sobolev_norm(v, 1),
                                                           sobolev_norm(u, 1) * sobolev_norm(v, 3)));
    }
    std::snprintf(buf, sizeof buf, "||B|| <= ||b||; empirical C = %.3f over 100 pairs",
                  worst_ratio);
    out.push_back({"bilinear_estimate_audit", contract && std::isfinite(worst_ratio), buf});
  }
  {  // duality
    Real worst = 0;
    for (int t = 0; t < 100; ++t) {
      const SpectralField u = random_band_field(g, 70000 + static_cast<std::uint64_t>(t), true);
      const SpectralField v = random_band_field(g, 80000 + static_cast<std::uint64_t>(t), true);
      const SpectralField w = random_band_field(g, 90000 + static_cast<std::uint64_t>(t), true);
      worst = std::max(worst, std::abs(inner_l2(tangent_rhs({v, u}), w) -
                                       inner_l2(v, adjoint_rhs(u, w))) /
                                  (sobolev_norm(u, 0) * sobolev_norm(v, 0) * sobolev_norm(w, 0)));
    }
    std::snprintf(buf, sizeof buf, "max mismatch %.2e (tol 1e-10)", worst);
    out.push_back({"adjoint_duality", worst <= 1e-10, buf});
  }
  {  // noise bound
    RedNoiseSpec spec = cfg.noise;
    spec.m_sobolev = g.m_sobolev;
    const NoiseBasis basis(spec, g);
    const Real bound = spec.sup_bound();
    int violations = 0;
    const int nt = 1 << (spec.J_max + 2);
    for (int s = 0; s < 50; ++s) {
      const NoiseSegment seg = draw_segment(spec, cfg.master_seed, s);
      for (int i = 0; i <= nt; ++i)
        if (std::pow(sobolev_norm(basis.evaluate(seg, static_cast<Real>(i) / nt), spec.m_sobolev),
                     2) > bound)
          ++violations;
    }
    std::snprintf(buf, sizeof buf, "%d violations over 50 segments (bound %.4f)", violations,
                  bound);
    out.push_back({"noise_pathwise_bound", violations == 0, buf});
  }
  return out;
}

int cmd_check(const RunConfig& cfg) {
  const std::vector<SuiteResult> results = run_check_suites(cfg);
  std::vector<std::string> failed;
  std::size_t width = 0;
  for (const SuiteResult& r : results) width = std::max(width, r.name.size());
  for (const SuiteResult& r : results) {
    if (!quiet)
      std::printf("%s  %-*s  %s\n", r.pass ? "PASS" : "FAIL", static_cast<int>(width),
                  r.name.c_str(), r.detail.c_str());
    if (!r.pass) failed.push_back(r.name);
  }
  if (!failed.empty()) {
    write_failures(cfg, failed);
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const RunConfig& cfg, const std::string& init_snapshot, bool zero_noise) {
  std::filesystem::create_directories(cfg.out_dir);
  RedNoiseSpec noise = cfg.noise;
  noise.m_sobolev = cfg.grid.m_sobolev;
  if (zero_noise) noise.I_max = 0;

  SpectralField u = initial_state(cfg, init_snapshot, 0, 1.0);
  std::ofstream norms(cfg.out_dir + "/norms.csv");
  norms.precision(17);
  for (const std::string& line : report_header(cfg, "simulate")) norms << "# " << line << "\n";
  norms << "t,L2,Vm,primed\n";
  const StepperConfig step = cfg.stepper();
  auto emit = [&](Real t, const SpectralField& v) {
    norms << t << "," << sobolev_norm(v, 0) << "," << sobolev_norm(v, cfg.grid.m_sobolev) << ","
          << primed_norm(v) << "\n";
  };
  emit(0.0, u);
  save_checkpoint(u, 0.0, cfg.out_dir + "/state_0000.peqs");
  for (int k = 0; k < cfg.steps; ++k) {
    const NoiseSegment seg = draw_segment(noise, cfg.master_seed, k);
    const NoiseBasis& nb = noise_basis_for(noise, cfg.grid);
    Forcing f = [&](Real t, LimitSide side) { return nb.evaluate(seg, t, side); };
    const Trajectory traj = solve(u, f, step);
    for (long i = 1; i <= step.steps(); ++i)
      emit(k + traj.t_of(static_cast<int>(i)), traj.states[static_cast<std::size_t>(i)]);
    u = traj.back();
    char name[64];
    std::snprintf(name, sizeof name, "state_%04d.peqs", k + 1);
    save_checkpoint(u, static_cast<Real>(k + 1), cfg.out_dir + "/" + name);
  }
  say("wrote " + cfg.out_dir + "/norms.csv and " + std::to_string(cfg.steps + 1) + " checkpoints");
  return 0;
}

// ---------------------------------------------------------------- couple

int cmd_couple(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  RedNoiseSpec noise = cfg.noise;
  noise.m_sobolev = cfg.grid.m_sobolev;
  SpectralField u0 = initial_state(cfg, "", 0, 1.5);
  SpectralField dir = random_band_field(cfg.grid, derive_key({cfg.master_seed, 0xD17u}), true, 1.0);
  dir *= 1.0 / sobolev_norm(dir, cfg.grid.m_sobolev);
  SpectralField u0p = u0;
  u0p.axpy(cfg.pair_distance, dir);
  const CouplingSeries cs =
      run_coupled(u0, u0p, cfg.steps, noise, cfg.master_seed, cfg.stepper());
  write_coupling_csv(cfg.out_dir + "/coupling.csv", cs, report_header(cfg, "couple"));
  say("wrote " + cfg.out_dir + "/coupling.csv; mean contraction " +
      std::to_string(cs.mean_contraction()));
  return 0;
}

// ---------------------------------------------------------------- mixing

int cmd_mixing(const RunConfig& cfg, int initial_index) {
  std::filesystem::create_directories(cfg.out_dir);
  MixingParams prm;
  prm.noise = cfg.noise;
  prm.noise.m_sobolev = cfg.grid.m_sobolev;
  prm.stepper = cfg.stepper();
  prm.n_steps = cfg.steps;
  prm.ensemble = cfg.ensemble;
  prm.burn_in = cfg.burn_in;
  prm.ref_size = cfg.ref_size;
  prm.subsample = cfg.subsample;
  prm.random_probes = cfg.probes;
  prm.coordinate_probes = cfg.coordinate_probes;
  prm.master_seed = cfg.master_seed;
  prm.threads = cfg.threads;

  const SpectralField u0 = initial_state(cfg, "", initial_index, 2.0);
  const MixingReport rep = mixing_experiment(u0, prm);
  write_mixing_csv(cfg.out_dir + "/mixing.csv", rep, report_header(cfg, "mixing"));
  char line[160];
  std::snprintf(line, sizeof line, "wrote %s/mixing.csv; kappa=%.4f r2=%.3f (%s)",
                cfg.out_dir.c_str(), rep.kappa, rep.r2, rep.fit_message.c_str());
  say(line);
  return 0;
}

// ---------------------------------------------------------------- gramian

int cmd_gramian(const RunConfig& cfg, bool generic) {
  std::filesystem::create_directories(cfg.out_dir);
  RedNoiseSpec noise = cfg.noise;
  noise.m_sobolev = cfg.grid.m_sobolev;
  SpectralField u0(cfg.grid);
  NoiseSegment seg;
  if (generic) {
    u0 = initial_state(cfg, "", 0, 1.5);
    seg = draw_segment(noise, cfg.master_seed, 0);
  } else {
    noise.I_max = 0;
    seg = draw_segment(noise, cfg.master_seed, 0);
  }
  const GramianReport rep = gramian_nondegeneracy(u0, seg, cfg.n_probe_modes, cfg.n_time_slots,
                                                  cfg.stepper(), cfg.threads);
  write_gramian_csv(cfg.out_dir + "/gramian.csv", rep, report_header(cfg, "gramian"));
  char line[160];
  std::snprintf(line, sizeof line, "wrote %s/gramian.csv; lambda_min=%.6e cond=%.3e",
                cfg.out_dir.c_str(), rep.eigenvalues(0), rep.condition);
  say(line);
  return rep.eigenvalues(0) > 0.0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kVersion) +
               " - spectral simulator and verification harness for the reduced "
               "primitive equations under bounded Haar-series forcing"};
  app.require_subcommand(1);

  std::string config_path, out_dir, init_snapshot;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps, ensemble, threads;
  app.add_option("--config", config_path, "flat key=value configuration file");
  app.add_option("--seed", seed, "master seed override");
  app.add_option("--out", out_dir, "output directory override");
  app.add_option("--steps", steps, "chain steps override");
  app.add_option("--ensemble", ensemble, "ensemble size override");
  app.add_option("--threads", threads, "worker threads override");
  app.add_flag("--quiet", quiet, "suppress progress output");

  CLI::App* check = app.add_subcommand("check", "run the invariant suite, exit 0 iff all pass");
  CLI::App* simulate = app.add_subcommand("simulate", "integrate one chain, write norms + snapshots");
  bool zero_noise = false;
  simulate->add_flag("--zero-noise", zero_noise, "disable the forcing");
  simulate->add_option("--init", init_snapshot, "initial state snapshot (PEQS file)");
  CLI::App* couple = app.add_subcommand("couple", "same-noise coupled pair, write coupling.csv");
  CLI::App* mixing = app.add_subcommand("mixing", "mixing experiment, write mixing.csv");
  int initial_index = 0;
  mixing->add_option("--initial-index", initial_index, "which deterministic initial state");
  CLI::App* gramian = app.add_subcommand("gramian", "derivative-response Gramian, write gramian.csv");
  bool generic = false;
  gramian->add_flag("--generic", generic, "use a random base state and segment");

  CLI11_PARSE(app, argc, argv);

  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    apply_env_overrides(cfg);
    if (seed) cfg.master_seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (steps) cfg.steps = *steps;
    if (ensemble) cfg.ensemble = *ensemble;
    if (threads) cfg.threads = *threads;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    say(std::string(kVersion) + " config_hash=" + config_hash_hex(cfg));
    if (*check) return cmd_check(cfg);
    if (*simulate) return cmd_simulate(cfg, init_snapshot, zero_noise);
    if (*couple) return cmd_couple(cfg);
    if (*mixing) return cmd_mixing(cfg, initial_index);
    if (*gramian) return cmd_gramian(cfg, generic);
  } catch (const AbsorbingSetViolation& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    write_failures(cfg, {"absorbing_set"});
    return 3;
  } catch (const NonFiniteState& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    write_failures(cfg, {"non_finite_state"});
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
