#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "peqs/field.hpp"
#include "peqs/grid.hpp"
#include "peqs/rednoise.hpp"
#include "peqs/rng.hpp"
#include "peqs/spectral.hpp"
#include "peqs/timestep.hpp"

namespace peqs {

struct EmptyEnsemble : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Ordered parallel map: work item i writes only its own slot, and any
/// exception is rethrown after all workers join, so results do not depend
/// on completion order.
inline void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, std::min(threads, n));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i; (i = next.fetch_add(1)) < n;) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------- chains

/// One state of the integer-time Markov chain, with the seed lineage of the
/// segment it will consume next.
struct ChainState {
  SpectralField field;
  int step = 0;
  std::uint64_t master_seed = 0;
  std::int64_t interval_index = 0;
};

/// Iterates the unit-time map with per-interval noise segments. The k-th
/// transition consumes draw_segment(noise, master_seed, k), so a fixed
/// (master_seed, config) reproduces the chain bit-for-bit.
inline std::vector<ChainState> run_chain(const SpectralField& u0, int n_steps,
                                         const RedNoiseSpec& noise, std::uint64_t master_seed,
                                         const StepperConfig& cfg) {
  std::vector<ChainState> states;
  states.reserve(static_cast<std::size_t>(n_steps) + 1);
  states.push_back({u0, 0, master_seed, 0});
  SpectralField u = u0;
  for (int k = 0; k < n_steps; ++k) {
    const NoiseSegment seg = draw_segment(noise, master_seed, k);
    u = time_one_map(u, seg, cfg);
    states.push_back({u, k + 1, master_seed, k + 1});
  }
  return states;
}

/// Difference norms of two chains driven by identical noise.
struct CouplingSeries {
  std::vector<Real> l2, vm, primed;  ///< per step k = 0..n_steps

  /// Geometric-mean contraction factor per step (skips zero entries).
  Real mean_contraction() const {
    Real acc = 0.0;
    int cnt = 0;
    for (std::size_t k = 1; k < l2.size(); ++k) {
      if (l2[k - 1] > 0.0 && l2[k] > 0.0) {
        acc += std::log(l2[k] / l2[k - 1]);
        ++cnt;
      }
    }
    return cnt == 0 ? 0.0 : std::exp(acc / cnt);
  }
};

inline CouplingSeries run_coupled(const SpectralField& u0, const SpectralField& u0p, int n_steps,
                                  const RedNoiseSpec& noise, std::uint64_t master_seed,
                                  const StepperConfig& cfg) {
  if (!u0.grid().same_layout(u0p.grid()))
    throw std::invalid_argument("run_coupled: grids differ");
  CouplingSeries out;
  SpectralField a = u0, b = u0p;
  const int m = u0.grid().m_sobolev;
  auto record = [&] {
    const SpectralField d = a - b;
    out.l2.push_back(sobolev_norm(d, 0));
    out.vm.push_back(sobolev_norm(d, m));
    out.primed.push_back(primed_norm(d));
  };
  record();
  for (int k = 0; k < n_steps; ++k) {
    const NoiseSegment seg = draw_segment(noise, master_seed, k);
    a = time_one_map(a, seg, cfg);
    b = time_one_map(b, seg, cfg);
    record();
  }
  return out;
}

// ------------------------------------------- dual-Lipschitz distance

/// Finite dictionary of bounded-Lipschitz test functionals. Every
/// functional is a saturating wrapper around a centered linear probe
///   s = <u - center, phi>_{L^2},  ||phi||_{L^2} = 1,
/// normalized so sup|g| + Lip(g) <= 1:
///   tanh family:  g = tanh(sigma s) / (1 + sigma),
///   clamp family: g = clamp((1-a) s, -a, +a).
/// The dictionary is fixed data: for a fixed dictionary the estimate is a
/// pseudo-metric (max of pseudo-metrics) and a lower bound of the true
/// dual-Lipschitz distance.
struct TestFunctionalDictionary {
  std::vector<SpectralField> directions;
  std::vector<Real> tanh_scales{0.5, 1.0, 2.0, 4.0};
  std::vector<Real> clamp_levels{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  SpectralField center;

  int functional_count() const {
    return static_cast<int>(directions.size()) *
           static_cast<int>(tanh_scales.size() + clamp_levels.size());
  }
};

/// Random unit directions plus coordinate functionals along the lowest
/// modes of V. The center defaults to zero; callers typically recenter at a
/// reference ensemble mean before evaluating.
inline TestFunctionalDictionary make_dictionary(const GridSpec& g, int n_random,
                                                std::uint64_t seed, int n_coordinate = 16) {
  TestFunctionalDictionary dict;
  dict.center = SpectralField(g);
  const std::vector<ModeIndex> modes = enumerate_modes(g);
  n_coordinate = std::min<int>(n_coordinate, static_cast<int>(modes.size()));
  for (int i = 0; i < n_coordinate; ++i)
    dict.directions.push_back(mode_field(modes[static_cast<std::size_t>(i)], g));
  for (int p = 0; p < n_random; ++p)
    dict.directions.push_back(random_band_field(g, derive_key({seed, 0xD1C7u, static_cast<std::uint64_t>(p)}),
                                                true, 1.0));
  return dict;
}

/// Adds phi = (a - b)/||a - b|| when the difference is nonzero.
inline void add_difference_probe(TestFunctionalDictionary& dict, const SpectralField& a,
                                 const SpectralField& b) {
  SpectralField d = a - b;
  const Real nrm = sobolev_norm(d, 0);
  if (nrm > 1e-14) {
    d *= 1.0 / nrm;
    dict.directions.push_back(d);
  }
}

namespace detail {

/// Raw centered inner products: row per ensemble member, column per probe.
inline Eigen::MatrixXd raw_probe_values(const std::vector<SpectralField>& ens,
                                        const TestFunctionalDictionary& dict) {
  const int n = static_cast<int>(ens.size());
  const int d = static_cast<int>(dict.directions.size());
  Eigen::MatrixXd raw(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      raw(i, j) = inner_l2(ens[static_cast<std::size_t>(i)], dict.directions[static_cast<std::size_t>(j)]) -
                  inner_l2(dict.center, dict.directions[static_cast<std::size_t>(j)]);
  return raw;
}

/// Applies every saturating wrapper to every raw column.
inline Eigen::MatrixXd wrap_probe_values(const Eigen::MatrixXd& raw,
                                         const TestFunctionalDictionary& dict) {
  const int n = static_cast<int>(raw.rows());
  const int d = static_cast<int>(raw.cols());
  const int nt = static_cast<int>(dict.tanh_scales.size());
  const int nc = static_cast<int>(dict.clamp_levels.size());
  Eigen::MatrixXd W(n, d * (nt + nc));
  for (int j = 0; j < d; ++j) {
    for (int s = 0; s < nt; ++s) {
      const Real sg = dict.tanh_scales[static_cast<std::size_t>(s)];
      W.col(j * (nt + nc) + s) = (sg * raw.col(j).array()).tanh() / (1.0 + sg);
    }
    for (int s = 0; s < nc; ++s) {
      const Real a = dict.clamp_levels[static_cast<std::size_t>(s)];
      W.col(j * (nt + nc) + nt + s) =
          ((1.0 - a) * raw.col(j).array()).min(a).max(-a);
    }
  }
  return W;
}

inline Real dl_from_wrapped(const Eigen::MatrixXd& WA, const Eigen::MatrixXd& WB) {
  const Eigen::RowVectorXd mA = WA.colwise().mean();
  const Eigen::RowVectorXd mB = WB.colwise().mean();
  return (mA - mB).cwiseAbs().maxCoeff();
}

/// Bootstrap standard error of the estimate, resampling ensemble A members
/// with replacement against the fixed B side.
inline Real dl_bootstrap_se(const Eigen::MatrixXd& WA, const Eigen::RowVectorXd& meansB,
                            int n_boot, std::uint64_t seed) {
  const int n = static_cast<int>(WA.rows());
  CounterRng rng(seed);
  Eigen::VectorXd counts(n);
  Real acc = 0.0, acc2 = 0.0;
  for (int b = 0; b < n_boot; ++b) {
    counts.setZero();
    for (int i = 0; i < n; ++i) counts(static_cast<int>(rng.next() % static_cast<std::uint64_t>(n))) += 1.0;
    const Eigen::RowVectorXd mA = (counts.transpose() * WA) / static_cast<Real>(n);
    const Real est = (mA - meansB).cwiseAbs().maxCoeff();
    acc += est;
    acc2 += est * est;
  }
  const Real mean = acc / n_boot;
  return std::sqrt(std::max(Real(0), acc2 / n_boot - mean * mean));
}

}  // namespace detail

/// Dictionary maximum of |mean_A g - mean_B g|: a certified lower bound of
/// the dual-Lipschitz distance between the empirical laws, in [0, 2].
inline Real dual_lipschitz(const std::vector<SpectralField>& A, const std::vector<SpectralField>& B,
                           const TestFunctionalDictionary& dict) {
  if (A.empty() || B.empty()) throw EmptyEnsemble("dual_lipschitz: empty ensemble");
  const Eigen::MatrixXd WA = detail::wrap_probe_values(detail::raw_probe_values(A, dict), dict);
  const Eigen::MatrixXd WB = detail::wrap_probe_values(detail::raw_probe_values(B, dict), dict);
  return detail::dl_from_wrapped(WA, WB);
}

// ------------------------------------------------------ mixing experiment

struct MixingParams {
  RedNoiseSpec noise;
  StepperConfig stepper;
  int n_steps = 50;
  int ensemble = 64;
  int burn_in = 50;
  int ref_size = 128;
  int subsample = 5;
  int random_probes = 48;
  int coordinate_probes = 16;
  int bootstrap = 200;
  std::uint64_t master_seed = 1;
  int threads = 1;
};

struct MixingReport {
  std::vector<Real> d;   ///< distance estimate per step k = 0..n_steps
  std::vector<Real> se;  ///< bootstrap standard error per step
  Real C = 0.0;          ///< fitted prefactor of d_k ~ C kappa^k
  Real kappa = 0.0;      ///< fitted per-step decay rate
  Real r2 = 0.0;         ///< coefficient of determination of the log fit
  int fit_points = 0;
  int positive_estimates = 0;
  bool fit_ok = false;
  std::string fit_message;
};

namespace detail {

inline void fit_geometric(MixingReport& rep) {
  const int n = static_cast<int>(rep.d.size());
  rep.positive_estimates = 0;
  for (const Real v : rep.d)
    if (v > 0.0) ++rep.positive_estimates;
  if (rep.positive_estimates < 5) {
    rep.fit_ok = false;
    rep.fit_message = "fit skipped: fewer than 5 positive estimates";
    return;
  }
  // OLS on log d_k over the steps that clear twice their bootstrap error.
  std::vector<Real> xs, ys;
  for (int k = 0; k < n; ++k)
    if (rep.d[static_cast<std::size_t>(k)] > 2.0 * rep.se[static_cast<std::size_t>(k)] &&
        rep.d[static_cast<std::size_t>(k)] > 0.0) {
      xs.push_back(static_cast<Real>(k));
      ys.push_back(std::log(rep.d[static_cast<std::size_t>(k)]));
    }
  rep.fit_points = static_cast<int>(xs.size());
  if (rep.fit_points < 2) {
    rep.fit_ok = false;
    rep.fit_message = "fit skipped: fewer than 2 points above the noise floor";
    return;
  }
  Real sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const Real m = static_cast<Real>(xs.size());
  const Real denom = m * sxx - sx * sx;
  if (denom <= 0.0) {
    rep.fit_ok = false;
    rep.fit_message = "fit skipped: degenerate abscissae";
    return;
  }
  const Real slope = (m * sxy - sx * sy) / denom;
  const Real intercept = (sy - slope * sx) / m;
  Real ss_res = 0, ss_tot = 0;
  const Real ybar = sy / m;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Real fit = intercept + slope * xs[i];
    ss_res += (ys[i] - fit) * (ys[i] - fit);
    ss_tot += (ys[i] - ybar) * (ys[i] - ybar);
  }
  rep.kappa = std::exp(slope);
  rep.C = std::exp(intercept);
  rep.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  rep.fit_ok = true;
  rep.fit_message = "ok";
}

}  // namespace detail

/// Estimates the decay of the dual-Lipschitz distance between the law of
/// u_k started at u0 and an empirical stationary reference (one long chain,
/// subsampled after burn-in). Deterministic for fixed (params, u0),
/// regardless of thread count.
inline MixingReport mixing_experiment(const SpectralField& u0, const MixingParams& prm) {
  const GridSpec& g = u0.grid();
  if (prm.ensemble < 1 || prm.ref_size < 1)
    throw std::invalid_argument("mixing_experiment: empty ensemble");

  // Reference ensemble: one long chain from the origin.
  std::vector<SpectralField> refs;
  refs.reserve(static_cast<std::size_t>(prm.ref_size));
  {
    const std::uint64_t seed_ref = derive_key({prm.master_seed, 0xAEF5u});
    SpectralField u(g);
    std::int64_t interval = 0;
    for (int k = 0; k < prm.burn_in; ++k)
      u = time_one_map(u, draw_segment(prm.noise, seed_ref, interval++), prm.stepper);
    for (int s = 0; s < prm.ref_size; ++s) {
      for (int j = 0; j < prm.subsample; ++j)
        u = time_one_map(u, draw_segment(prm.noise, seed_ref, interval++), prm.stepper);
      refs.push_back(u);
    }
  }

  // Fixed dictionary: coordinate + random probes, centered at the reference
  // mean, plus the u0-to-reference direction.
  TestFunctionalDictionary dict =
      make_dictionary(g, prm.random_probes, derive_key({prm.master_seed, 0xD1C7u}),
                      prm.coordinate_probes);
  SpectralField center(g);
  for (const SpectralField& r : refs) center += r;
  center *= 1.0 / static_cast<Real>(prm.ref_size);
  dict.center = center;
  add_difference_probe(dict, u0, center);

  const Eigen::MatrixXd WRef =
      detail::wrap_probe_values(detail::raw_probe_values(refs, dict), dict);
  const Eigen::RowVectorXd meansRef = WRef.colwise().mean();

  // Ensemble of chains from u0 under independent noise streams; member e
  // stores its raw probe row for every step.
  const int n_dirs = static_cast<int>(dict.directions.size());
  std::vector<Eigen::MatrixXd> raw(static_cast<std::size_t>(prm.n_steps) + 1,
                                   Eigen::MatrixXd(prm.ensemble, n_dirs));
  Eigen::VectorXd center_off(n_dirs);
  for (int j = 0; j < n_dirs; ++j)
    center_off(j) = inner_l2(dict.center, dict.directions[static_cast<std::size_t>(j)]);

  parallel_for(prm.ensemble, prm.threads, [&](int e) {
    const std::uint64_t seed_e =
        derive_key({prm.master_seed, 0x3E5Bu, static_cast<std::uint64_t>(e)});
    SpectralField u = u0;
    for (int k = 0; k <= prm.n_steps; ++k) {
      for (int j = 0; j < n_dirs; ++j)
        raw[static_cast<std::size_t>(k)](e, j) =
            inner_l2(u, dict.directions[static_cast<std::size_t>(j)]) - center_off(j);
      if (k < prm.n_steps)
        u = time_one_map(u, draw_segment(prm.noise, seed_e, k), prm.stepper);
    }
  });

  MixingReport rep;
  rep.d.resize(static_cast<std::size_t>(prm.n_steps) + 1);
  rep.se.resize(static_cast<std::size_t>(prm.n_steps) + 1);
  for (int k = 0; k <= prm.n_steps; ++k) {
    const Eigen::MatrixXd WA = detail::wrap_probe_values(raw[static_cast<std::size_t>(k)], dict);
    rep.d[static_cast<std::size_t>(k)] = detail::dl_from_wrapped(WA, WRef);
    rep.se[static_cast<std::size_t>(k)] = detail::dl_bootstrap_se(
        WA, meansRef, prm.bootstrap,
        derive_key({prm.master_seed, 0xB007u, static_cast<std::uint64_t>(k)}));
  }
  detail::fit_geometric(rep);
  return rep;
}

// ------------------------------------------------------ gramian diagnostic

/// Gramian of noise-to-state derivative responses over a probe dictionary
/// h_a = (time-slot indicator) x (V^m-normalized low mode), assembled with
/// the tangent propagator: M[a,b] = <DS h_a, DS h_b>_{V^m}.
struct GramianReport {
  Eigen::MatrixXd gram;
  Eigen::VectorXd eigenvalues;  ///< ascending
  Real condition = 0.0;
  int n_probe_modes = 0;
  int n_time_slots = 0;
};

inline GramianReport gramian_nondegeneracy(const SpectralField& u0, const NoiseSegment& seg,
                                           int n_probe_modes, int n_time_slots,
                                           const StepperConfig& cfg, int threads = 1) {
  const GridSpec& g = u0.grid();
  if (cfg.t_end != 1.0) throw std::invalid_argument("gramian: t_end must be 1");
  if (n_probe_modes < 1 || n_time_slots < 1)
    throw std::invalid_argument("gramian: need at least one probe");
  const long steps = cfg.steps();
  if (steps % n_time_slots != 0)
    throw std::invalid_argument("gramian: time slots must align with steps");

  const NoiseBasis& basis = noise_basis_for(seg.spec, g);
  Forcing f = [&](Real t, LimitSide side) { return basis.evaluate(seg, t, side); };
  const Trajectory traj = solve(u0, f, cfg);

  const std::vector<ModeIndex> modes = enumerate_modes(g);
  if (static_cast<std::size_t>(n_probe_modes) > modes.size())
    throw std::invalid_argument("gramian: more probe modes than basis elements");
  std::vector<SpectralField> probes;
  probes.reserve(static_cast<std::size_t>(n_probe_modes));
  const int m = g.m_sobolev;
  for (int i = 0; i < n_probe_modes; ++i) {
    SpectralField e = mode_field(modes[static_cast<std::size_t>(i)], g);
    e *= std::pow(eigenvalue(modes[static_cast<std::size_t>(i)], g), -0.5 * m);
    probes.push_back(e);
  }

  const int n_probes = n_probe_modes * n_time_slots;
  std::vector<SpectralField> resp(static_cast<std::size_t>(n_probes));
  parallel_for(n_probes, threads, [&](int a) {
    const int slot = a / n_probe_modes;
    const int mode = a % n_probe_modes;
    const Real S = static_cast<Real>(n_time_slots);
    Forcing h = [&](Real t, LimitSide side) {
      const Real scaled = t * S;
      long p = side == LimitSide::right ? static_cast<long>(std::floor(scaled))
                                        : static_cast<long>(std::ceil(scaled)) - 1;
      p = std::min(std::max(p, 0L), static_cast<long>(n_time_slots) - 1);
      SpectralField out(g);
      if (p == slot) out = probes[static_cast<std::size_t>(mode)];
      return out;
    };
    resp[static_cast<std::size_t>(a)] = tangent_propagate(SpectralField(g), traj, 0.0, 1.0, h);
  });

  GramianReport rep;
  rep.n_probe_modes = n_probe_modes;
  rep.n_time_slots = n_time_slots;
  rep.gram.resize(n_probes, n_probes);
  for (int a = 0; a < n_probes; ++a)
    for (int b = a; b < n_probes; ++b) {
      const Real v = inner_sobolev(resp[static_cast<std::size_t>(a)],
                                   resp[static_cast<std::size_t>(b)], m);
      rep.gram(a, b) = v;
      rep.gram(b, a) = v;
    }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rep.gram);
  rep.eigenvalues = es.eigenvalues();
  const Real lo = rep.eigenvalues(0), hi = rep.eigenvalues(n_probes - 1);
  rep.condition = lo > 0.0 ? hi / lo : std::numeric_limits<Real>::infinity();
  return rep;
}

// ----------------------------------------------------------- CSV reports

namespace detail {

inline std::ofstream open_csv(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.precision(17);
  return os;
}

}  // namespace detail

inline void write_mixing_csv(const std::string& path, const MixingReport& rep,
                             const std::vector<std::string>& header) {
  std::ofstream os = detail::open_csv(path);
  for (const std::string& line : header) os << "# " << line << "\n";
  os << "k,d_k,stderr_k\n";
  for (std::size_t k = 0; k < rep.d.size(); ++k)
    os << k << "," << rep.d[k] << "," << rep.se[k] << "\n";
  os << "# fit: ok=" << (rep.fit_ok ? 1 : 0) << " kappa=" << rep.kappa << " C=" << rep.C
     << " r2=" << rep.r2 << " points=" << rep.fit_points
     << " positive=" << rep.positive_estimates << " message=" << rep.fit_message << "\n";
}

inline void write_coupling_csv(const std::string& path, const CouplingSeries& s,
                               const std::vector<std::string>& header) {
  std::ofstream os = detail::open_csv(path);
  for (const std::string& line : header) os << "# " << line << "\n";
  os << "k,diff_L2,diff_Vm,diff_primed\n";
  for (std::size_t k = 0; k < s.l2.size(); ++k)
    os << k << "," << s.l2[k] << "," << s.vm[k] << "," << s.primed[k] << "\n";
  os << "# mean_contraction=" << s.mean_contraction() << "\n";
}

inline void write_gramian_csv(const std::string& path, const GramianReport& rep,
                              const std::vector<std::string>& header) {
  std::ofstream os = detail::open_csv(path);
  for (const std::string& line : header) os << "# " << line << "\n";
  os << "index,eigenvalue\n";
  for (int i = 0; i < rep.eigenvalues.size(); ++i) os << i << "," << rep.eigenvalues(i) << "\n";
  os << "# condition=" << rep.condition << " probe_modes=" << rep.n_probe_modes
     << " time_slots=" << rep.n_time_slots << "\n";
}

}  // namespace peqs
