#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "peqs/mixing.hpp"
#include "peqs/spectral.hpp"

using namespace peqs;

namespace {

GridSpec desk_grid() {
  GridSpec g;
  g.validate();
  return g;
}

StepperConfig cfg_of(int p) {
  StepperConfig c;
  c.dt = std::ldexp(1.0, -p);
  c.t_end = 1.0;
  return c;
}

RedNoiseSpec zero_noise() {
  RedNoiseSpec s;
  s.I_max = 0;
  return s;
}

std::vector<SpectralField> fields_of(const std::vector<ChainState>& states) {
  std::vector<SpectralField> out;
  for (const ChainState& s : states) out.push_back(s.field);
  return out;
}

}  // namespace

TEST_CASE("run_chain: trivial chain, decay bound, determinism") {
  GridSpec g = desk_grid();
  SpectralField zero(g);
  for (const ChainState& s : run_chain(zero, 5, zero_noise(), 1, cfg_of(5)))
    CHECK(s.field.maxAbs() == 0.0);

  const Real lam1 = lambda_min(g);
  const SpectralField u0 = random_band_field(g, 101, true, 1.0);
  const std::vector<ChainState> chain = run_chain(u0, 6, zero_noise(), 1, cfg_of(6));
  for (int k = 0; k <= 6; ++k)
    CHECK(sobolev_norm(chain[static_cast<std::size_t>(k)].field, 0) <=
          std::exp(-0.5 * lam1 * k) * sobolev_norm(u0, 0) * (1 + 1e-12));

  RedNoiseSpec noise;
  const std::vector<ChainState> c1 = run_chain(u0, 4, noise, 99, cfg_of(5));
  const std::vector<ChainState> c2 = run_chain(u0, 4, noise, 99, cfg_of(5));
  CHECK((c1.back().field - c2.back().field).maxAbs() == 0.0);
  CHECK(c1.back().step == 4);
  CHECK(c1.back().interval_index == 4);
}

TEST_CASE("run_coupled: identical starts, zero-noise linear rate, noisy contraction") {
  GridSpec g = desk_grid();
  RedNoiseSpec noise;
  const SpectralField u0 = random_band_field(g, 111, true, 0.8);
  const CouplingSeries same = run_coupled(u0, u0, 4, noise, 5, cfg_of(5));
  for (const Real v : same.l2) CHECK(v == 0.0);

  // zero noise, tiny perturbation: differences track the tangent propagator
  const SpectralField w = random_band_field(g, 112, true, 1.0);
  SpectralField u0p = u0;
  const Real eps = 1e-6;
  u0p.axpy(eps, w);
  const CouplingSeries cs = run_coupled(u0, u0p, 3, zero_noise(), 5, cfg_of(6));
  Trajectory base = solve(u0, {}, cfg_of(6));
  SpectralField tang = tangent_propagate(w, base, 0.0, 1.0);
  CHECK(cs.l2[1] == doctest::Approx(eps * sobolev_norm(tang, 0)).epsilon(1e-3));
  // and they decay
  CHECK(cs.l2[3] < cs.l2[0]);

  // generic noisy pair: log-linear fit of the emitted series has slope < 0
  SpectralField a = random_band_field(g, 113, true, 1.0);
  SpectralField b = random_band_field(g, 114, true, 1.0);
  const CouplingSeries noisy = run_coupled(a, b, 12, noise, 7, cfg_of(5));
  std::vector<Real> ks, logs;
  for (std::size_t k = 0; k < noisy.l2.size(); ++k) {
    ks.push_back(static_cast<Real>(k));
    logs.push_back(std::log(noisy.l2[k]));
  }
  CHECK(oracles::ols_slope(ks, logs) < 0.0);
  CHECK(noisy.mean_contraction() < 1.0 + 0.05);
}

TEST_CASE("dual_lipschitz: degenerate cases and metric structure") {
  GridSpec g = desk_grid();
  TestFunctionalDictionary dict = make_dictionary(g, 16, 2024, 8);

  std::vector<SpectralField> A, Bset, Cset;
  for (int i = 0; i < 6; ++i) {
    A.push_back(random_band_field(g, 300 + static_cast<std::uint64_t>(i), true, 1.0));
    Bset.push_back(random_band_field(g, 400 + static_cast<std::uint64_t>(i), true, 1.0));
    Cset.push_back(random_band_field(g, 500 + static_cast<std::uint64_t>(i), true, 1.0));
  }
  CHECK(dual_lipschitz(A, A, dict) == 0.0);
  CHECK_THROWS_AS((void)dual_lipschitz({}, A, dict), EmptyEnsemble);

  const Real dab = dual_lipschitz(A, Bset, dict);
  const Real dba = dual_lipschitz(Bset, A, dict);
  const Real dac = dual_lipschitz(A, Cset, dict);
  const Real dcb = dual_lipschitz(Cset, Bset, dict);
  CHECK(dab == doctest::Approx(dba).epsilon(1e-14));
  CHECK(dab >= 0.0);
  CHECK(dab <= 2.0);
  CHECK(dab <= dac + dcb + 1e-14);
}

TEST_CASE("dual_lipschitz: point masses against the closed-form optimum") {
  GridSpec g = desk_grid();
  // delta masses at x and y with ||x - y||_{L2} = d: the optimum over
  // ||g||_L <= 1 is 2d/(d+2), attained by a capped linear functional.
  for (const Real d : {0.5, 1.0, 2.0}) {
    const SpectralField dir = random_band_field(g, 71, true, 1.0);
    SpectralField x = random_band_field(g, 72, true, 0.7);
    SpectralField y = x;
    y.axpy(d, dir);

    // brute-force the optimum over the parametric cap/slope family wrapped
    // around the separating direction, on a fine grid
    Real brute = 0.0;
    for (int i = 1; i < 400; ++i) {
      const Real a = i / 400.0;  // cap; slope 1 - a
      brute = std::max(brute, 2.0 * std::min(a, (1.0 - a) * d * 0.5));
    }
    const Real closed = 2.0 * d / (d + 2.0);
    CHECK(brute == doctest::Approx(closed).epsilon(5e-3));

    TestFunctionalDictionary dict = make_dictionary(g, 32, 9000, 8);
    // center between the masses, as the experiment does with its reference
    SpectralField mid = x;
    mid.axpy(0.5, dir * d);
    dict.center = mid;
    add_difference_probe(dict, x, y);
    const Real est = dual_lipschitz({x}, {y}, dict);
    CHECK(est <= closed * (1 + 1e-12));
    CHECK(est >= 0.8 * closed);
  }
}

TEST_CASE("dual_lipschitz: same-law ensembles sit at the noise floor") {
  GridSpec g = desk_grid();
  RedNoiseSpec noise;
  StepperConfig cfg = cfg_of(5);
  // one stationary-ish chain, interleaved halves
  const std::vector<ChainState> chain = run_chain(SpectralField(g), 48, noise, 2718, cfg);
  std::vector<SpectralField> A, Bset;
  for (int k = 9; k <= 48; ++k)
    ((k % 2) ? A : Bset).push_back(chain[static_cast<std::size_t>(k)].field);

  TestFunctionalDictionary dict = make_dictionary(g, 24, 31415, 8);
  SpectralField center(g);
  for (const SpectralField& f : A) center += f;
  center *= 1.0 / static_cast<Real>(A.size());
  dict.center = center;

  const Eigen::MatrixXd WA = detail::wrap_probe_values(detail::raw_probe_values(A, dict), dict);
  const Eigen::MatrixXd WB =
      detail::wrap_probe_values(detail::raw_probe_values(Bset, dict), dict);
  const Real est = detail::dl_from_wrapped(WA, WB);
  // null scale estimated by a pooled permutation bootstrap: both halves come
  // from the same law, so the estimate must be consistent with that scale
  Eigen::MatrixXd pool(WA.rows() + WB.rows(), WA.cols());
  pool << WA, WB;
  CounterRng rng(4444);
  Real acc = 0, acc2 = 0;
  const int nb = 200;
  for (int b = 0; b < nb; ++b) {
    Eigen::VectorXd cnt = Eigen::VectorXd::Zero(pool.rows());
    for (int i = 0; i < WA.rows(); ++i)
      cnt(static_cast<int>(rng.next() % static_cast<std::uint64_t>(pool.rows()))) += 1.0;
    const Eigen::RowVectorXd mA = (cnt.transpose() * pool) / static_cast<Real>(WA.rows());
    Eigen::VectorXd cntB = Eigen::VectorXd::Zero(pool.rows());
    for (int i = 0; i < WB.rows(); ++i)
      cntB(static_cast<int>(rng.next() % static_cast<std::uint64_t>(pool.rows()))) += 1.0;
    const Eigen::RowVectorXd mB = (cntB.transpose() * pool) / static_cast<Real>(WB.rows());
    const Real e = (mA - mB).cwiseAbs().maxCoeff();
    acc += e;
    acc2 += e * e;
  }
  const Real null_mean = acc / nb;
  const Real null_sd = std::sqrt(std::max(0.0, acc2 / nb - null_mean * null_mean));
  CHECK(est <= null_mean + 2.0 * (null_sd + null_mean));
}

TEST_CASE("mixing_experiment: trivial zero-noise cases") {
  GridSpec g = desk_grid();
  MixingParams prm;
  prm.noise = zero_noise();
  prm.stepper = cfg_of(5);
  prm.n_steps = 6;
  prm.ensemble = 4;
  prm.burn_in = 2;
  prm.ref_size = 4;
  prm.subsample = 1;
  prm.random_probes = 8;
  prm.coordinate_probes = 4;
  prm.bootstrap = 50;
  prm.threads = 2;

  // zero noise from the origin: reference and ensemble are all zero
  const MixingReport rep0 = mixing_experiment(SpectralField(g), prm);
  for (const Real d : rep0.d) CHECK(d == 0.0);
  CHECK_FALSE(rep0.fit_ok);

  // zero noise from u0 != 0: distances bounded by the deterministic
  // contraction through the capped functionals (delta-mass formula)
  const SpectralField u0 = random_band_field(g, 606, true, 1.5);
  const MixingReport rep = mixing_experiment(u0, prm);
  const std::vector<ChainState> chain = run_chain(u0, prm.n_steps, prm.noise, 1, prm.stepper);
  for (int k = 0; k <= prm.n_steps; ++k) {
    const Real dist = sobolev_norm(chain[static_cast<std::size_t>(k)].field, 0);
    const Real cap = 2.0 * dist / (dist + 2.0);
    CHECK(rep.d[static_cast<std::size_t>(k)] <= cap * (1 + 1e-9) + 1e-12);
  }
  // determinism across thread counts
  MixingParams prm1 = prm;
  prm1.threads = 1;
  const MixingReport rep1 = mixing_experiment(u0, prm1);
  for (std::size_t k = 0; k < rep.d.size(); ++k) CHECK(rep.d[k] == rep1.d[k]);
}

TEST_CASE("gramian: heat-kernel diagonal, rank deficiency, PSD") {
  GridSpec g = desk_grid();
  RedNoiseSpec zn = zero_noise();
  const NoiseSegment z = draw_segment(zn, 1, 0);
  StepperConfig cfg = cfg_of(7);

  const GramianReport rep = gramian_nondegeneracy(SpectralField(g), z, 6, 1, cfg, 2);
  const std::vector<ModeIndex> modes = enumerate_modes(g);
  for (int i = 0; i < 6; ++i) {
    const Real lam = eigenvalue(modes[static_cast<std::size_t>(i)], g);
    const Real want = std::pow((1.0 - std::exp(-lam)) / lam, 2);
    const Real tol = 2.0 * lam * lam * cfg.dt * cfg.dt * want + 1e-14;
    CHECK(std::abs(rep.gram(i, i) - want) <= tol);
  }
  // off-diagonals vanish at the heat limit
  CHECK(std::abs(rep.gram(0, 1)) <= 1e-12);

  // duplicate probes (two identical time slots of a constant-in-time
  // indicator would be distinct; instead replicate modes via slots = rank
  // check): a Gramian with a repeated response is singular
  Eigen::MatrixXd gram2(2, 2);
  gram2 << rep.gram(0, 0), rep.gram(0, 0), rep.gram(0, 0), rep.gram(0, 0);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram2);
  CHECK(std::abs(es.eigenvalues()(0)) <= 1e-12 * gram2.trace());

  // generic base point and segment: strictly positive smallest eigenvalue
  RedNoiseSpec noise;
  const NoiseSegment seg = draw_segment(noise, 77, 0);
  const SpectralField u0 = random_band_field(g, 505, true, 1.0);
  const GramianReport gen = gramian_nondegeneracy(u0, seg, 10, 1, cfg_of(6), 2);
  CHECK(gen.eigenvalues(0) > 0.0);
  CHECK(gen.eigenvalues(0) >= -1e-10 * gen.gram.trace());
  CHECK(gen.condition < 1e6);
  MESSAGE("generic gramian smallest eigenvalue: ", gen.eigenvalues(0),
          ", condition: ", gen.condition);
}

TEST_CASE("gramian: multiple time slots distinguish early from late forcing") {
  GridSpec g = desk_grid();
  RedNoiseSpec zn = zero_noise();
  const NoiseSegment z = draw_segment(zn, 1, 0);
  const GramianReport rep = gramian_nondegeneracy(SpectralField(g), z, 2, 2, cfg_of(6), 2);
  // early slots decay longer: diagonal of slot 0 < slot 1 for the same mode.
  // At the heat limit the two slot responses of one mode are parallel, so
  // the 4x4 Gramian is PSD with a null space; strict positivity is a
  // generic-base property, tested elsewhere.
  CHECK(rep.gram(0, 0) < rep.gram(2, 2));
  CHECK(rep.eigenvalues(0) >= -1e-10 * rep.gram.trace());
}
