#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "peqs/dynamics.hpp"
#include "peqs/rednoise.hpp"
#include "peqs/spectral.hpp"
#include "peqs/timestep.hpp"

using namespace peqs;

namespace {

GridSpec desk_grid() {
  GridSpec g;
  g.validate();
  return g;
}

StepperConfig cfg_of(int p, Real t_end = 1.0) {
  StepperConfig c;
  c.dt = std::ldexp(1.0, -p);
  c.t_end = t_end;
  return c;
}

/// Manufactured solution v*(t) = cos(a t) X + (b sin(c t) + d) Y and the
/// forcing that makes it solve the truncated system exactly in space.
struct Manufactured {
  SpectralField X, Y;
  Real a = 1.7, b = 0.8, c = 2.3, d = 0.3;

  explicit Manufactured(const GridSpec& g)
      : X(random_band_field(g, 55, true, 1.0)), Y(random_band_field(g, 56, true, 1.0)) {}

  SpectralField value(Real t) const {
    SpectralField v = X;
    v *= std::cos(a * t);
    v.axpy(b * std::sin(c * t) + d, Y);
    return v;
  }
  SpectralField dvalue(Real t) const {
    SpectralField v = X;
    v *= -a * std::sin(a * t);
    v.axpy(b * c * std::cos(c * t), Y);
    return v;
  }
  Forcing forcing() const {
    return [this](Real t, LimitSide) {
      const GridSpec& g = X.grid();
      SpectralField vs = value(t);
      SpectralField r = dvalue(t);
      SpectralField lap = vs;
      for (int cc = 0; cc < 2; ++cc)
        for (int k = 0; k < g.Nz; ++k)
          for (int iy = 0; iy < g.Ny; ++iy)
            for (int ix = 0; ix < g.Nx; ++ix)
              lap.comp(cc)(g.row_of(ix, iy), k) *= detail::mode_lambda(g, ix, iy, k);
      r += lap;
      r += B(vs, vs);
      return r;
    };
  }
};

}  // namespace

TEST_CASE("StepperConfig validation") {
  StepperConfig c;
  c.dt = 0.3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.dt = 0.5;  // dyadic but above 1/4
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.dt = 0.25;
  c.t_end = 1.0;
  CHECK_NOTHROW(c.validate());
  c.t_end = 0.3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("solve: zero data stays zero; iterates stay in V") {
  GridSpec g = desk_grid();
  SpectralField zero(g);
  const Trajectory t = solve(zero, {}, cfg_of(5));
  CHECK(t.states.size() == 33);
  for (const SpectralField& s : t.states) CHECK(s.maxAbs() == 0.0);

  RedNoiseSpec noise;
  const NoiseSegment seg = draw_segment(noise, 3, 0);
  const NoiseBasis& nb = noise_basis_for(noise, g);
  Forcing f = [&](Real tt, LimitSide side) { return nb.evaluate(seg, tt, side); };
  const SpectralField u0 = random_band_field(g, 17, true, 0.5);
  const Trajectory tr = solve(u0, f, cfg_of(5));
  for (const SpectralField& s : tr.states) {
    CHECK(s.hermitian_defect() <= 1e-13);
    CHECK(s.barotropic_divergence() <= 1e-12);
    CHECK(std::abs(s.mean_coeff(0)) <= 1e-15);
  }
}

TEST_CASE("shear mode decays at the exact heat rate") {
  GridSpec g = desk_grid();  // L = 2 pi
  const SpectralField e = mode_field({1, 0, 0, Polarization::minus}, g);
  SpectralField v0 = e;
  v0 *= 0.8;
  const SpectralField v1 = integrate(v0, {}, cfg_of(10));
  const Real got = sobolev_norm(v1, 0);
  const Real want = 0.8 * std::exp(-1.0);
  CHECK(std::abs(got - want) <= 1e-4 * want);
  // nonlinearity vanishes identically on the shear mode, so the scheme is
  // exact here well beyond its formal order
  CHECK(std::abs(got - want) <= 1e-12 * want);
}

TEST_CASE("manufactured solution: temporal order two") {
  GridSpec g = desk_grid();
  const Manufactured mms(g);
  const SpectralField v0 = mms.value(0.0);
  const SpectralField vT = mms.value(1.0);
  std::vector<Real> logdt, logerr;
  for (int p = 6; p <= 10; ++p) {
    const SpectralField v1 = integrate(v0, mms.forcing(), cfg_of(p));
    logdt.push_back(std::log(std::ldexp(1.0, -p)));
    logerr.push_back(std::log(sobolev_norm(v1 - vT, 0)));
  }
  const Real slope = oracles::ols_slope(logdt, logerr);
  CHECK(slope == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("zero-noise energy decay is monotone") {
  GridSpec g = desk_grid();
  const SpectralField u0 = random_band_field(g, 23, true, 1.5);
  const Trajectory t = solve(u0, {}, cfg_of(7));
  for (std::size_t i = 1; i < t.states.size(); ++i)
    CHECK(sobolev_norm(t.states[i], 0) <= sobolev_norm(t.states[i - 1], 0) * (1 + 1e-14));
}

TEST_CASE("time_one_map: zero fixed point, dissipativity, primed contraction") {
  GridSpec g = desk_grid();
  RedNoiseSpec zero_noise;
  zero_noise.I_max = 0;
  const NoiseSegment z = draw_segment(zero_noise, 1, 0);
  SpectralField origin(g);
  CHECK(time_one_map(origin, z, cfg_of(5)).maxAbs() == 0.0);

  const Real lam1 = lambda_min(g);
  Real worst_gamma = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    SpectralField u0 = random_band_field(g, 2300 + static_cast<std::uint64_t>(trial), true, 1.0);
    u0 *= 2.0 / sobolev_norm(u0, g.m_sobolev);  // ||u0||_{V^m} = 2
    const SpectralField u1 = time_one_map(u0, z, cfg_of(7));
    CHECK(sobolev_norm(u1, 0) <= std::exp(-0.5 * lam1) * sobolev_norm(u0, 0));
    worst_gamma = std::max(worst_gamma, primed_norm(u1) / primed_norm(u0));
  }
  CHECK(worst_gamma < 1.0);
  MESSAGE("primed-norm contraction factor gamma (zero noise): ", worst_gamma);
}

TEST_CASE("stepper error paths: absorbing monitor and blow-up") {
  GridSpec g = desk_grid();
  StepperConfig tight = cfg_of(5);
  tight.monitor_K = 1e-6;
  const SpectralField u0 = random_band_field(g, 29, true, 1.0);
  CHECK_THROWS_AS((void)integrate(u0, {}, tight), AbsorbingSetViolation);

  SpectralField huge = random_band_field(g, 31, true, 1.0);
  huge *= 1e9;
  CHECK_THROWS_AS((void)integrate(huge, {}, cfg_of(2)), NonFiniteState);
}

TEST_CASE("tangent propagator: heat limit, linearity, finite differences") {
  GridSpec g = desk_grid();

  // zero base: per-mode heat decay
  SpectralField zero(g);
  const Trajectory base0 = solve(zero, {}, cfg_of(6));
  const ModeIndex idx{1, 2, 3, Polarization::plus};
  const SpectralField e = mode_field(idx, g);
  const SpectralField w1 = tangent_propagate(e, base0, 0.0, 1.0);
  const Real lam = eigenvalue(idx, g);
  CHECK(sobolev_norm(w1, 0) == doctest::Approx(std::exp(-lam)).epsilon(1e-12));

  // linearity to round-off along a generic trajectory
  const SpectralField u0 = random_band_field(g, 37, true, 1.0);
  const Manufactured mms(g);
  const Trajectory base = solve(u0, mms.forcing(), cfg_of(6));
  const SpectralField wa = random_band_field(g, 38, true, 1.0);
  const SpectralField wb = random_band_field(g, 39, true, 1.0);
  const SpectralField lin =
      tangent_propagate(0.7 * wa + (-1.3) * wb, base, 0.0, 1.0);
  const SpectralField split = 0.7 * tangent_propagate(wa, base, 0.0, 1.0) +
                              (-1.3) * tangent_propagate(wb, base, 0.0, 1.0);
  CHECK(sobolev_norm(lin - split, 0) <= 1e-12 * sobolev_norm(split, 0));

  // finite-difference consistency: the tangent sweep is the exact
  // derivative of the discrete map, so the linearization residual is pure
  // O(eps^2): a decade in eps drops residual/eps by a decade
  const SpectralField w = random_band_field(g, 40, true, 1.0);
  const SpectralField Tw = tangent_propagate(w, base, 0.0, 1.0);
  Real err[2];
  int slot = 0;
  for (const Real eps : {1e-3, 1e-4}) {
    SpectralField u0p = u0;
    u0p.axpy(eps, w);
    const SpectralField pert = integrate(u0p, mms.forcing(), cfg_of(6));
    SpectralField diff = pert - base.back();
    diff.axpy(-eps, Tw);
    err[slot++] = sobolev_norm(diff, 0) / eps;
  }
  CHECK(err[1] <= 0.15 * err[0]);
}

TEST_CASE("adjoint propagator: heat limit and duality under refinement") {
  GridSpec g = desk_grid();
  SpectralField zero(g);
  const Trajectory base0 = solve(zero, {}, cfg_of(6));
  const ModeIndex idx{2, 1, 2, Polarization::minus};
  const SpectralField e = mode_field(idx, g);
  const SpectralField w1 = adjoint_propagate(e, base0, 1.0, 0.0);
  CHECK(sobolev_norm(w1, 0) == doctest::Approx(std::exp(-eigenvalue(idx, g))).epsilon(1e-12));

  // zero input -> zero output
  CHECK(adjoint_propagate(SpectralField(g), base0, 1.0, 0.0).maxAbs() == 0.0);

  // the adjoint sweep composes the exact transposes of the tangent step
  // matrices, so the duality mismatch sits at round-off for every dt --
  // strictly inside the O(dt^2) budget
  const SpectralField u0 = random_band_field(g, 47, true, 1.2);
  const SpectralField vp = random_band_field(g, 48, true, 1.0);
  const SpectralField wpp = random_band_field(g, 49, true, 1.0);
  for (int p = 5; p <= 8; ++p) {
    const Trajectory base = solve(u0, {}, cfg_of(p));
    const Real lhs = inner_l2(tangent_propagate(vp, base, 0.0, 1.0), wpp);
    const Real rhs = inner_l2(vp, adjoint_propagate(wpp, base, 1.0, 0.0));
    const Real scale = sobolev_norm(vp, 0) * sobolev_norm(wpp, 0);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * scale);
    CHECK(std::abs(lhs - rhs) <= std::ldexp(1.0, -2 * p));  // <= dt^2 with C = 1
  }
}
