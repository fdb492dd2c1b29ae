#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "peqs/dynamics.hpp"
#include "peqs/field.hpp"
#include "peqs/rednoise.hpp"
#include "peqs/spectral.hpp"

namespace peqs {

struct AbsorbingSetViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteState : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Time step control. dt must be an exact dyadic 2^-p with 0 < dt <= 1/4;
/// runs driven by Haar noise additionally need p >= J_max so steps never
/// straddle a noise discontinuity (validated where the noise is attached).
struct StepperConfig {
  Real dt = std::ldexp(1.0, -7);
  Real t_end = 1.0;
  std::optional<Real> monitor_K;  ///< absorbing-set bound, checked every step

  int dyadic_exponent() const {
    const int p = static_cast<int>(std::lround(-std::log2(dt)));
    if (!(dt > 0.0) || std::ldexp(1.0, -p) != dt)
      throw std::invalid_argument("StepperConfig: dt must be an exact dyadic 2^-p");
    return p;
  }

  void validate() const {
    const int p = dyadic_exponent();
    if (p < 2) throw std::invalid_argument("StepperConfig: dt must be <= 1/4");
    if (!(t_end > 0.0)) throw std::invalid_argument("StepperConfig: t_end must be positive");
    if (steps() * dt != t_end)
      throw std::invalid_argument("StepperConfig: t_end must be a multiple of dt");
    if (monitor_K && !(*monitor_K > 0.0))
      throw std::invalid_argument("StepperConfig: monitor_K must be positive");
  }

  long steps() const { return std::lround(t_end / dt); }
};

/// Forcing callback: the field f(t), with the side argument resolving which
/// noise piece a step-boundary evaluation belongs to. An empty function is
/// zero forcing.
using Forcing = std::function<SpectralField(Real, LimitSide)>;

/// States at the step times t0, t0+dt, ..., t0+n dt, plus the predictor
/// stage of each step. Linearizing the end stage around the stored
/// predictor makes the tangent sweep the exact derivative of the discrete
/// map, and the adjoint sweep its exact transpose.
struct Trajectory {
  Real t0 = 0.0;
  Real dt = 0.0;
  std::vector<SpectralField> states;
  std::vector<SpectralField> predictors;  ///< predictor of step i, size states-1

  int index_of(Real t) const {
    const Real u = (t - t0) / dt;
    const int i = static_cast<int>(std::lround(u));
    if (i < 0 || static_cast<std::size_t>(i) >= states.size() || t0 + i * dt != t)
      throw std::invalid_argument("Trajectory: time is not a stored step time");
    return i;
  }
  Real t_of(int i) const { return t0 + i * dt; }
  const SpectralField& back() const { return states.back(); }
};

namespace detail {

inline void scale_by_heat(SpectralField& f, const Eigen::ArrayXXcd& E) {
  f.comp(0).array() *= E;
  f.comp(1).array() *= E;
}

inline void check_state(const SpectralField& v, Real t, const std::optional<Real>& K) {
  if (!v.allFinite())
    throw NonFiniteState("non-finite coefficient at t = " + std::to_string(t));
  if (K) {
    const Real nm = sobolev_norm(v, v.grid().m_sobolev);
    if (!(nm <= *K))
      throw AbsorbingSetViolation("||v||_{V^m} = " + std::to_string(nm) + " exceeds K = " +
                                  std::to_string(*K) + " at t = " + std::to_string(t));
  }
}

/// One integrating-factor Heun step with a generic rhs N(state, t, side):
///   pred   = E (v + dt N(v, t, right)),
///   v_next = E v + dt/2 (E N(v, t, right) + N(pred, t+dt, left)).
/// The stiff -Laplace part is integrated exactly through E = e^{-lambda dt}.
/// When `keep_pred` is set, the predictor stage is moved out for storage.
template <class Rhs>
void heun_step(SpectralField& v, Real t, Real dt, const Eigen::ArrayXXcd& E, Rhs&& rhs,
               SpectralField* keep_pred = nullptr) {
  SpectralField n0 = rhs(v, t, LimitSide::right);
  SpectralField pred = v;
  pred.axpy(dt, n0);
  scale_by_heat(pred, E);
  SpectralField n1 = rhs(pred, t + dt, LimitSide::left);
  scale_by_heat(v, E);
  scale_by_heat(n0, E);
  v.axpy(0.5 * dt, n0);
  v.axpy(0.5 * dt, n1);
  if (keep_pred) *keep_pred = std::move(pred);
}

inline Eigen::ArrayXXcd heat_factors_c(const GridSpec& g, Real dt) {
  return heat_factors(g, dt).cast<Complex>();
}

}  // namespace detail

/// Integrates dv/dt - Lap v + B(v,v) = f from v0 over [0, t_end], recording
/// every step. Monitors finiteness and, when configured, the absorbing-set
/// bound K. The forcing must return fields in V.
inline Trajectory solve(const SpectralField& v0, const Forcing& f, const StepperConfig& cfg) {
  cfg.validate();
  const GridSpec& g = v0.grid();
  DynWorkspace& ws = workspace_for(g);
  const Eigen::ArrayXXcd E = detail::heat_factors_c(g, cfg.dt);
  const long n = cfg.steps();

  Trajectory traj;
  traj.t0 = 0.0;
  traj.dt = cfg.dt;
  traj.states.reserve(static_cast<std::size_t>(n) + 1);
  traj.predictors.reserve(static_cast<std::size_t>(n));
  traj.states.push_back(v0);

  SpectralField v = v0;
  detail::check_state(v, 0.0, cfg.monitor_K);
  auto rhs = [&](const SpectralField& state, Real t, LimitSide side) {
    SpectralField r = B(state, state, ws);
    r *= -1.0;
    if (f) r += f(t, side);
    return r;
  };
  for (long i = 0; i < n; ++i) {
    const Real t = static_cast<Real>(i) * cfg.dt;
    SpectralField pred;
    detail::heun_step(v, t, cfg.dt, E, rhs, &pred);
    detail::check_state(v, t + cfg.dt, cfg.monitor_K);
    traj.predictors.push_back(std::move(pred));
    traj.states.push_back(v);
  }
  return traj;
}

/// Endpoint-only variant of solve (chains do not need the path).
inline SpectralField integrate(const SpectralField& v0, const Forcing& f,
                               const StepperConfig& cfg) {
  cfg.validate();
  const GridSpec& g = v0.grid();
  DynWorkspace& ws = workspace_for(g);
  const Eigen::ArrayXXcd E = detail::heat_factors_c(g, cfg.dt);
  SpectralField v = v0;
  detail::check_state(v, 0.0, cfg.monitor_K);
  auto rhs = [&](const SpectralField& state, Real t, LimitSide side) {
    SpectralField r = B(state, state, ws);
    r *= -1.0;
    if (f) r += f(t, side);
    return r;
  };
  const long n = cfg.steps();
  for (long i = 0; i < n; ++i) {
    const Real t = static_cast<Real>(i) * cfg.dt;
    detail::heun_step(v, t, cfg.dt, E, rhs);
    detail::check_state(v, t + cfg.dt, cfg.monitor_K);
  }
  return v;
}

/// Per-thread cache of noise bases keyed by (spec, grid layout).
inline const NoiseBasis& noise_basis_for(const RedNoiseSpec& spec, const GridSpec& g) {
  thread_local std::vector<std::unique_ptr<NoiseBasis>> cache;
  for (const auto& b : cache) {
    const RedNoiseSpec& s = b->spec();
    if (b->grid().same_layout(g) && s.I_max == spec.I_max && s.J_max == spec.J_max &&
        s.alpha == spec.alpha && s.beta == spec.beta && s.b0 == spec.b0 &&
        s.m_sobolev == spec.m_sobolev)
      return *b;
  }
  cache.push_back(std::make_unique<NoiseBasis>(spec, g));
  return *cache.back();
}

/// The unit-time transition map S(v0, segment): integrate over [0, 1] with
/// f(t) = eta(t) from the segment and return the endpoint.
inline SpectralField time_one_map(const SpectralField& v0, const NoiseSegment& seg,
                                  const StepperConfig& cfg) {
  if (cfg.t_end != 1.0) throw std::invalid_argument("time_one_map: t_end must be 1");
  if (cfg.dyadic_exponent() < seg.spec.J_max)
    throw std::invalid_argument("time_one_map: dt must resolve the noise depth (p >= J_max)");
  const NoiseBasis& basis = noise_basis_for(seg.spec, v0.grid());
  Forcing f = [&](Real t, LimitSide side) { return basis.evaluate(seg, t, side); };
  return integrate(v0, f, cfg);
}

/// Linearized flow S_{t1}^{t2} around a stored base trajectory:
/// dw/dt - Lap w + B(u,w) + B(w,u) = h, w(t1) = w0. Linear in (w0, h).
/// The begin stage linearizes around the stored state, the end stage around
/// the stored predictor, which makes this the exact derivative of the
/// nonlinear step map.
inline SpectralField tangent_propagate(const SpectralField& w0, const Trajectory& base, Real t1,
                                       Real t2, const Forcing& h = {}) {
  const GridSpec& g = w0.grid();
  DynWorkspace& ws = workspace_for(g);
  const Eigen::ArrayXXcd E = detail::heat_factors_c(g, base.dt);
  const int i1 = base.index_of(t1), i2 = base.index_of(t2);
  if (i2 < i1) throw std::invalid_argument("tangent_propagate: t2 must be >= t1");
  SpectralField w = w0;
  for (int i = i1; i < i2; ++i) {
    const Real t = base.t_of(i);
    auto rhs = [&](const SpectralField& state, Real tt, LimitSide side) {
      const SpectralField& u = side == LimitSide::right
                                   ? base.states[static_cast<std::size_t>(i)]
                                   : base.predictors[static_cast<std::size_t>(i)];
      SpectralField r = tangent_rhs(u, state, ws);
      r *= -1.0;
      if (h) r += h(tt, side);
      return r;
    };
    detail::heun_step(w, t, base.dt, E, rhs);
    if (!w.allFinite()) throw NonFiniteState("tangent state non-finite");
  }
  return w;
}

/// Adjoint propagator S-bar_{t2}^{t1}: integrates the time-reversed dual
/// equation dw/dt + Lap w - Badj_{u(t)}(w) = 0 with the terminal condition
/// w(t2) = w2, returning w(t1). Each reversed step composes the exact
/// transpose of the matching tangent step (begin stage around the stored
/// predictor, end stage around the stored state), so the L^2 duality with
/// tangent_propagate holds to round-off.
inline SpectralField adjoint_propagate(const SpectralField& w2, const Trajectory& base, Real t2,
                                       Real t1) {
  const GridSpec& g = w2.grid();
  DynWorkspace& ws = workspace_for(g);
  const Eigen::ArrayXXcd E = detail::heat_factors_c(g, base.dt);
  const int i1 = base.index_of(t1), i2 = base.index_of(t2);
  if (i2 < i1) throw std::invalid_argument("adjoint_propagate: t2 must be >= t1");
  SpectralField w = w2;
  for (int s = 0; s < i2 - i1; ++s) {
    const Real tau = t1 + static_cast<Real>(s) * base.dt;
    const int i = i2 - s - 1;  // the tangent step being transposed
    auto rhs = [&](const SpectralField& state, Real, LimitSide side) {
      const SpectralField& u = side == LimitSide::right
                                   ? base.predictors[static_cast<std::size_t>(i)]
                                   : base.states[static_cast<std::size_t>(i)];
      SpectralField r = adjoint_rhs(u, state, ws);
      r *= -1.0;
      return r;
    };
    detail::heun_step(w, tau, base.dt, E, rhs);
    if (!w.allFinite()) throw NonFiniteState("adjoint state non-finite");
  }
  return w;
}

}  // namespace peqs
