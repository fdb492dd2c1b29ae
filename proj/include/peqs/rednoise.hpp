#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "peqs/field.hpp"
#include "peqs/grid.hpp"
#include "peqs/rng.hpp"
#include "peqs/spectral.hpp"

namespace peqs {

/// Which one-sided limit a piecewise-constant path evaluation takes at a
/// dyadic jump point. Away from jumps both sides agree.
enum class LimitSide { left, right };

/// Decay rules and truncation of the bounded Haar-series forcing
///   eta(t) = sum_i b_i (xi0_i h0(t) + sum_j c_j sum_k xi_{j,k}^i h_{j,k}(t))
///            lambda_i^{-m/2} e_i,
/// with b_i = b0 i^-alpha (i >= 1) and c_j = 2^{-beta j}.
struct RedNoiseSpec {
  int I_max = 12;     ///< spatial modes
  int J_max = 5;      ///< Haar levels j = 0..J_max-1
  Real alpha = 1.0;   ///< must be > 1/2 so sum b_i^2 converges
  Real beta = 0.5;    ///< must be > 0 so sum c_j converges
  Real b0 = 0.5;
  int m_sobolev = 2;  ///< smoothing exponent of the lambda^{-m/2} factor

  void validate() const {
    if (I_max < 0) throw std::invalid_argument("RedNoiseSpec: I_max must be >= 0");
    if (J_max < 0) throw std::invalid_argument("RedNoiseSpec: J_max must be >= 0");
    if (!(alpha > 0.5)) throw std::invalid_argument("RedNoiseSpec: alpha must be > 1/2");
    if (!(beta > 0.0)) throw std::invalid_argument("RedNoiseSpec: beta must be > 0");
    if (!(b0 > 0.0)) throw std::invalid_argument("RedNoiseSpec: b0 must be > 0");
    if (m_sobolev < 2) throw std::invalid_argument("RedNoiseSpec: m_sobolev must be >= 2");
  }

  Real b_coeff(int i) const { return b0 * std::pow(static_cast<Real>(i), -alpha); }
  Real c_coeff(int j) const { return std::pow(2.0, -beta * j); }

  Real c_sum() const {
    Real s = 0.0;
    for (int j = 0; j < J_max; ++j) s += c_coeff(j);
    return s;
  }

  /// Pathwise bound: sup_t ||eta(t)||_{V^m}^2 <= sum_i b_i^2 (1 + (sum_j c_j)^2).
  Real sup_bound() const {
    Real sb = 0.0;
    const Real cs = c_sum();
    for (int i = 1; i <= I_max; ++i) sb += b_coeff(i) * b_coeff(i) * (1.0 + cs * cs);
    return sb;
  }
};

/// Father wavelet: indicator of [0, 1].
inline Real haar0(Real t) { return (t >= 0.0 && t <= 1.0) ? 1.0 : 0.0; }

/// Pointwise Haar wavelet at level j, shift k, for t in [0, 1]:
/// +1 on [k/2^j, mid], -1 on (mid, (k+1)/2^j], 0 outside. Interior jumps
/// carry the left-limit value; the support's left edge is +1.
inline Real haar(int j, int k, Real t) {
  if (j < 0) throw std::out_of_range("haar: level must be >= 0");
  const std::int64_t span = std::int64_t{1} << j;
  if (k < 0 || k >= span) throw std::out_of_range("haar: shift out of range");
  const Real lo = static_cast<Real>(k) / static_cast<Real>(span);
  const Real mid = (static_cast<Real>(k) + 0.5) / static_cast<Real>(span);
  const Real hi = static_cast<Real>(k + 1) / static_cast<Real>(span);
  if (t < lo || t > hi) return 0.0;
  return t <= mid ? 1.0 : -1.0;
}

/// The single active wavelet of level j at time t: shift and sign of the
/// half-interval containing t, with `side` resolving dyadic jump points.
/// Exactly one wavelet per level is active at any t, so per-level sums of
/// bounded coefficients stay bounded by 1.
struct HaarLevelValue {
  int shift;
  Real sign;
};

inline HaarLevelValue haar_active(int j, Real t, LimitSide side) {
  const std::int64_t pieces = std::int64_t{2} << j;  // 2^{j+1} half-intervals
  const Real scaled = t * static_cast<Real>(pieces);
  std::int64_t p;
  if (side == LimitSide::right) {
    p = static_cast<std::int64_t>(std::floor(scaled));
  } else {
    p = static_cast<std::int64_t>(std::ceil(scaled)) - 1;
  }
  p = std::min(std::max(p, std::int64_t{0}), pieces - 1);
  return {static_cast<int>(p >> 1), (p & 1) == 0 ? 1.0 : -1.0};
}

/// One draw from the Epanechnikov density rho(r) = (3/4)(1 - r^2) on [-1, 1]
/// by inverting the CDF: the closed-form trigonometric root refined by
/// Newton to 1e-12 or better. Lipschitz density, rho(0) = 3/4 != 0.
inline Real sample_xi(CounterRng& rng) {
  const Real u = rng.uniform01();
  const Real phi = std::acos(1.0 - 2.0 * u) / 3.0;
  Real x = 2.0 * std::cos(phi + 2.0 * kTwoPi / 3.0);
  for (int it = 0; it < 8; ++it) {
    const Real f = 0.25 * (2.0 + 3.0 * x - x * x * x) - u;
    const Real fp = 0.75 * (1.0 - x * x);
    if (std::abs(f) < 1e-15 || fp < 1e-12) break;
    x -= f / fp;
  }
  return std::min(std::max(x, Real(-1.0)), Real(1.0));
}

/// One unit interval of forcing: every coefficient draw for [n, n+1).
/// Reproducible bit-for-bit from (master_seed, interval_index); segments at
/// distinct interval indices are independent streams.
struct NoiseSegment {
  RedNoiseSpec spec;
  std::uint64_t master_seed = 0;
  std::int64_t interval_index = 0;
  Eigen::VectorXd xi0;                  ///< xi0[i-1], i = 1..I_max
  std::vector<Eigen::VectorXd> xi;      ///< per i: flattened levels, offset 2^j - 1 + k

  Real xi_at(int i, int j, int k) const {
    return xi[static_cast<std::size_t>(i - 1)]((std::int64_t{1} << j) - 1 + k);
  }
};

inline NoiseSegment draw_segment(const RedNoiseSpec& spec, std::uint64_t master_seed,
                                 std::int64_t interval_index) {
  spec.validate();
  NoiseSegment seg;
  seg.spec = spec;
  seg.master_seed = master_seed;
  seg.interval_index = interval_index;
  const std::uint64_t iv = static_cast<std::uint64_t>(interval_index);
  seg.xi0.resize(spec.I_max);
  seg.xi.resize(static_cast<std::size_t>(spec.I_max));
  const std::int64_t per_i = (std::int64_t{1} << spec.J_max) - 1;
  for (int i = 1; i <= spec.I_max; ++i) {
    CounterRng r0(derive_key({master_seed, iv, static_cast<std::uint64_t>(i), 0, 0}));
    seg.xi0(i - 1) = sample_xi(r0);
    Eigen::VectorXd& v = seg.xi[static_cast<std::size_t>(i - 1)];
    v.resize(per_i);
    for (int j = 0; j < spec.J_max; ++j)
      for (std::int64_t k = 0; k < (std::int64_t{1} << j); ++k) {
        CounterRng r(derive_key({master_seed, iv, static_cast<std::uint64_t>(i),
                                 static_cast<std::uint64_t>(j + 1), static_cast<std::uint64_t>(k)}));
        v((std::int64_t{1} << j) - 1 + k) = sample_xi(r);
      }
  }
  return seg;
}

/// Scalar Haar-series amplitude of spatial mode i at time t.
inline Real segment_amplitude(const NoiseSegment& seg, int i, Real t, LimitSide side) {
  Real a = seg.xi0(i - 1) * haar0(t);
  for (int j = 0; j < seg.spec.J_max; ++j) {
    const HaarLevelValue lv = haar_active(j, t, side);
    a += seg.spec.c_coeff(j) * lv.sign * seg.xi_at(i, j, lv.shift);
  }
  return a;
}

/// Caches the coefficient slots of the first I_max basis fields of V on a
/// grid so segment evaluation is a sparse fill.
class NoiseBasis {
 public:
  NoiseBasis(const RedNoiseSpec& spec, const GridSpec& g) : spec_(spec), g_(g) {
    const std::vector<ModeIndex> modes = enumerate_modes(g);
    if (static_cast<std::size_t>(spec.I_max) > modes.size())
      throw std::invalid_argument("NoiseBasis: I_max exceeds the retained basis size");
    slots_.resize(static_cast<std::size_t>(spec.I_max));
    scale_.resize(static_cast<std::size_t>(spec.I_max));
    for (int i = 1; i <= spec.I_max; ++i) {
      const ModeIndex& idx = modes[static_cast<std::size_t>(i - 1)];
      const SpectralField e = mode_field(idx, g);
      scale_[static_cast<std::size_t>(i - 1)] =
          spec.b_coeff(i) * std::pow(eigenvalue(idx, g), -0.5 * spec.m_sobolev);
      auto& entries = slots_[static_cast<std::size_t>(i - 1)];
      for (int c = 0; c < 2; ++c)
        for (int k = 0; k < g.Nz; ++k)
          for (int r = 0; r < g.horizontal_count(); ++r)
            if (std::abs(e.comp(c)(r, k)) > 0.0) entries.push_back({c, r, k, e.comp(c)(r, k)});
    }
  }

  const GridSpec& grid() const { return g_; }
  const RedNoiseSpec& spec() const { return spec_; }

  /// eta(t) as a field in V. The path is piecewise constant on dyadic
  /// intervals of width 2^{-J_max}; `side` picks the piece at jump points.
  SpectralField evaluate(const NoiseSegment& seg, Real t, LimitSide side = LimitSide::left) const {
    SpectralField f(g_);
    add_scaled(seg, t, side, 1.0, f);
    return f;
  }

  /// f += weight * eta(t); sparse, no allocation.
  void add_scaled(const NoiseSegment& seg, Real t, LimitSide side, Real weight,
                  SpectralField& f) const {
    for (int i = 1; i <= spec_.I_max; ++i) {
      const Real a =
          weight * scale_[static_cast<std::size_t>(i - 1)] * segment_amplitude(seg, i, t, side);
      for (const Slot& s : slots_[static_cast<std::size_t>(i - 1)])
        f.comp(s.c)(s.r, s.k) += a * s.val;
    }
  }

 private:
  struct Slot {
    int c, r, k;
    Complex val;
  };
  RedNoiseSpec spec_;
  GridSpec g_;
  std::vector<std::vector<Slot>> slots_;
  std::vector<Real> scale_;
};

/// Convenience evaluation without a cached basis (builds one per call).
inline SpectralField evaluate(const NoiseSegment& seg, Real t, const GridSpec& g,
                              LimitSide side = LimitSide::left) {
  return NoiseBasis(seg.spec, g).evaluate(seg, t, side);
}

/// Audit dump, columns i,j,k,xi; the father-wavelet draw uses j = -1.
inline void dump_segment_csv(const NoiseSegment& seg, std::ostream& os) {
  os << "i,j,k,xi\n";
  for (int i = 1; i <= seg.spec.I_max; ++i) {
    os << i << ",-1,0," << seg.xi0(i - 1) << "\n";
    for (int j = 0; j < seg.spec.J_max; ++j)
      for (int k = 0; k < (1 << j); ++k)
        os << i << "," << j << "," << k << "," << seg.xi_at(i, j, k) << "\n";
  }
}

}  // namespace peqs
