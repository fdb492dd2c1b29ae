#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "peqs/field.hpp"
#include "peqs/grid.hpp"
#include "peqs/rng.hpp"

namespace peqs {

/// L^2-orthogonal projection onto V: zeroes the mean coefficient and, on
/// the barotropic plane k = 0, removes the component of (v1, v2) parallel
/// to (m, n) (the horizontal-gradient part). Coefficients with k >= 1 are
/// untouched. Idempotent.
inline void project_in_place(SpectralField& f) {
  const GridSpec& g = f.grid();
  for (int iy = 0; iy < g.Ny; ++iy) {
    for (int ix = 0; ix < g.Nx; ++ix) {
      const int m = g.m_of(ix), n = g.n_of(iy);
      if (m == 0 && n == 0) continue;
      const int r = g.row_of(ix, iy);
      const Real mm = static_cast<Real>(m), nn = static_cast<Real>(n);
      const Complex par =
          (mm * f.comp(0)(r, 0) + nn * f.comp(1)(r, 0)) / static_cast<Real>(m * m + n * n);
      f.comp(0)(r, 0) -= par * mm;
      f.comp(1)(r, 0) -= par * nn;
    }
  }
  // (0,0,k>=1) bins stay: horizontal-constant modes lie in V.
  f.comp(0)(0, 0) = Complex(0, 0);
  f.comp(1)(0, 0) = Complex(0, 0);
}

inline SpectralField project(SpectralField f) {
  project_in_place(f);
  return f;
}

namespace detail {

/// L^2 mass of one coefficient: |e^{i...} cos(2 pi k z/h)|^2 integrates to
/// L^2 h for k = 0 and L^2 h / 2 for k >= 1.
inline Real l2_weight(const GridSpec& g, int k) {
  return k == 0 ? g.L * g.L * g.h : 0.5 * g.L * g.L * g.h;
}

inline Real mode_lambda(const GridSpec& g, int ix, int iy, int k) {
  const int m = g.m_of(ix), n = g.n_of(iy);
  const Real kx = kTwoPi / g.L, kz = kTwoPi / g.h;
  return kx * kx * static_cast<Real>(m * m + n * n) + kz * kz * static_cast<Real>(k * k);
}

}  // namespace detail

/// <f, g>_{L^2} over the box (real fields).
inline Real inner_l2(const SpectralField& f, const SpectralField& g) {
  const GridSpec& gr = f.grid();
  Real acc = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < gr.Nz; ++k)
      acc += detail::l2_weight(gr, k) *
             f.comp(c).col(k).dot(g.comp(c).col(k)).real();
  return acc;
}

/// Homogeneous Sobolev inner product <grad^j f, grad^j g>.
inline Real inner_sobolev(const SpectralField& f, const SpectralField& g, int j) {
  const GridSpec& gr = f.grid();
  Real acc = 0.0;
  for (int k = 0; k < gr.Nz; ++k) {
    const Real w = detail::l2_weight(gr, k);
    for (int iy = 0; iy < gr.Ny; ++iy)
      for (int ix = 0; ix < gr.Nx; ++ix) {
        const Real lam = detail::mode_lambda(gr, ix, iy, k);
        const Real lj = (j == 0) ? 1.0 : std::pow(lam, j);
        const int r = gr.row_of(ix, iy);
        acc += w * lj *
               (std::conj(f.comp(0)(r, k)) * g.comp(0)(r, k) +
                std::conj(f.comp(1)(r, k)) * g.comp(1)(r, k))
                   .real();
      }
  }
  return acc;
}

/// || grad^j f ||_{L^2}; j = 0 is the L^2 norm (Parseval).
inline Real sobolev_norm(const SpectralField& f, int j) {
  return std::sqrt(std::max(Real(0), inner_sobolev(f, f, j)));
}

/// ||f||' = ||f||_{L^2} + delta ||f||_{V^m} with (m, delta) from the grid.
inline Real primed_norm(const SpectralField& f) {
  return sobolev_norm(f, 0) + f.grid().delta * sobolev_norm(f, f.grid().m_sobolev);
}

/// Real L^2-normalized basis field of a retained mode.
///
/// Conjugate pairs {(m,n), (-m,-n)} realize the cosine phase on the
/// positive half-space representative and the sine phase on its negative
/// partner; polarization vectors are (m,n)/|.| for plus and (-n,m)/|.| for
/// minus, computed from the representative. (0,0,k>=1) are the axis fields
/// e_x cos, e_y cos.
inline SpectralField mode_field(const ModeIndex& idx, const GridSpec& g) {
  eigenvalue(idx, g);  // validates
  SpectralField f(g);
  const Real vol = g.L * g.L * g.h;
  if (idx.m == 0 && idx.n == 0) {
    const Real norm = std::sqrt(2.0 / vol);
    const int c = idx.pol == Polarization::axis_x ? 0 : 1;
    f.at(c, 0, 0, idx.k) = Complex(norm, 0.0);
    return f;
  }
  const bool positive_half = (idx.m > 0) || (idx.m == 0 && idx.n > 0);
  const int rm = positive_half ? idx.m : -idx.m;
  const int rn = positive_half ? idx.n : -idx.n;
  const Real len = std::sqrt(static_cast<Real>(rm * rm + rn * rn));
  Real d1, d2;
  if (idx.pol == Polarization::plus) {
    d1 = rm / len;
    d2 = rn / len;
  } else {
    d1 = -rn / len;
    d2 = rm / len;
  }
  const Real norm = idx.k == 0 ? std::sqrt(2.0 / vol) : 2.0 / std::sqrt(vol);
  // cos phase: coeff 1/2 at +/- rep; sin phase: -i/2 at rep, +i/2 at -rep.
  const Complex cpos = positive_half ? Complex(0.5, 0.0) : Complex(0.0, -0.5);
  const Complex cneg = positive_half ? Complex(0.5, 0.0) : Complex(0.0, 0.5);
  f.at(0, rm, rn, idx.k) = norm * d1 * cpos;
  f.at(1, rm, rn, idx.k) = norm * d2 * cpos;
  f.at(0, -rm, -rn, idx.k) = norm * d1 * cneg;
  f.at(1, -rm, -rn, idx.k) = norm * d2 * cneg;
  return f;
}

/// Deterministic random field with Gaussian coefficients supported on
/// |m| <= bx, |n| <= by, k <= bk, Hermitian by construction, zero mean,
/// optionally projected to V and normalized in L^2.
inline SpectralField random_field(const GridSpec& g, std::uint64_t key, int bx, int by, int bk,
                                  bool in_V = true, Real l2_norm = 1.0) {
  CounterRng rng(key);
  SpectralField f(g);
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k <= bk; ++k)
      for (int m = -bx; m <= bx; ++m)
        for (int n = -by; n <= by; ++n) {
          if (m == 0 && n == 0) continue;
          const bool positive_half = (m > 0) || (m == 0 && n > 0);
          if (!positive_half) continue;
          const Complex z(rng.normal(), rng.normal());
          f.at(c, m, n, k) = z;
          f.at(c, -m, -n, k) = std::conj(z);
        }
  for (int c = 0; c < 2; ++c)
    for (int k = 1; k <= bk; ++k) f.at(c, 0, 0, k) = Complex(rng.normal(), 0.0);
  if (in_V) project_in_place(f);
  const Real nrm = sobolev_norm(f, 0);
  if (l2_norm > 0.0 && nrm > 0.0) f *= l2_norm / nrm;
  return f;
}

/// Random field supported on the dealiased band (the natural "smooth"
/// discrete class: nonlinear identities hold to round-off there).
inline SpectralField random_band_field(const GridSpec& g, std::uint64_t key, bool in_V = true,
                                       Real l2_norm = 1.0) {
  return random_field(g, key, g.dealias_mx(), g.dealias_my(), g.dealias_kz(), in_V, l2_norm);
}

// ---- coefficient-level calculus helpers (shared by the nonlinear terms) ----

/// In-place d/dx: multiply row (m,n) by i 2 pi m / L. Packed-safe.
inline void apply_dx(CoeffMatrix& a, const GridSpec& g) {
  for (int iy = 0; iy < g.Ny; ++iy)
    for (int ix = 0; ix < g.Nx; ++ix)
      a.row(g.row_of(ix, iy)) *= Complex(0.0, kTwoPi * g.m_of(ix) / g.L);
}

inline void apply_dy(CoeffMatrix& a, const GridSpec& g) {
  for (int iy = 0; iy < g.Ny; ++iy)
    for (int ix = 0; ix < g.Nx; ++ix)
      a.row(g.row_of(ix, iy)) *= Complex(0.0, kTwoPi * g.n_of(iy) / g.L);
}

/// d/dz of a cosine series, returned as a sine series:
/// cos(2 pi k z/h) -> -(2 pi k/h) sin(2 pi k z/h).
inline CoeffMatrix cos_dz_to_sin(const CoeffMatrix& a, const GridSpec& g) {
  CoeffMatrix out(a.rows(), a.cols());
  for (int k = 0; k < g.Nz; ++k) out.col(k) = a.col(k) * Complex(-kTwoPi * k / g.h, 0.0);
  return out;
}

/// Vertical antiderivative from -h of a cosine series, as a sine series:
/// cos mode k >= 1 -> (h / 2 pi k) sin mode k. The k = 0 column must vanish
/// (mean-free integrand); |.| above `tol` throws.
inline CoeffMatrix cos_antiderivative_to_sin(const CoeffMatrix& a, const GridSpec& g, Real tol) {
  const Real k0 = a.col(0).cwiseAbs().maxCoeff();
  if (k0 > tol)
    throw std::domain_error("vertical antiderivative: k = 0 integrand is not mean-free");
  CoeffMatrix out = CoeffMatrix::Zero(a.rows(), a.cols());
  for (int k = 1; k < g.Nz; ++k) out.col(k) = a.col(k) * Complex(g.h / (kTwoPi * k), 0.0);
  return out;
}

/// Zero-mean primitive of a sine series, as a cosine series:
/// sin mode k >= 1 -> -(h / 2 pi k) cos mode k. The constant of integration
/// is dropped; the projection annihilates it in every use.
inline CoeffMatrix sin_antiderivative_to_cos(const CoeffMatrix& a, const GridSpec& g) {
  CoeffMatrix out = CoeffMatrix::Zero(a.rows(), a.cols());
  for (int k = 1; k < g.Nz; ++k) out.col(k) = a.col(k) * Complex(-g.h / (kTwoPi * k), 0.0);
  return out;
}

/// -Laplace decay factors e^{-lambda dt} for every stored bin.
inline Eigen::ArrayXXd heat_factors(const GridSpec& g, Real dt) {
  Eigen::ArrayXXd E(g.horizontal_count(), g.Nz);
  for (int k = 0; k < g.Nz; ++k)
    for (int iy = 0; iy < g.Ny; ++iy)
      for (int ix = 0; ix < g.Nx; ++ix)
        E(g.row_of(ix, iy), k) = std::exp(-detail::mode_lambda(g, ix, iy, k) * dt);
  return E;
}

}  // namespace peqs
