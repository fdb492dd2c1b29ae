#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace peqs {

using Real = double;
using Complex = std::complex<Real>;

inline constexpr Real kTwoPi = 6.283185307179586476925286766559;

/// Periodic box T_L^2 x T_h with the truncation sizes and norm parameters.
///
/// Velocity fields are two-component, even in z and zero-mean; they are
/// stored as Fourier(x,y) x cosine(z) coefficients
///   v_c = sum v(m,n,k) e^{(2 pi i/L)(m x + n y)} cos(2 pi k z / h),
/// with m in [-Nx/2+1, Nx/2], n in [-Ny/2+1, Ny/2], k in [0, Nz-1].
struct GridSpec {
  Real L = kTwoPi;   ///< horizontal period (x and y)
  Real h = kTwoPi;   ///< vertical period
  int Nx = 16;       ///< horizontal truncation in x (even, >= 4)
  int Ny = 16;       ///< horizontal truncation in y (even, >= 4)
  int Nz = 9;        ///< number of cosine modes in z (>= 2)
  int m_sobolev = 2; ///< Sobolev index of the state space (>= 2)
  Real delta = 0.1;  ///< weight of the V^m part in the primed norm (> 0)

  void validate() const {
    if (!(L > 0.0) || !(h > 0.0)) throw std::invalid_argument("GridSpec: L and h must be positive");
    if (Nx < 4 || Nx % 2 != 0) throw std::invalid_argument("GridSpec: Nx must be even and >= 4");
    if (Ny < 4 || Ny % 2 != 0) throw std::invalid_argument("GridSpec: Ny must be even and >= 4");
    if (Nz < 2) throw std::invalid_argument("GridSpec: Nz must be >= 2");
    if (m_sobolev < 2) throw std::invalid_argument("GridSpec: m_sobolev must be >= 2");
    if (!(delta > 0.0)) throw std::invalid_argument("GridSpec: delta must be positive");
  }

  /// Collocation points in z: the even extension of [0, h/2] needs 2(Nz-1).
  int mz() const { return 2 * (Nz - 1); }
  int horizontal_count() const { return Nx * Ny; }

  // Storage index of a signed horizontal mode number.
  int ix_of(int m) const { return m >= 0 ? m : m + Nx; }
  int iy_of(int n) const { return n >= 0 ? n : n + Ny; }
  int m_of(int ix) const { return ix <= Nx / 2 ? ix : ix - Nx; }
  int n_of(int iy) const { return iy <= Ny / 2 ? iy : iy - Ny; }
  int row_of(int ix, int iy) const { return ix + Nx * iy; }

  // 2/3-rule bounds: products of fields supported in the kept band alias
  // only onto discarded modes.
  int dealias_mx() const { return (Nx - 1) / 3; }
  int dealias_my() const { return (Ny - 1) / 3; }
  int dealias_kz() const { return (mz() - 1) / 3; }

  bool same_layout(const GridSpec& o) const {
    return L == o.L && h == o.h && Nx == o.Nx && Ny == o.Ny && Nz == o.Nz;
  }
  bool operator==(const GridSpec& o) const = default;
};

/// Which member of the two-dimensional polarization plane a retained basis
/// element uses. Horizontal-constant modes (m,n) = (0,0) carry the two axis
/// polarizations instead; only `minus` exists at k = 0.
enum class Polarization : int { minus = 0, plus = 1, axis_x = 2, axis_y = 3 };

inline const char* to_string(Polarization p) {
  switch (p) {
    case Polarization::minus: return "-";
    case Polarization::plus: return "+";
    case Polarization::axis_x: return "ex";
    case Polarization::axis_y: return "ey";
  }
  return "?";
}

/// One retained basis element of the divergence-constrained space V.
struct ModeIndex {
  int m = 0;
  int n = 0;
  int k = 0;
  Polarization pol = Polarization::minus;

  bool operator==(const ModeIndex&) const = default;
};

/// -Laplace eigenvalue of the basis element: (2pi/L)^2 (m^2+n^2) + (2pi/h)^2 k^2.
inline Real eigenvalue(const ModeIndex& idx, const GridSpec& g) {
  if (std::abs(idx.m) > g.Nx / 2 || std::abs(idx.n) > g.Ny / 2 || idx.k < 0 || idx.k >= g.Nz)
    throw std::invalid_argument("eigenvalue: mode outside the truncation");
  const bool constant_mode = (idx.m == 0 && idx.n == 0);
  const bool axis = idx.pol == Polarization::axis_x || idx.pol == Polarization::axis_y;
  if (constant_mode != axis)
    throw std::invalid_argument("eigenvalue: polarization inconsistent with (m,n)");
  if (constant_mode && idx.k == 0)
    throw std::invalid_argument("eigenvalue: (0,0,0) is not a retained mode");
  if (idx.k == 0 && idx.pol == Polarization::plus)
    throw std::invalid_argument("eigenvalue: k = 0 retains only the minus polarization");
  const Real kx = kTwoPi / g.L;
  const Real kz = kTwoPi / g.h;
  return kx * kx * static_cast<Real>(idx.m * idx.m + idx.n * idx.n) +
         kz * kz * static_cast<Real>(idx.k * idx.k);
}

/// Enumerates the retained basis of V in the canonical order: ascending
/// eigenvalue, ties broken lexicographically by (k, m, n, polarization).
/// Nyquist rows are excluded (they have no conjugate partner in storage).
/// The order fixes the (e_i, lambda_i) pairing used by the noise.
inline std::vector<ModeIndex> enumerate_modes(const GridSpec& g) {
  std::vector<ModeIndex> out;
  const int mx = g.Nx / 2 - 1, my = g.Ny / 2 - 1;
  out.reserve(static_cast<std::size_t>((2 * mx + 1) * (2 * my + 1) * (2 * g.Nz - 1)));
  for (int k = 0; k < g.Nz; ++k) {
    for (int m = -mx; m <= mx; ++m) {
      for (int n = -my; n <= my; ++n) {
        if (m == 0 && n == 0) continue;
        out.push_back({m, n, k, Polarization::minus});
        if (k >= 1) out.push_back({m, n, k, Polarization::plus});
      }
    }
    if (k >= 1) {
      out.push_back({0, 0, k, Polarization::axis_x});
      out.push_back({0, 0, k, Polarization::axis_y});
    }
  }
  std::sort(out.begin(), out.end(), [&g](const ModeIndex& a, const ModeIndex& b) {
    return std::make_tuple(eigenvalue(a, g), a.k, a.m, a.n, static_cast<int>(a.pol)) <
           std::make_tuple(eigenvalue(b, g), b.k, b.m, b.n, static_cast<int>(b.pol));
  });
  return out;
}

/// Smallest -Laplace eigenvalue over the retained basis.
inline Real lambda_min(const GridSpec& g) {
  const Real kx = kTwoPi / g.L;
  const Real kz = kTwoPi / g.h;
  return std::min(kx * kx, kz * kz);
}

}  // namespace peqs
