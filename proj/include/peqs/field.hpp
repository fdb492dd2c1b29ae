#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <utility>

#include "peqs/grid.hpp"

namespace peqs {

using CoeffMatrix = Eigen::MatrixXcd;

/// Two-component coefficient array on a GridSpec.
///
/// Storage: one (Nx*Ny) x Nz complex matrix per component, row ix + Nx*iy,
/// column k. A field lies in V when it is Hermitian-symmetric, has a zero
/// (0,0,0) coefficient and satisfies the barotropic (k = 0) divergence
/// constraint; intermediate products of the nonlinear terms use the same
/// storage without those constraints, so they are checked, not enforced.
class SpectralField {
 public:
  SpectralField() = default;

  explicit SpectralField(const GridSpec& g)
      : grid_(g),
        c_{CoeffMatrix::Zero(g.horizontal_count(), g.Nz),
           CoeffMatrix::Zero(g.horizontal_count(), g.Nz)} {}

  const GridSpec& grid() const { return grid_; }

  CoeffMatrix& comp(int c) { return c_[static_cast<std::size_t>(c)]; }
  const CoeffMatrix& comp(int c) const { return c_[static_cast<std::size_t>(c)]; }

  /// Coefficient access by signed mode numbers.
  Complex& at(int c, int m, int n, int k) {
    return comp(c)(grid_.row_of(grid_.ix_of(m), grid_.iy_of(n)), k);
  }
  Complex at(int c, int m, int n, int k) const {
    return comp(c)(grid_.row_of(grid_.ix_of(m), grid_.iy_of(n)), k);
  }

  void setZero() {
    c_[0].setZero();
    c_[1].setZero();
  }

  bool allFinite() const { return c_[0].allFinite() && c_[1].allFinite(); }

  Real maxAbs() const {
    return std::max(c_[0].cwiseAbs().maxCoeff(), c_[1].cwiseAbs().maxCoeff());
  }

  SpectralField& operator+=(const SpectralField& o) {
    c_[0] += o.c_[0];
    c_[1] += o.c_[1];
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    c_[0] -= o.c_[0];
    c_[1] -= o.c_[1];
    return *this;
  }
  SpectralField& operator*=(Real a) {
    c_[0] *= a;
    c_[1] *= a;
    return *this;
  }

  /// this += a * x
  SpectralField& axpy(Real a, const SpectralField& x) {
    c_[0] += a * x.c_[0];
    c_[1] += a * x.c_[1];
    return *this;
  }

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(Real a, SpectralField f) { return f *= a; }
  friend SpectralField operator*(SpectralField f, Real a) { return f *= a; }

  /// Largest violation of v(-m,-n,k) = conj(v(m,n,k)), with indices taken
  /// modulo (Nx, Ny) so Nyquist rows pair with themselves.
  Real hermitian_defect() const {
    Real worst = 0.0;
    const int Nx = grid_.Nx, Ny = grid_.Ny;
    for (int c = 0; c < 2; ++c) {
      const CoeffMatrix& M = comp(c);
      for (int iy = 0; iy < Ny; ++iy) {
        const int jy = (Ny - iy) % Ny;
        for (int ix = 0; ix < Nx; ++ix) {
          const int jx = (Nx - ix) % Nx;
          for (int k = 0; k < grid_.Nz; ++k) {
            const Complex d = M(grid_.row_of(ix, iy), k) - std::conj(M(grid_.row_of(jx, jy), k));
            worst = std::max(worst, std::abs(d));
          }
        }
      }
    }
    return worst;
  }

  /// Largest |div_2| coefficient of the barotropic (k = 0) plane:
  /// max |i (2 pi / L) (m v1 + n v2)|.
  Real barotropic_divergence() const {
    Real worst = 0.0;
    const Real kx = kTwoPi / grid_.L;
    for (int iy = 0; iy < grid_.Ny; ++iy) {
      for (int ix = 0; ix < grid_.Nx; ++ix) {
        const int m = grid_.m_of(ix), n = grid_.n_of(iy);
        if (m == 0 && n == 0) continue;
        const Complex d = kx * (static_cast<Real>(m) * c_[0](grid_.row_of(ix, iy), 0) +
                                static_cast<Real>(n) * c_[1](grid_.row_of(ix, iy), 0));
        worst = std::max(worst, std::abs(d));
      }
    }
    return worst;
  }

  Complex mean_coeff(int c) const { return comp(c)(0, 0); }

 private:
  GridSpec grid_;
  std::array<CoeffMatrix, 2> c_;
};

/// Scalar z-odd field stored as a sine series: w = sum w(m,n,k)
/// e^{(2 pi i/L)(m x + n y)} sin(2 pi k z / h), k >= 1 (column 0 unused).
struct SineScalarField {
  GridSpec grid;
  CoeffMatrix coeff;

  explicit SineScalarField(const GridSpec& g)
      : grid(g), coeff(CoeffMatrix::Zero(g.horizontal_count(), g.Nz)) {}
  SineScalarField() = default;
};

}  // namespace peqs
