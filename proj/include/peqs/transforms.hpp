#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <vector>

#include "peqs/field.hpp"
#include "peqs/grid.hpp"

namespace peqs {

struct FieldSymmetryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Collocation samples: one (Nx*Ny) x Mz real matrix per component,
/// row jx + Nx*jy for the grid point (jx L/Nx, jy L/Ny), column cz for
/// z = cz h/Mz with Mz = 2(Nz-1).
struct PhysicalField {
  GridSpec grid;
  std::array<Eigen::MatrixXd, 2> comp;

  explicit PhysicalField(const GridSpec& g)
      : grid(g),
        comp{Eigen::MatrixXd::Zero(g.horizontal_count(), g.mz()),
             Eigen::MatrixXd::Zero(g.horizontal_count(), g.mz())} {}
  PhysicalField() = default;

  double& at(int c, int jx, int jy, int cz) {
    return comp[static_cast<std::size_t>(c)](grid.row_of(jx, jy), cz);
  }
  double at(int c, int jx, int jy, int cz) const {
    return comp[static_cast<std::size_t>(c)](grid.row_of(jx, jy), cz);
  }
};

/// Dense separable transform between coefficients and collocation samples,
/// restricted to a band |m| <= band_mx, |n| <= band_my, k <= band_k.
///
/// All passes are plain matrix products, so results are bit-deterministic
/// for fixed input. Synthesis and analysis treat the real and imaginary
/// parts of a "packed" coefficient matrix as two independent
/// Hermitian-symmetric fields; the packed physical matrix then carries one
/// field in its real part and the other in its imaginary part.
///
/// Holds scratch buffers: use one Transformer per worker.
class Transformer {
 public:
  Transformer(const GridSpec& g, int band_mx, int band_my, int band_k)
      : g_(g), bk_(band_k) {
    const int Nx = g.Nx, Ny = g.Ny, Mz = g.mz();
    if (band_mx > Nx / 2 || band_my > Ny / 2 || band_k > g.Nz - 1)
      throw std::invalid_argument("Transformer: band exceeds truncation");
    for (int ix = 0; ix < Nx; ++ix)
      if (std::abs(g.m_of(ix)) <= band_mx) xk_.push_back(ix);
    for (int iy = 0; iy < Ny; ++iy)
      if (std::abs(g.n_of(iy)) <= band_my) yk_.push_back(iy);
    const int nkx = static_cast<int>(xk_.size());
    const int nky = static_cast<int>(yk_.size());
    const int nkz = bk_ + 1;

    Fx_.resize(Nx, nkx);
    Ax_.resize(nkx, Nx);
    for (int c = 0; c < nkx; ++c)
      for (int j = 0; j < Nx; ++j) {
        const Real a = kTwoPi * static_cast<Real>(j) * static_cast<Real>(xk_[c]) / Nx;
        Fx_(j, c) = Complex(std::cos(a), std::sin(a));
        Ax_(c, j) = Complex(std::cos(a) / Nx, -std::sin(a) / Nx);
      }
    FyT_.resize(nky, Ny);
    AyT_.resize(Ny, nky);
    for (int c = 0; c < nky; ++c)
      for (int j = 0; j < Ny; ++j) {
        const Real a = kTwoPi * static_cast<Real>(j) * static_cast<Real>(yk_[c]) / Ny;
        FyT_(c, j) = Complex(std::cos(a), std::sin(a));
        AyT_(j, c) = Complex(std::cos(a) / Ny, -std::sin(a) / Ny);
      }

    ZcS_.setZero(nkz, Mz);
    ZsS_.setZero(nkz, Mz);
    ZcA_.setZero(Mz, nkz);
    ZsA_.setZero(Mz, nkz);
    for (int kk = 0; kk < nkz; ++kk) {
      const bool self_paired = (kk == 0 || 2 * kk == Mz);
      const Real wc = self_paired ? 1.0 / Mz : 2.0 / Mz;
      const Real ws = (kk >= 1 && 2 * kk < Mz) ? 2.0 / Mz : 0.0;
      for (int cz = 0; cz < Mz; ++cz) {
        const Real a = kTwoPi * static_cast<Real>(kk) * static_cast<Real>(cz) / Mz;
        ZcS_(kk, cz) = std::cos(a);
        ZsS_(kk, cz) = (kk >= 1 && 2 * kk < Mz) ? std::sin(a) : 0.0;
        ZcA_(cz, kk) = wc * std::cos(a);
        ZsA_(cz, kk) = ws * std::sin(a);
      }
    }

    Ck_.resize(nkx * nky, nkz);
    G_.resize(nkx * nky, Mz);
    T1_.resize(nkx, Ny);
    T1b_.resize(nkx, Ny);
  }

  static Transformer full(const GridSpec& g) {
    return Transformer(g, g.Nx / 2, g.Ny / 2, g.Nz - 1);
  }
  static Transformer dealiased(const GridSpec& g) {
    return Transformer(g, g.dealias_mx(), g.dealias_my(), g.dealias_kz());
  }

  const GridSpec& grid() const { return g_; }
  int band_k() const { return bk_; }

  /// Packed coefficients (NxNy x Nz) -> packed samples (NxNy x Mz), cosine z-basis.
  void cos_synthesis(const CoeffMatrix& in, Eigen::MatrixXcd& out) { synthesis(in, ZcS_, out); }
  /// Same on a sine series (column 0 of `in` is ignored).
  void sin_synthesis(const CoeffMatrix& in, Eigen::MatrixXcd& out) { synthesis(in, ZsS_, out); }

  /// Packed samples -> packed coefficients; bins outside the band are zero.
  void cos_analysis(const Eigen::MatrixXcd& phys, CoeffMatrix& out) { analysis(phys, ZcA_, out); }
  void sin_analysis(const Eigen::MatrixXcd& phys, CoeffMatrix& out) { analysis(phys, ZsA_, out); }

 private:
  void synthesis(const CoeffMatrix& in, const Eigen::MatrixXcd& Zrows, Eigen::MatrixXcd& out) {
    const int Nx = g_.Nx, Ny = g_.Ny, Mz = g_.mz();
    const int nkx = static_cast<int>(xk_.size());
    const int nky = static_cast<int>(yk_.size());
    const int nkz = bk_ + 1;
    for (int cy = 0; cy < nky; ++cy)
      for (int cx = 0; cx < nkx; ++cx)
        Ck_.row(cx + nkx * cy) = in.row(g_.row_of(xk_[cx], yk_[cy])).head(nkz);
    G_.noalias() = Ck_ * Zrows;
    out.resize(Nx * Ny, Mz);
    for (int cz = 0; cz < Mz; ++cz) {
      Eigen::Map<const Eigen::MatrixXcd> Mk(G_.data() + static_cast<std::ptrdiff_t>(cz) * nkx * nky,
                                            nkx, nky);
      T1_.noalias() = Mk * FyT_;
      Eigen::Map<Eigen::MatrixXcd> Out(out.data() + static_cast<std::ptrdiff_t>(cz) * Nx * Ny, Nx,
                                       Ny);
      Out.noalias() = Fx_ * T1_;
    }
  }

  void analysis(const Eigen::MatrixXcd& phys, const Eigen::MatrixXcd& Zcols, CoeffMatrix& out) {
    const int Nx = g_.Nx, Ny = g_.Ny, Mz = g_.mz();
    const int nkx = static_cast<int>(xk_.size());
    const int nky = static_cast<int>(yk_.size());
    for (int cz = 0; cz < Mz; ++cz) {
      Eigen::Map<const Eigen::MatrixXcd> In(
          phys.data() + static_cast<std::ptrdiff_t>(cz) * Nx * Ny, Nx, Ny);
      T1b_.noalias() = Ax_ * In;
      Eigen::Map<Eigen::MatrixXcd> Gk(G_.data() + static_cast<std::ptrdiff_t>(cz) * nkx * nky, nkx,
                                      nky);
      Gk.noalias() = T1b_ * AyT_;
    }
    Ck_.noalias() = G_ * Zcols;
    out = CoeffMatrix::Zero(g_.horizontal_count(), g_.Nz);
    for (int cy = 0; cy < nky; ++cy)
      for (int cx = 0; cx < nkx; ++cx)
        out.row(g_.row_of(xk_[cx], yk_[cy])).head(bk_ + 1) = Ck_.row(cx + nkx * cy);
  }

  GridSpec g_;
  int bk_;
  std::vector<int> xk_, yk_;
  Eigen::MatrixXcd Fx_, Ax_, FyT_, AyT_;
  Eigen::MatrixXcd ZcS_, ZsS_, ZcA_, ZsA_;
  Eigen::MatrixXcd Ck_, G_, T1_, T1b_;
};

/// Splits a packed analysis result X = F1 + i F2 (both halves Hermitian)
/// into the two coefficient matrices, pairing bins modulo (Nx, Ny). The
/// split is exact, so each output is Hermitian bit-exactly.
inline void unpack_hermitian(const CoeffMatrix& X, const GridSpec& g, CoeffMatrix& f1,
                             CoeffMatrix& f2) {
  const int Nx = g.Nx, Ny = g.Ny, Nz = g.Nz;
  f1.resize(Nx * Ny, Nz);
  f2.resize(Nx * Ny, Nz);
  const Complex half(0.5, 0.0);
  const Complex mhalf_i(0.0, -0.5);
  for (int iy = 0; iy < Ny; ++iy) {
    const int jy = (Ny - iy) % Ny;
    for (int ix = 0; ix < Nx; ++ix) {
      const int jx = (Nx - ix) % Nx;
      const int r = g.row_of(ix, iy), rp = g.row_of(jx, jy);
      for (int k = 0; k < Nz; ++k) {
        const Complex a = X(r, k);
        const Complex b = std::conj(X(rp, k));
        f1(r, k) = half * (a + b);
        f2(r, k) = mhalf_i * (a - b);
      }
    }
  }
}

inline CoeffMatrix pack(const CoeffMatrix& a, const CoeffMatrix& b) {
  return a + Complex(0.0, 1.0) * b;
}

/// Evaluates the truncated series on the collocation grid. Exact inverse of
/// from_physical on band-limited data.
inline PhysicalField to_physical(const SpectralField& f, Transformer& t) {
  PhysicalField p(f.grid());
  Eigen::MatrixXcd phys;
  t.cos_synthesis(pack(f.comp(0), f.comp(1)), phys);
  p.comp[0] = phys.real();
  p.comp[1] = phys.imag();
  return p;
}

inline PhysicalField to_physical(const SpectralField& f) {
  Transformer t = Transformer::full(f.grid());
  return to_physical(f, t);
}

/// Coefficients of the interpolating truncated series. Samples must be even
/// in z across the collocation grid; an odd part above 1e-10 relative is
/// rejected (it signals a symmetry-breaking bug upstream). Constant samples
/// land in the (0,0,0) bin and are only removed by project().
inline SpectralField from_physical(const PhysicalField& p, Transformer& t) {
  const GridSpec& g = p.grid;
  const int Mz = g.mz();
  Real odd = 0.0, amp = 0.0;
  for (int c = 0; c < 2; ++c) {
    amp = std::max(amp, p.comp[static_cast<std::size_t>(c)].cwiseAbs().maxCoeff());
    for (int cz = 1; cz < g.Nz - 1; ++cz) {
      odd = std::max(odd, (p.comp[static_cast<std::size_t>(c)].col(cz) -
                           p.comp[static_cast<std::size_t>(c)].col(Mz - cz))
                              .cwiseAbs()
                              .maxCoeff());
    }
  }
  if (odd > 1e-10 * std::max(amp, Real(1.0)))
    throw FieldSymmetryError("from_physical: samples are not even in z");

  Eigen::MatrixXcd phys =
      p.comp[0].cast<Complex>() + Complex(0.0, 1.0) * p.comp[1].cast<Complex>();
  CoeffMatrix X;
  t.cos_analysis(phys, X);
  SpectralField f(g);
  unpack_hermitian(X, g, f.comp(0), f.comp(1));
  return f;
}

inline SpectralField from_physical(const PhysicalField& p) {
  Transformer t = Transformer::full(p.grid);
  return from_physical(p, t);
}

}  // namespace peqs
