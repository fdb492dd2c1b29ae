#pragma once

#include <Eigen/Dense>
#include <memory>
#include <utility>
#include <vector>

#include "peqs/field.hpp"
#include "peqs/grid.hpp"
#include "peqs/spectral.hpp"
#include "peqs/transforms.hpp"

namespace peqs {

/// Perturbation w attached to its linearization point.
struct TangentDirection {
  SpectralField w;
  SpectralField base;
};

/// Scratch for the pseudo-spectral nonlinear terms: the dealiased
/// transformer plus physical-space buffers. One workspace per worker;
/// everything here is reused across calls and never shared.
class DynWorkspace {
 public:
  explicit DynWorkspace(const GridSpec& g) : g_(g), t_(Transformer::dealiased(g)) {
    ikx_.resize(g.horizontal_count());
    iky_.resize(g.horizontal_count());
    for (int iy = 0; iy < g.Ny; ++iy)
      for (int ix = 0; ix < g.Nx; ++ix) {
        ikx_(g.row_of(ix, iy)) = Complex(0.0, kTwoPi * g.m_of(ix) / g.L);
        iky_(g.row_of(ix, iy)) = Complex(0.0, kTwoPi * g.n_of(iy) / g.L);
      }
  }

  const GridSpec& grid() const { return g_; }
  Transformer& tform() { return t_; }

  /// d/dx on a packed coefficient matrix.
  CoeffMatrix dx(const CoeffMatrix& a) const { return a.array().colwise() * ikx_; }
  CoeffMatrix dy(const CoeffMatrix& a) const { return a.array().colwise() * iky_; }

  /// Scalar div_2 of a packed pair (first component in Re-slot, second in
  /// Im-slot is NOT meant here: takes the two components separately).
  CoeffMatrix div2(const SpectralField& u) const {
    return (u.comp(0).array().colwise() * ikx_) + (u.comp(1).array().colwise() * iky_);
  }

  Eigen::MatrixXcd UP, WPp, VX, VY, UX, UY, S1, S2, S3, R, RS;

 private:
  GridSpec g_;
  Transformer t_;
  Eigen::ArrayXcd ikx_, iky_;
};

/// Per-thread workspace cache keyed by grid layout.
inline DynWorkspace& workspace_for(const GridSpec& g) {
  thread_local std::vector<std::pair<GridSpec, std::unique_ptr<DynWorkspace>>> cache;
  for (auto& e : cache)
    if (e.first.same_layout(g)) return *e.second;
  cache.emplace_back(g, std::make_unique<DynWorkspace>(g));
  return *cache.back().second;
}

namespace detail {
constexpr Real kBarotropicTol = 1e-10;

/// Amplitude-scaled tolerance for the k = 0 mean-free check inside the
/// nonlinear terms (states mid-blow-up must reach the non-finite check, not
/// trip a spurious domain error).
inline Real baro_tol(const SpectralField& f) {
  return kBarotropicTol * std::max(Real(1), f.maxAbs());
}

}  // namespace detail

/// Vertical velocity reconstructed from incompressibility,
/// w = -int_{-h}^z div_2 v. Sine series: w(m,n,k) = -div2v(m,n,k) h/(2 pi k)
/// for k >= 1; rejects fields whose barotropic divergence exceeds 1e-10.
inline SineScalarField vertical_velocity(const SpectralField& v) {
  const GridSpec& g = v.grid();
  DynWorkspace& ws = workspace_for(g);
  SineScalarField w(g);
  w.coeff = -cos_antiderivative_to_sin(ws.div2(v), g, detail::kBarotropicTol);
  return w;
}

/// Un-projected advection b(u, v) = (u . grad_2) v - (int_{-h}^z div_2 u) dv/dz,
/// evaluated pseudo-spectrally with 2/3-rule dealiasing in all three indices.
inline SpectralField advect(const SpectralField& u, const SpectralField& v, DynWorkspace& ws) {
  const GridSpec& g = u.grid();
  if (!g.same_layout(v.grid())) throw std::invalid_argument("advect: grids differ");
  Transformer& T = ws.tform();

  const CoeffMatrix Wc = cos_antiderivative_to_sin(ws.div2(u), g, detail::baro_tol(u));
  const CoeffMatrix Vp = pack(v.comp(0), v.comp(1));
  const CoeffMatrix dzV0 = cos_dz_to_sin(v.comp(0), g);
  const CoeffMatrix dzV1 = cos_dz_to_sin(v.comp(1), g);

  T.cos_synthesis(pack(u.comp(0), u.comp(1)), ws.UP);
  T.cos_synthesis(ws.dx(Vp), ws.VX);
  T.cos_synthesis(ws.dy(Vp), ws.VY);
  T.sin_synthesis(pack(Wc, dzV0), ws.S1);  // Re: W, Im: dz v1
  T.sin_synthesis(dzV1, ws.S2);            // Re: dz v2

  ws.R.resize(ws.UP.rows(), ws.UP.cols());
  ws.R.real() = ws.UP.real().array() * ws.VX.real().array() +
                ws.UP.imag().array() * ws.VY.real().array() -
                ws.S1.real().array() * ws.S1.imag().array();
  ws.R.imag() = ws.UP.real().array() * ws.VX.imag().array() +
                ws.UP.imag().array() * ws.VY.imag().array() -
                ws.S1.real().array() * ws.S2.real().array();

  CoeffMatrix X;
  T.cos_analysis(ws.R, X);
  SpectralField out(g);
  unpack_hermitian(X, g, out.comp(0), out.comp(1));
  return out;
}

inline SpectralField advect(const SpectralField& u, const SpectralField& v) {
  return advect(u, v, workspace_for(u.grid()));
}

/// Projected bilinear operator B(u, v).
inline SpectralField B(const SpectralField& u, const SpectralField& v, DynWorkspace& ws) {
  SpectralField b = advect(u, v, ws);
  project_in_place(b);
  return b;
}

inline SpectralField B(const SpectralField& u, const SpectralField& v) {
  return B(u, v, workspace_for(u.grid()));
}

/// grad_2 p = b(v,v) - B(v,v): the k = 0 horizontal-gradient part removed by
/// the projection. Supported on the barotropic plane, curl-free there.
inline SpectralField pressure_gradient(const SpectralField& v, DynWorkspace& ws) {
  SpectralField b = advect(v, v, ws);
  return b - project(b);
}

inline SpectralField pressure_gradient(const SpectralField& v) {
  return pressure_gradient(v, workspace_for(v.grid()));
}

/// Bilinear part of the linearized operator, B(u, w) + B(w, u), with the two
/// advections fused into one pseudo-spectral sweep.
inline SpectralField tangent_rhs(const SpectralField& base, const SpectralField& w,
                                 DynWorkspace& ws) {
  const GridSpec& g = base.grid();
  if (!g.same_layout(w.grid())) throw std::invalid_argument("tangent_rhs: grids differ");
  Transformer& T = ws.tform();

  const CoeffMatrix Wu = cos_antiderivative_to_sin(ws.div2(base), g, detail::baro_tol(base));
  const CoeffMatrix Ww = cos_antiderivative_to_sin(ws.div2(w), g, detail::baro_tol(w));
  const CoeffMatrix Up = pack(base.comp(0), base.comp(1));
  const CoeffMatrix Wp = pack(w.comp(0), w.comp(1));
  const CoeffMatrix dzU = cos_dz_to_sin(Up, g);
  const CoeffMatrix dzW = cos_dz_to_sin(Wp, g);

  T.cos_synthesis(Up, ws.UP);
  T.cos_synthesis(Wp, ws.WPp);
  T.cos_synthesis(ws.dx(Wp), ws.VX);
  T.cos_synthesis(ws.dy(Wp), ws.VY);
  T.cos_synthesis(ws.dx(Up), ws.UX);
  T.cos_synthesis(ws.dy(Up), ws.UY);
  T.sin_synthesis(pack(Wu, Ww), ws.S1);    // Re: W_u, Im: W_w
  T.sin_synthesis(dzW, ws.S2);             // Re: dz w1, Im: dz w2
  T.sin_synthesis(dzU, ws.S3);             // Re: dz u1, Im: dz u2

  ws.R.resize(ws.UP.rows(), ws.UP.cols());
  ws.R.real() = ws.UP.real().array() * ws.VX.real().array() +
                ws.UP.imag().array() * ws.VY.real().array() -
                ws.S1.real().array() * ws.S2.real().array() +
                ws.WPp.real().array() * ws.UX.real().array() +
                ws.WPp.imag().array() * ws.UY.real().array() -
                ws.S1.imag().array() * ws.S3.real().array();
  ws.R.imag() = ws.UP.real().array() * ws.VX.imag().array() +
                ws.UP.imag().array() * ws.VY.imag().array() -
                ws.S1.real().array() * ws.S2.imag().array() +
                ws.WPp.real().array() * ws.UX.imag().array() +
                ws.WPp.imag().array() * ws.UY.imag().array() -
                ws.S1.imag().array() * ws.S3.imag().array();

  CoeffMatrix X;
  T.cos_analysis(ws.R, X);
  SpectralField out(g);
  unpack_hermitian(X, g, out.comp(0), out.comp(1));
  project_in_place(out);
  return out;
}

inline SpectralField tangent_rhs(const TangentDirection& d) {
  return tangent_rhs(d.base, d.w, workspace_for(d.base.grid()));
}

/// Dual of the linearized advection in L^2:
///   <B(u,v) + B(v,u), w> = <v, adjoint_rhs(u, w)>,
/// realized as P( -b(u,w) + (d2 u^T) w - int_{-h}^z grad_2 (w . du/dz) ).
/// The sign of the vertical-integral term is fixed by the identity itself
/// (see the duality test); the vertical primitive uses the zero-mean
/// convention, whose constant ambiguity the projection removes.
inline SpectralField adjoint_rhs(const SpectralField& base, const SpectralField& w,
                                 DynWorkspace& ws) {
  const GridSpec& g = base.grid();
  if (!g.same_layout(w.grid())) throw std::invalid_argument("adjoint_rhs: grids differ");
  Transformer& T = ws.tform();

  const CoeffMatrix Wu = cos_antiderivative_to_sin(ws.div2(base), g, detail::baro_tol(base));
  const CoeffMatrix Up = pack(base.comp(0), base.comp(1));
  const CoeffMatrix Wp = pack(w.comp(0), w.comp(1));
  const CoeffMatrix dzU0 = cos_dz_to_sin(base.comp(0), g);
  const CoeffMatrix dzU1 = cos_dz_to_sin(base.comp(1), g);
  const CoeffMatrix dzW0 = cos_dz_to_sin(w.comp(0), g);
  const CoeffMatrix dzW1 = cos_dz_to_sin(w.comp(1), g);

  T.cos_synthesis(Up, ws.UP);
  T.cos_synthesis(Wp, ws.WPp);
  T.cos_synthesis(ws.dx(Wp), ws.VX);
  T.cos_synthesis(ws.dy(Wp), ws.VY);
  T.cos_synthesis(ws.dx(Up), ws.UX);
  T.cos_synthesis(ws.dy(Up), ws.UY);
  T.sin_synthesis(pack(Wu, dzW0), ws.S1);    // Re: W_u, Im: dz w1
  T.sin_synthesis(pack(dzW1, dzU0), ws.S2);  // Re: dz w2, Im: dz u1
  T.sin_synthesis(dzU1, ws.S3);              // Re: dz u2

  // -b(u,w) + (d2 u^T) w, pointwise.
  ws.R.resize(ws.UP.rows(), ws.UP.cols());
  ws.R.real() = -(ws.UP.real().array() * ws.VX.real().array() +
                  ws.UP.imag().array() * ws.VY.real().array() -
                  ws.S1.real().array() * ws.S1.imag().array()) +
                ws.WPp.real().array() * ws.UX.real().array() +
                ws.WPp.imag().array() * ws.UX.imag().array();
  ws.R.imag() = -(ws.UP.real().array() * ws.VX.imag().array() +
                  ws.UP.imag().array() * ws.VY.imag().array() -
                  ws.S1.real().array() * ws.S2.real().array()) +
                ws.WPp.real().array() * ws.UY.real().array() +
                ws.WPp.imag().array() * ws.UY.imag().array();

  // w . du/dz, a z-odd scalar; lift its horizontal gradient through the
  // vertical primitive.
  ws.RS.resize(ws.UP.rows(), ws.UP.cols());
  ws.RS.real() = ws.WPp.real().array() * ws.S2.imag().array() +
                 ws.WPp.imag().array() * ws.S3.real().array();
  ws.RS.imag().setZero();

  CoeffMatrix X, Gs;
  T.cos_analysis(ws.R, X);
  T.sin_analysis(ws.RS, Gs);

  SpectralField out(g);
  unpack_hermitian(X, g, out.comp(0), out.comp(1));
  out.comp(0) -= sin_antiderivative_to_cos(ws.dx(Gs), g);
  out.comp(1) -= sin_antiderivative_to_cos(ws.dy(Gs), g);
  project_in_place(out);
  return out;
}

inline SpectralField adjoint_rhs(const SpectralField& base, const SpectralField& w) {
  return adjoint_rhs(base, w, workspace_for(base.grid()));
}

}  // namespace peqs
