#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "peqs/field.hpp"
#include "peqs/grid.hpp"

namespace peqs {

struct SnapshotError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw SnapshotError("snapshot: truncated u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw SnapshotError("snapshot: truncated f64");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

inline void write_body(std::ostream& os, const SpectralField& f) {
  const GridSpec& g = f.grid();
  os.write("PEQS", 4);
  put_u32(os, 1u);
  put_f64(os, g.L);
  put_f64(os, g.h);
  put_u32(os, static_cast<std::uint32_t>(g.Nx));
  put_u32(os, static_cast<std::uint32_t>(g.Ny));
  put_u32(os, static_cast<std::uint32_t>(g.Nz));
  put_u32(os, static_cast<std::uint32_t>(g.m_sobolev));
  put_f64(os, g.delta);
  for (int c = 0; c < 2; ++c)
    for (int m = -g.Nx / 2 + 1; m <= g.Nx / 2; ++m)
      for (int n = -g.Ny / 2 + 1; n <= g.Ny / 2; ++n)
        for (int k = 0; k < g.Nz; ++k) {
          const Complex z = f.at(c, m, n, k);
          put_f64(os, z.real());
          put_f64(os, z.imag());
        }
}

inline SpectralField read_body(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "PEQS") throw SnapshotError("snapshot: bad magic");
  const std::uint32_t version = get_u32(is);
  if (version != 1u) throw SnapshotError("snapshot: unsupported version");
  GridSpec g;
  g.L = get_f64(is);
  g.h = get_f64(is);
  g.Nx = static_cast<int>(get_u32(is));
  g.Ny = static_cast<int>(get_u32(is));
  g.Nz = static_cast<int>(get_u32(is));
  g.m_sobolev = static_cast<int>(get_u32(is));
  g.delta = get_f64(is);
  g.validate();
  SpectralField f(g);
  for (int c = 0; c < 2; ++c)
    for (int m = -g.Nx / 2 + 1; m <= g.Nx / 2; ++m)
      for (int n = -g.Ny / 2 + 1; n <= g.Ny / 2; ++n)
        for (int k = 0; k < g.Nz; ++k) {
          const double re = get_f64(is);
          const double im = get_f64(is);
          f.at(c, m, n, k) = Complex(re, im);
        }
  return f;
}

}  // namespace detail

inline void save_snapshot(const SpectralField& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw SnapshotError("snapshot: cannot open " + path + " for writing");
  detail::write_body(os, f);
  if (!os) throw SnapshotError("snapshot: write failed for " + path);
}

inline SpectralField load_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SnapshotError("snapshot: cannot open " + path);
  return detail::read_body(is);
}

/// Trajectory checkpoint: the snapshot body with an appended f64 timestamp.
inline void save_checkpoint(const SpectralField& f, Real t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw SnapshotError("snapshot: cannot open " + path + " for writing");
  detail::write_body(os, f);
  detail::put_f64(os, t);
  if (!os) throw SnapshotError("snapshot: write failed for " + path);
}

inline std::pair<SpectralField, Real> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SnapshotError("snapshot: cannot open " + path);
  SpectralField f = detail::read_body(is);
  const Real t = detail::get_f64(is);
  return {std::move(f), t};
}

}  // namespace peqs
