#pragma once

// Brute-force reference implementations used as independent oracles. These are
// written against the documented semantics only and deliberately share no code
// with the library kernels.

#include <algorithm>
#include <cmath>
#include <vector>

#include "osseg/rng.hpp"
#include "osseg/volume.hpp"

namespace oracle {

// Scalar pull-back trilinear interpolation with clamp-to-edge, explicit
// 8-corner weighting. dims = (nz, ny, nx).
inline double trilinear_at(const std::vector<double>& v, int nz, int ny, int nx, double z,
                           double y, double x) {
  z = std::clamp(z, 0.0, static_cast<double>(nz - 1));
  y = std::clamp(y, 0.0, static_cast<double>(ny - 1));
  x = std::clamp(x, 0.0, static_cast<double>(nx - 1));
  const int z0 = static_cast<int>(std::floor(z));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int z1 = std::min(z0 + 1, nz - 1);
  const int y1 = std::min(y0 + 1, ny - 1);
  const int x1 = std::min(x0 + 1, nx - 1);
  const double fz = z - z0, fy = y - y0, fx = x - x0;
  auto at = [&](int zz, int yy, int xx) {
    return v[(static_cast<std::size_t>(zz) * ny + yy) * nx + xx];
  };
  return (1 - fz) * (1 - fy) * (1 - fx) * at(z0, y0, x0) +
         (1 - fz) * (1 - fy) * fx * at(z0, y0, x1) +
         (1 - fz) * fy * (1 - fx) * at(z0, y1, x0) +
         (1 - fz) * fy * fx * at(z0, y1, x1) +
         fz * (1 - fy) * (1 - fx) * at(z1, y0, x0) +
         fz * (1 - fy) * fx * at(z1, y0, x1) +
         fz * fy * (1 - fx) * at(z1, y1, x0) +
         fz * fy * fx * at(z1, y1, x1);
}

// Full-volume pull-back warp against a displacement field, 3D only.
inline std::vector<double> warp3d(const std::vector<double>& v, int nz, int ny, int nx,
                                  const std::vector<double>& disp_z,
                                  const std::vector<double>& disp_y,
                                  const std::vector<double>& disp_x) {
  std::vector<double> out(v.size());
  std::size_t i = 0;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x, ++i)
        out[i] = trilinear_at(v, nz, ny, nx, z + disp_z[i], y + disp_y[i], x + disp_x[i]);
  return out;
}

// Bilinear counterpart for 2D grids.
inline double bilinear_at(const std::vector<double>& v, int ny, int nx, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(ny - 1));
  x = std::clamp(x, 0.0, static_cast<double>(nx - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, ny - 1);
  const int x1 = std::min(x0 + 1, nx - 1);
  const double fy = y - y0, fx = x - x0;
  auto at = [&](int yy, int xx) { return v[static_cast<std::size_t>(yy) * nx + xx]; };
  return (1 - fy) * (1 - fx) * at(y0, x0) + (1 - fy) * fx * at(y0, x1) +
         fy * (1 - fx) * at(y1, x0) + fy * fx * at(y1, x1);
}

inline std::vector<double> to_doubles(const osseg::Volume& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// Random volume with values in [0, 1).
inline osseg::Volume random_volume(const osseg::Shape& shape, osseg::Rng& rng) {
  osseg::Volume v(shape);
  for (std::int64_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(rng.uniform());
  return v;
}

// Random displacement field with per-component magnitude below `amp`.
inline osseg::DisplacementField random_field(const osseg::Shape& shape, double amp,
                                             osseg::Rng& rng) {
  osseg::DisplacementField f(shape);
  const std::int64_t n = f.tensor().size();
  for (std::int64_t i = 0; i < n; ++i)
    f.tensor()[i] = static_cast<float>(rng.uniform(-amp, amp));
  return f;
}

// Random field whose sampled coordinates stay strictly inside the grid and
// away from integer lattice points; keeps finite differencing of the warp
// well-posed (no clamp subgradients, no floor discontinuities).
inline osseg::DisplacementField interior_safe_field(const osseg::Shape& shape, osseg::Rng& rng) {
  osseg::DisplacementField f(shape);
  const int rank = static_cast<int>(shape.size());
  const std::int64_t vox = osseg::numel(shape);
  std::vector<std::int64_t> stride(rank, 1);
  for (int d = rank - 2; d >= 0; --d) stride[d] = stride[d + 1] * shape[d + 1];
  for (std::int64_t v = 0; v < vox; ++v) {
    for (int d = 0; d < rank; ++d) {
      const int coord = static_cast<int>((v / stride[d]) % shape[d]);
      double mag = rng.uniform(0.1, 0.35);
      double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      if (coord == 0) sign = 1.0;
      if (coord == shape[d] - 1) sign = -1.0;
      f.tensor()[d * vox + v] = static_cast<float>(sign * mag);
    }
  }
  return f;
}

}  // namespace oracle
