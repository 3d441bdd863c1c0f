#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "osseg/shape.hpp"

namespace osseg::detail {

// Pull-back sampling out(x) = src(x + field(x)) with clamp-to-edge borders.
// src/dst are [channels][voxels], field is [rank][voxels] (component d
// displaces spatial axis d), dims is the spatial shape. Rank is 2 or 3 but the
// kernels are written generically over rank; corner enumeration is 2^rank.
//
// Linear interpolation reproduces src bit-for-bit under a zero field: the
// resting corner weight is exactly 1 and every other corner weight is a signed
// zero, which float addition absorbs.

struct AxisSample {
  int i0 = 0;
  int i1 = 0;
  double frac = 0.0;
  double inside = 1.0;  // 0 when the raw coordinate fell outside and was clamped
};

inline AxisSample sample_axis(double pos, int n) {
  AxisSample a;
  double clamped = pos;
  a.inside = 1.0;
  if (clamped < 0.0) {
    clamped = 0.0;
    a.inside = 0.0;
  } else if (clamped > static_cast<double>(n - 1)) {
    clamped = static_cast<double>(n - 1);
    a.inside = 0.0;
  }
  double f = std::floor(clamped);
  a.i0 = static_cast<int>(f);
  a.i1 = a.i0 + 1 < n ? a.i0 + 1 : a.i0;
  a.frac = clamped - f;
  return a;
}

template <class T>
void warp_pull_linear(const T* src, const T* field, const Shape& dims, int channels, T* dst) {
  const int rank = static_cast<int>(dims.size());
  const std::int64_t vox = numel(dims);

  std::array<std::int64_t, 3> stride{};
  stride[rank - 1] = 1;
  for (int d = rank - 2; d >= 0; --d) stride[d] = stride[d + 1] * dims[d + 1];

  std::array<int, 3> coord{};
  const int corners = 1 << rank;
  for (std::int64_t v = 0; v < vox; ++v) {
    std::array<AxisSample, 3> ax;
    for (int d = 0; d < rank; ++d) {
      double pos = static_cast<double>(coord[d]) + static_cast<double>(field[d * vox + v]);
      ax[d] = sample_axis(pos, dims[d]);
    }
    for (int c = 0; c < channels; ++c) {
      const T* plane = src + static_cast<std::int64_t>(c) * vox;
      T acc = T(0);
      for (int m = 0; m < corners; ++m) {
        T w = T(1);
        std::int64_t idx = 0;
        for (int d = 0; d < rank; ++d) {
          if (m & (1 << d)) {
            w *= static_cast<T>(ax[d].frac);
            idx += ax[d].i1 * stride[d];
          } else {
            w *= static_cast<T>(1.0 - ax[d].frac);
            idx += ax[d].i0 * stride[d];
          }
        }
        acc += w * plane[idx];
      }
      dst[static_cast<std::int64_t>(c) * vox + v] = acc;
    }
    for (int d = rank - 1; d >= 0; --d) {
      if (++coord[d] < dims[d]) break;
      coord[d] = 0;
    }
  }
}

template <class T>
void warp_pull_nearest(const T* src, const T* field, const Shape& dims, int channels, T* dst) {
  const int rank = static_cast<int>(dims.size());
  const std::int64_t vox = numel(dims);

  std::array<std::int64_t, 3> stride{};
  stride[rank - 1] = 1;
  for (int d = rank - 2; d >= 0; --d) stride[d] = stride[d + 1] * dims[d + 1];

  std::array<int, 3> coord{};
  for (std::int64_t v = 0; v < vox; ++v) {
    std::int64_t idx = 0;
    for (int d = 0; d < rank; ++d) {
      double pos = static_cast<double>(coord[d]) + static_cast<double>(field[d * vox + v]);
      int i = static_cast<int>(std::floor(pos + 0.5));
      if (i < 0) i = 0;
      if (i > dims[d] - 1) i = dims[d] - 1;
      idx += i * stride[d];
    }
    for (int c = 0; c < channels; ++c)
      dst[static_cast<std::int64_t>(c) * vox + v] = src[static_cast<std::int64_t>(c) * vox + idx];
    for (int d = rank - 1; d >= 0; --d) {
      if (++coord[d] < dims[d]) break;
      coord[d] = 0;
    }
  }
}

// Backward of linear pull-back sampling. Accumulates into gsrc (same layout as
// src) and gfield (same layout as field); either may be null. Gradients with
// respect to field components vanish where the raw coordinate was clamped.
template <class T>
void warp_pull_linear_backward(const T* src, const T* field, const Shape& dims, int channels,
                               const T* gout, T* gsrc, T* gfield) {
  const int rank = static_cast<int>(dims.size());
  const std::int64_t vox = numel(dims);

  std::array<std::int64_t, 3> stride{};
  stride[rank - 1] = 1;
  for (int d = rank - 2; d >= 0; --d) stride[d] = stride[d + 1] * dims[d + 1];

  std::array<int, 3> coord{};
  const int corners = 1 << rank;
  for (std::int64_t v = 0; v < vox; ++v) {
    std::array<AxisSample, 3> ax;
    for (int d = 0; d < rank; ++d) {
      double pos = static_cast<double>(coord[d]) + static_cast<double>(field[d * vox + v]);
      ax[d] = sample_axis(pos, dims[d]);
    }
    for (int c = 0; c < channels; ++c) {
      const T g = gout[static_cast<std::int64_t>(c) * vox + v];
      if (g == T(0)) continue;
      const T* plane = src + static_cast<std::int64_t>(c) * vox;
      T* gplane = gsrc ? gsrc + static_cast<std::int64_t>(c) * vox : nullptr;
      for (int m = 0; m < corners; ++m) {
        double w = 1.0;
        std::int64_t idx = 0;
        for (int d = 0; d < rank; ++d) {
          if (m & (1 << d)) {
            w *= ax[d].frac;
            idx += ax[d].i1 * stride[d];
          } else {
            w *= 1.0 - ax[d].frac;
            idx += ax[d].i0 * stride[d];
          }
        }
        if (gplane) gplane[idx] += g * static_cast<T>(w);
        if (gfield) {
          // d weight / d frac_d replaces axis d's factor by +/-1
          for (int d = 0; d < rank; ++d) {
            double dw = (m & (1 << d)) ? 1.0 : -1.0;
            for (int e = 0; e < rank; ++e) {
              if (e == d) continue;
              dw *= (m & (1 << e)) ? ax[e].frac : 1.0 - ax[e].frac;
            }
            gfield[d * vox + v] +=
                g * static_cast<T>(dw * ax[d].inside) * plane[idx];
          }
        }
      }
    }
    for (int d = rank - 1; d >= 0; --d) {
      if (++coord[d] < dims[d]) break;
      coord[d] = 0;
    }
  }
}

}  // namespace osseg::detail
