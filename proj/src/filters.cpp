#include "osseg/filters.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace osseg {

namespace {

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i / sigma) * (i / sigma));
    k[static_cast<std::size_t>(i + radius)] = static_cast<float>(w);
    sum += w;
  }
  for (auto& w : k) w = static_cast<float>(w / sum);
  return k;
}

}  // namespace

void gaussian_blur_plane(float* data, const Shape& dims, double sigma) {
  if (sigma <= 0.0) return;
  const int rank = static_cast<int>(dims.size());
  const std::int64_t n = numel(dims);
  const auto kernel = gaussian_kernel(sigma);
  const int radius = (static_cast<int>(kernel.size()) - 1) / 2;

  std::vector<std::int64_t> stride(rank, 1);
  for (int d = rank - 2; d >= 0; --d) stride[d] = stride[d + 1] * dims[d + 1];

  std::vector<float> tmp(static_cast<std::size_t>(n));
  for (int axis = 0; axis < rank; ++axis) {
    const int extent = dims[axis];
    const std::int64_t s = stride[axis];
    for (std::int64_t i = 0; i < n; ++i) {
      const int coord = static_cast<int>((i / s) % extent);
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        const int c = std::clamp(coord + t, 0, extent - 1);
        acc += kernel[static_cast<std::size_t>(t + radius)] * data[i + (c - coord) * s];
      }
      tmp[static_cast<std::size_t>(i)] = static_cast<float>(acc);
    }
    std::copy(tmp.begin(), tmp.end(), data);
  }
}

Volume gaussian_blur(const Volume& v, double sigma) {
  Volume out = v;
  gaussian_blur_plane(out.data(), out.shape(), sigma);
  return out;
}

DisplacementField smooth_random_field(const Shape& spatial, double amplitude, double smoothness,
                                      Rng& rng) {
  DisplacementField field(spatial);
  if (amplitude == 0.0) return field;
  const int rank = field.spatial_rank();
  const std::int64_t vox = field.voxels();
  for (std::int64_t i = 0; i < vox * rank; ++i)
    field.tensor()[i] = static_cast<float>(rng.normal());
  for (int d = 0; d < rank; ++d) gaussian_blur_plane(field.component(d), spatial, smoothness);

  float peak = 0.0f;
  for (std::int64_t i = 0; i < vox * rank; ++i)
    peak = std::max(peak, std::abs(field.tensor()[i]));
  if (peak == 0.0f) return field;
  const float scale = static_cast<float>(amplitude) / peak;
  for (std::int64_t i = 0; i < vox * rank; ++i) field.tensor()[i] *= scale;
  return field;
}

}  // namespace osseg
