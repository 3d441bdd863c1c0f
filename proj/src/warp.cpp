#include "osseg/warp.hpp"

#include <algorithm>
#include <vector>

#include "osseg/detail/warp_kernels.hpp"

namespace osseg {

Tensor identity_grid(const Shape& spatial) {
  require(!spatial.empty(), "identity_grid needs at least one axis");
  require_positive(spatial, "identity_grid");
  const int rank = static_cast<int>(spatial.size());
  const std::int64_t vox = numel(spatial);
  Tensor grid(with_channels(rank, spatial));

  std::vector<std::int64_t> stride(rank, 1);
  for (int d = rank - 2; d >= 0; --d) stride[d] = stride[d + 1] * spatial[d + 1];

  for (std::int64_t v = 0; v < vox; ++v) {
    std::int64_t rem = v;
    for (int d = 0; d < rank; ++d) {
      grid[d * vox + v] = static_cast<float>(rem / stride[d]);
      rem %= stride[d];
    }
  }
  return grid;
}

namespace {
void check_match(const Shape& a, const Shape& b, const char* what) {
  require(a == b, std::string(what) + ": spatial shapes differ, " + shape_str(a) + " vs " +
                      shape_str(b));
}
}  // namespace

Volume warp_volume(const Volume& v, const DisplacementField& field, Interpolation interp) {
  check_match(v.shape(), field.spatial_shape(), "warp_volume");
  Volume out(v.shape());
  if (interp == Interpolation::Linear)
    detail::warp_pull_linear(v.data(), field.tensor().data(), v.shape(), 1, out.data());
  else
    detail::warp_pull_nearest(v.data(), field.tensor().data(), v.shape(), 1, out.data());
  return out;
}

LabelMap warp_labels(const LabelMap& y, const DisplacementField& field) {
  check_match(y.shape(), field.spatial_shape(), "warp_labels");
  const int C = y.num_classes();
  const std::int64_t vox = y.size();

  Tensor onehot(with_channels(C, y.shape()));
  for (std::int64_t v = 0; v < vox; ++v) onehot[static_cast<std::int64_t>(y[v]) * vox + v] = 1.0f;

  Tensor warped(onehot.shape());
  detail::warp_pull_linear(onehot.data(), field.tensor().data(), y.shape(), C, warped.data());

  LabelMap out(y.shape(), C);
  for (std::int64_t v = 0; v < vox; ++v) {
    int best = 0;
    float best_val = warped[v];
    for (int c = 1; c < C; ++c) {
      float val = warped[static_cast<std::int64_t>(c) * vox + v];
      if (val > best_val) {
        best_val = val;
        best = c;
      }
    }
    out[v] = best;
  }
  return out;
}

DisplacementField compose_fields(const DisplacementField& f1, const DisplacementField& f2) {
  check_match(f1.spatial_shape(), f2.spatial_shape(), "compose_fields");
  const Shape spatial = f1.spatial_shape();
  const int rank = f1.spatial_rank();

  Tensor sampled(f1.tensor().shape());
  detail::warp_pull_linear(f1.tensor().data(), f2.tensor().data(), spatial, rank, sampled.data());
  for (std::int64_t i = 0; i < sampled.size(); ++i) sampled[i] += f2.tensor()[i];
  return DisplacementField(std::move(sampled));
}

DisplacementField invert_field(const DisplacementField& field, int iterations) {
  require(iterations >= 1, "invert_field needs at least one iteration");
  const Shape spatial = field.spatial_shape();
  const int rank = field.spatial_rank();

  Tensor inv(field.tensor().shape());
  Tensor sampled(field.tensor().shape());
  for (int k = 0; k < iterations; ++k) {
    detail::warp_pull_linear(field.tensor().data(), inv.data(), spatial, rank, sampled.data());
    for (std::int64_t i = 0; i < sampled.size(); ++i) inv[i] = -sampled[i];
  }
  return DisplacementField(std::move(inv));
}

}  // namespace osseg
