#pragma once

#include <cstdint>
#include <utility>

#include "osseg/errors.hpp"
#include "osseg/tensor.hpp"

namespace osseg {

// Dense scalar grid over a 2D or 3D spatial domain. Carrier for images,
// residuals and probability channels. Values must stay finite.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Shape spatial, float fill = 0.0f) : data_(validated(std::move(spatial)), fill) {}
  Volume(Shape spatial, std::vector<float> values)
      : data_(validated(std::move(spatial)), std::move(values)) {
    if (!all_finite(data_)) throw NumericError("volume contains non-finite values");
  }

  const Shape& shape() const { return data_.shape(); }
  int rank() const { return data_.rank(); }
  std::int64_t size() const { return data_.size(); }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](std::int64_t i) { return data_[i]; }
  const float& operator[](std::int64_t i) const { return data_[i]; }
  Tensor& tensor() { return data_; }
  const Tensor& tensor() const { return data_; }

  bool operator==(const Volume&) const = default;

 private:
  static Shape validated(Shape s) {
    require(s.size() == 2 || s.size() == 3, "volume rank must be 2 or 3, got " + shape_str(s));
    require_positive(s, "volume");
    return s;
  }
  Tensor data_;
};

// Integer-class grid with the same spatial conventions as Volume.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(Shape spatial, int num_classes)
      : data_(validated(std::move(spatial), num_classes)), num_classes_(num_classes) {}
  LabelMap(Shape spatial, int num_classes, std::vector<std::int32_t> values)
      : data_(validated(std::move(spatial), num_classes), std::move(values)),
        num_classes_(num_classes) {
    for (std::int64_t i = 0; i < data_.size(); ++i)
      require(data_[i] >= 0 && data_[i] < num_classes_,
              "label value " + std::to_string(data_[i]) + " outside [0, " +
                  std::to_string(num_classes_) + ")");
  }

  const Shape& shape() const { return data_.shape(); }
  int rank() const { return data_.rank(); }
  std::int64_t size() const { return data_.size(); }
  int num_classes() const { return num_classes_; }
  std::int32_t* data() { return data_.data(); }
  const std::int32_t* data() const { return data_.data(); }
  std::int32_t& operator[](std::int64_t i) { return data_[i]; }
  const std::int32_t& operator[](std::int64_t i) const { return data_[i]; }

  bool operator==(const LabelMap&) const = default;

 private:
  static Shape validated(Shape s, int num_classes) {
    require(s.size() == 2 || s.size() == 3, "label map rank must be 2 or 3, got " + shape_str(s));
    require_positive(s, "label map");
    require(num_classes >= 1, "num_classes must be positive");
    return s;
  }
  TensorT<std::int32_t> data_;
  int num_classes_ = 0;
};

// Per-voxel displacement vectors in voxel units, pull-back convention:
// a warp samples the source at x + field(x). Stored component-major as
// [D, spatial...] where component d displaces spatial axis d.
class DisplacementField {
 public:
  DisplacementField() = default;
  explicit DisplacementField(Shape spatial)
      : data_(with_channels(static_cast<int>(spatial.size()), validated(spatial))) {}
  DisplacementField(Shape spatial, std::vector<float> values)
      : data_(with_channels(static_cast<int>(spatial.size()), validated(spatial)),
              std::move(values)) {
    if (!all_finite(data_)) throw NumericError("displacement field contains non-finite values");
  }
  explicit DisplacementField(Tensor component_major) : data_(std::move(component_major)) {
    require(data_.rank() >= 3 && data_.shape()[0] == data_.rank() - 1,
            "displacement tensor must be [D, spatial...] with D matching spatial rank, got " +
                shape_str(data_.shape()));
    if (!all_finite(data_)) throw NumericError("displacement field contains non-finite values");
  }

  Shape spatial_shape() const { return spatial_of(data_.shape()); }
  int spatial_rank() const { return data_.rank() - 1; }
  std::int64_t voxels() const { return data_.size() / spatial_rank(); }
  // Pointer to the start of component d's grid.
  float* component(int d) { return data_.data() + d * voxels(); }
  const float* component(int d) const { return data_.data() + d * voxels(); }
  Tensor& tensor() { return data_; }
  const Tensor& tensor() const { return data_; }

  bool operator==(const DisplacementField&) const = default;

 private:
  static Shape validated(Shape s) {
    require(s.size() == 2 || s.size() == 3, "field rank must be 2 or 3, got " + shape_str(s));
    require_positive(s, "displacement field");
    return s;
  }
  Tensor data_;
};

// A volume's data viewed as a single-channel tensor [1, spatial], the layout
// graph ops expect.
inline Tensor with_channel_axis(const Volume& v) {
  return Tensor(with_channels(1, v.shape()), v.tensor().values());
}

inline Volume drop_channel_axis(const Tensor& t) {
  require(t.shape()[0] == 1, "expected a single-channel tensor, got " + shape_str(t.shape()));
  return Volume(spatial_of(t.shape()), t.values());
}

// The single labeled example: image x with its label map y.
struct Atlas {
  Volume image;
  LabelMap labels;

  Atlas() = default;
  Atlas(Volume img, LabelMap lab) : image(std::move(img)), labels(std::move(lab)) {
    require(image.shape() == labels.shape(), "atlas image and labels must share spatial shape");
  }
};

}  // namespace osseg
