#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace osseg {

// Dimension sizes, outermost axis first. Spatial axis order is (z, y, x) in 3D
// and (y, x) in 2D; channel-bearing tensors put the channel axis first.
using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_positive(const Shape& s, const std::string& what) {
  for (int d : s) require(d >= 1, what + " has non-positive size " + shape_str(s));
}

// Shape with a leading channel axis prepended.
inline Shape with_channels(int channels, const Shape& spatial) {
  Shape s;
  s.reserve(spatial.size() + 1);
  s.push_back(channels);
  s.insert(s.end(), spatial.begin(), spatial.end());
  return s;
}

// Drops the leading channel axis.
inline Shape spatial_of(const Shape& channeled) {
  require(channeled.size() >= 2, "expected a channel axis in shape " + shape_str(channeled));
  return Shape(channeled.begin() + 1, channeled.end());
}

}  // namespace osseg
