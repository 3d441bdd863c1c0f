#pragma once

#include "osseg/rng.hpp"
#include "osseg/volume.hpp"

namespace osseg {

// Separable Gaussian blur with replicate borders, kernel truncated at 3 sigma.
// Works on an arbitrary-rank plane in place.
void gaussian_blur_plane(float* data, const Shape& dims, double sigma);

Volume gaussian_blur(const Volume& v, double sigma);

// Band-limited random displacement field: per-component white noise, Gaussian
// smoothing, then a global rescale so the maximum absolute component equals
// `amplitude` (zero amplitude gives the zero field).
DisplacementField smooth_random_field(const Shape& spatial, double amplitude, double smoothness,
                                      Rng& rng);

}  // namespace osseg
