#pragma once

#include "osseg/volume.hpp"

namespace osseg {

enum class Interpolation { Linear, Nearest };

// Coordinate grid with grid[d][x] = x_d for every voxel, shape [D, spatial].
// Accepts any rank >= 1 (rank 1 is a degenerate mode used by tests).
Tensor identity_grid(const Shape& spatial);

// Pull-back warp out(x) = v(x + field(x)) with clamp-to-edge borders.
// A zero field returns v bit-for-bit under linear interpolation.
Volume warp_volume(const Volume& v, const DisplacementField& field,
                   Interpolation interp = Interpolation::Linear);

// Label warp via one-hot encoding, per-channel linear warp, voxel-wise argmax.
LabelMap warp_labels(const LabelMap& y, const DisplacementField& field);

// Field composition: composed(x) = f2(x) + f1(x + f2(x)), so that
// warp(warp(v, f1), f2) == warp(v, compose_fields(f1, f2)) up to interpolation.
DisplacementField compose_fields(const DisplacementField& f1, const DisplacementField& f2);

// Fixed-point inversion: inv_{k+1}(x) = -f(x + inv_k(x)) starting from zero.
DisplacementField invert_field(const DisplacementField& field, int iterations);

}  // namespace osseg
