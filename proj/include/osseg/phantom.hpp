#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "osseg/rng.hpp"
#include "osseg/volume.hpp"

namespace osseg {

// Parameters of the procedural labeled-phantom family: a "brain-like" nested
// ellipsoid template plus per-subject spatial deformation, intensity bias,
// noise, per-class jitter and image-only lesions.
struct PhantomSpec {
  int spatial_rank = 3;
  Shape size = {32, 32, 32};
  int num_structures = 9;  // class count including background
  double deform_amplitude = 5.0;   // peak displacement, voxels
  double deform_smoothness = 6.0;  // blur width of the random fields, voxels
  double bias_amplitude = 0.15;    // fraction of the intensity range
  double noise_sigma = 0.02;       // additive noise, intensity units
  double intensity_jitter = 0.06;  // per-class multiplicative jitter range
  double texture_amplitude = 0.18; // smooth intra-tissue texture in the template
  double lesion_rate = 0.35;       // probability of an image-only lesion per subject
  std::uint64_t seed = 0;

  void validate() const;
};

// A generated population: the labeled atlas, unlabeled training images, and
// held-out labeled pairs for evaluation. The manifest is a JSON document that
// regenerates the cohort bit-for-bit.
struct Cohort {
  Atlas atlas;
  std::vector<Volume> unlabeled;
  std::vector<std::pair<Volume, LabelMap>> heldout;
  std::string manifest;
};

// Deterministic labeled template: ellipsoidal shell, interior, central cavity
// and blob structures with distinct intensities; labels partition the grid.
Atlas make_template(const PhantomSpec& spec);

// The seeded displacement applied to one subject: band-limited noise at the
// spec's smoothness plus a half-extent global mode, jointly rescaled so the
// peak displacement is deform_amplitude times a uniform draw in [0.5, 1).
DisplacementField population_field(const PhantomSpec& spec, Rng& rng);

// One synthetic subject: template warped by a seeded smooth displacement
// (image and labels together), then image-only class jitter, bias field,
// optional lesion, and noise. The lesion never alters labels.
std::pair<Volume, LabelMap> make_subject(const Atlas& tmpl, const PhantomSpec& spec,
                                         std::uint64_t subject_seed);

Cohort make_cohort(const PhantomSpec& spec, int n_unlabeled, int n_heldout);

// Rebuilds a cohort from its manifest.
Cohort cohort_from_manifest(const std::string& manifest);

}  // namespace osseg
