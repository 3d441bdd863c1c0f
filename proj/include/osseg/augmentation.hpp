#pragma once

#include "osseg/networks.hpp"
#include "osseg/volume.hpp"

namespace osseg {

// Spatial transform and appearance residual extracted from registration; the
// raw material for augmenting the atlas.
struct TransformPair {
  DisplacementField spatial;  // voxel displacements
  Volume appearance;          // intensity residual, image dynamic range

  TransformPair() = default;
  TransformPair(DisplacementField s, Volume a)
      : spatial(std::move(s)), appearance(std::move(a)) {
    require(spatial.spatial_shape() == appearance.shape(),
            "transform pair: spatial and appearance shapes differ");
  }
};

// One augmented training sample plus its spatial-only twin: the twin's labels
// are exact, making it the trusted branch for rectification.
struct AugmentedSample {
  Volume image;
  LabelMap labels;
  Volume warped_atlas;
  DisplacementField spatial_used;
};

// Deformation aligning the atlas toward a spatial reference.
DisplacementField extract_spatial(const RegistrationNet& reg, const Volume& atlas_image,
                                  const Volume& spatial_ref);

// Appearance residual: the reference inverse-warped into atlas space (via the
// swapped-argument registration pass) minus the atlas image.
Volume extract_appearance(const RegistrationNet& reg, const Volume& atlas_image,
                          const Volume& appearance_ref);

// image = (x + psi) o phi, labels = y o phi, twin = x o phi.
AugmentedSample vanilla_augment(const Atlas& atlas, const TransformPair& t);

// Adversarially modulated sample from explicit alpha/beta maps: the spatial
// field is scaled per voxel by alpha in (0,1), the appearance residual is
// shifted by beta in (-1,1) times the residual's mean.
AugmentedSample adversarial_augment_with(const Atlas& atlas, const TransformPair& t,
                                         const Tensor& alpha, const Tensor& beta);

// Same, with alpha/beta sampled from the adversarial network on x_g.
AugmentedSample adversarial_augment(const AdversarialNet& adv, const Atlas& atlas,
                                    const TransformPair& t, const Volume& x_g);

}  // namespace osseg
