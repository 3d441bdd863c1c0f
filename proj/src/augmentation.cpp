#include "osseg/augmentation.hpp"

#include "osseg/warp.hpp"

namespace osseg {

DisplacementField extract_spatial(const RegistrationNet& reg, const Volume& atlas_image,
                                  const Volume& spatial_ref) {
  return register_pair(reg, atlas_image, spatial_ref);
}

Volume extract_appearance(const RegistrationNet& reg, const Volume& atlas_image,
                          const Volume& appearance_ref) {
  require(atlas_image.shape() == appearance_ref.shape(), "extract_appearance: shape mismatch");
  // the inverse registration is the network pass with the roles swapped
  DisplacementField inv = register_pair(reg, appearance_ref, atlas_image);
  Volume warped_ref = warp_volume(appearance_ref, inv);
  Volume residual(atlas_image.shape());
  for (std::int64_t i = 0; i < residual.size(); ++i)
    residual[i] = warped_ref[i] - atlas_image[i];
  return residual;
}

AugmentedSample vanilla_augment(const Atlas& atlas, const TransformPair& t) {
  require(atlas.image.shape() == t.spatial.spatial_shape(), "vanilla_augment: shape mismatch");
  Volume appearance_applied(atlas.image.shape());
  for (std::int64_t i = 0; i < appearance_applied.size(); ++i)
    appearance_applied[i] = atlas.image[i] + t.appearance[i];

  AugmentedSample s;
  s.image = warp_volume(appearance_applied, t.spatial);
  s.labels = warp_labels(atlas.labels, t.spatial);
  s.warped_atlas = warp_volume(atlas.image, t.spatial);
  s.spatial_used = t.spatial;
  return s;
}

AugmentedSample adversarial_augment_with(const Atlas& atlas, const TransformPair& t,
                                         const Tensor& alpha, const Tensor& beta) {
  require(alpha.shape() == t.spatial.tensor().shape(),
          "adversarial_augment: alpha must match the field layout");
  require(spatial_of(beta.shape()) == atlas.image.shape() && beta.shape()[0] == 1,
          "adversarial_augment: beta must be a [1, spatial] map");

  const std::int64_t vox = atlas.image.size();
  Tensor scaled(t.spatial.tensor().shape());
  for (std::int64_t i = 0; i < scaled.size(); ++i)
    scaled[i] = alpha[i] * t.spatial.tensor()[i];
  DisplacementField field_a(std::move(scaled));

  // mean residual, then psi_a = psi + beta * mean(psi)
  double mean_psi = 0.0;
  for (std::int64_t i = 0; i < vox; ++i) mean_psi += t.appearance[i];
  mean_psi /= static_cast<double>(vox);
  const float psi_bar = static_cast<float>(mean_psi);

  Volume appearance_applied(atlas.image.shape());
  for (std::int64_t i = 0; i < vox; ++i)
    appearance_applied[i] = atlas.image[i] + (t.appearance[i] + beta[i] * psi_bar);

  AugmentedSample s;
  s.image = warp_volume(appearance_applied, field_a);
  s.labels = warp_labels(atlas.labels, field_a);
  s.warped_atlas = warp_volume(atlas.image, field_a);
  s.spatial_used = std::move(field_a);
  return s;
}

AugmentedSample adversarial_augment(const AdversarialNet& adv, const Atlas& atlas,
                                    const TransformPair& t, const Volume& x_g) {
  auto [alpha, beta] = sample_perturbation(adv, x_g);
  return adversarial_augment_with(atlas, t, alpha, beta);
}

}  // namespace osseg
