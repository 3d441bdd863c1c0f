#pragma once

#include <optional>

#include "osseg/volume.hpp"

namespace osseg {

// Per-voxel class distribution with the pre-softmax logits retained so that
// cross-entropy can be evaluated stably. probs is softmax(logits) channel-wise.
class Prediction {
 public:
  Prediction() = default;
  static Prediction from_logits(Tensor logits);
  // Builds logits as log(clamp(probs)); intended for tests and fixed inputs.
  static Prediction from_probs(Tensor probs);

  const Tensor& probs() const { return probs_; }
  const Tensor& logits() const { return logits_; }
  int num_classes() const { return probs_.shape()[0]; }
  Shape spatial_shape() const { return spatial_of(probs_.shape()); }

 private:
  Tensor logits_;
  Tensor probs_;
};

// Scalar weights of the training objectives.
struct LossWeights {
  double lambda_smooth = 15.0;
  double lambda_dice = 10.0;
  double lambda_kl = 1e-4;
  double lambda_rec = 0.5;

  void validate() const {
    require(lambda_smooth >= 0 && lambda_dice >= 0 && lambda_kl >= 0 && lambda_rec >= 0,
            "loss weights must be non-negative");
  }
};

double l2_similarity(const Volume& a, const Volume& b);
double l1_similarity(const Volume& a, const Volume& b);

// Mean over interior voxels of summed squared second derivatives of each
// displacement component (mixed terms twice); zero on affine fields.
double bending_energy(const DisplacementField& field);

// Soft Dice loss, mean over classes, 1 - Dice.
double dice_loss(const Prediction& p, const LabelMap& y);

// Mean over voxels of weight * (-log p[y]); weight defaults to 1 everywhere.
double ce_loss(const Prediction& p, const LabelMap& y, const Volume* weight = nullptr);

// Per-voxel KL divergence field between two predictions.
Volume kl_map(const Prediction& p, const Prediction& q);

// Cosine similarity of the flattened probability maps.
double adversarial_similarity(const Prediction& pred_g, const Prediction& pred_ag);

// dice_loss + ce_loss against the same labels.
double structure_loss(const Prediction& pred, const LabelMap& y);

// exp(-KL)-weighted cross-entropy plus lambda_kl * mean KL.
double rectification_loss(const Prediction& pred_g, const Prediction& pred_ref, const LabelMap& y,
                          double lambda_kl);

// Bidirectional registration consistency (similarity both ways + smoothness).
double bi_consistency_loss(const Volume& x_a, const Volume& x_u, const DisplacementField& f_a2u,
                           const DisplacementField& f_u2a, double lambda_smooth);

// Reversible reconstruction consistency: L1 image terms plus Dice agreement of
// reconstruction predictions with original-image predictions (argmax targets).
struct PredictionQuad {
  Prediction recon_a;     // prediction of the reconstructed atlas image
  Prediction original_a;  // prediction of the original atlas image
  Prediction recon_u;
  Prediction original_u;
};
double fb_consistency_loss(const Volume& x_bar_a, const Volume& x_bar_u, const Volume& x_a,
                           const Volume& x_u, const PredictionQuad& seg, double lambda_dice);

// One-hot encoding [C, spatial] of a label map.
Tensor one_hot(const LabelMap& y);

// Voxel-wise argmax of a [C, spatial] probability tensor.
LabelMap argmax_labels(const Tensor& probs);

}  // namespace osseg
