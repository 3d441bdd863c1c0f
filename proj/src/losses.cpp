#include "osseg/losses.hpp"

#include <cmath>

#include "osseg/loss_ops.hpp"

namespace osseg {

Prediction Prediction::from_logits(Tensor logits) {
  require(logits.rank() >= 3, "prediction logits must be [C, spatial]");
  Prediction p;
  auto probs = ad::softmax_channels(ad::constant(Tensor(logits)));
  p.logits_ = std::move(logits);
  p.probs_ = probs->value;
  return p;
}

Prediction Prediction::from_probs(Tensor probs) {
  require(probs.rank() >= 3, "prediction probs must be [C, spatial]");
  const int C = probs.shape()[0];
  const std::int64_t vox = probs.size() / C;
  for (std::int64_t v = 0; v < vox; ++v) {
    float sum = 0.0f;
    for (int c = 0; c < C; ++c) {
      const float pv = probs[c * vox + v];
      require(pv >= 0.0f && pv <= 1.0f, "probabilities must lie in [0, 1]");
      sum += pv;
    }
    require(std::abs(sum - 1.0f) <= 1e-5f, "per-voxel probabilities must sum to 1");
  }
  Prediction p;
  Tensor logits(probs.shape());
  for (std::int64_t i = 0; i < probs.size(); ++i)
    logits[i] = std::log(std::max(probs[i], static_cast<float>(ad::kProbFloor)));
  p.logits_ = std::move(logits);
  p.probs_ = std::move(probs);
  return p;
}

namespace {
ad::Var cv(const Tensor& t) { return ad::constant(Tensor(t)); }
ad::Var cv(const Volume& v) { return ad::constant(Tensor(v.tensor())); }
}  // namespace

double l2_similarity(const Volume& a, const Volume& b) {
  require(a.shape() == b.shape(), "l2_similarity: shape mismatch");
  return ad::scalar_value(ad::mse(cv(a), cv(b)));
}

double l1_similarity(const Volume& a, const Volume& b) {
  require(a.shape() == b.shape(), "l1_similarity: shape mismatch");
  return ad::scalar_value(ad::mae(cv(a), cv(b)));
}

double bending_energy(const DisplacementField& field) {
  return ad::scalar_value(ad::bending_energy(cv(field.tensor())));
}

double dice_loss(const Prediction& p, const LabelMap& y) {
  return ad::scalar_value(ad::dice_loss(cv(p.probs()), y));
}

double ce_loss(const Prediction& p, const LabelMap& y, const Volume* weight) {
  if (weight) {
    require(weight->shape() == y.shape(), "ce_loss: weight shape mismatch");
    for (std::int64_t i = 0; i < weight->size(); ++i)
      require((*weight)[i] >= 0.0f, "ce_loss: weights must be non-negative");
    const Tensor& w = weight->tensor();
    return ad::scalar_value(ad::cross_entropy(cv(p.logits()), y, &w));
  }
  return ad::scalar_value(ad::cross_entropy(cv(p.logits()), y));
}

Volume kl_map(const Prediction& p, const Prediction& q) {
  require(p.probs().shape() == q.probs().shape(), "kl_map: shape mismatch");
  auto field = ad::kl_map(cv(p.probs()), cv(q.probs()));
  return Volume(field->value.shape(), field->value.values());
}

double adversarial_similarity(const Prediction& pred_g, const Prediction& pred_ag) {
  require(pred_g.probs().shape() == pred_ag.probs().shape(),
          "adversarial_similarity: shape mismatch");
  return ad::scalar_value(ad::cosine_similarity(cv(pred_g.probs()), cv(pred_ag.probs())));
}

double structure_loss(const Prediction& pred, const LabelMap& y) {
  return ad::scalar_value(ad::structure_loss(cv(pred.logits()), cv(pred.probs()), y));
}

double rectification_loss(const Prediction& pred_g, const Prediction& pred_ref, const LabelMap& y,
                          double lambda_kl) {
  require(pred_g.probs().shape() == pred_ref.probs().shape(),
          "rectification_loss: shape mismatch");
  return ad::scalar_value(ad::rectification_loss(cv(pred_g.logits()), cv(pred_g.probs()),
                                                 cv(pred_ref.probs()), y,
                                                 static_cast<float>(lambda_kl)));
}

double bi_consistency_loss(const Volume& x_a, const Volume& x_u, const DisplacementField& f_a2u,
                           const DisplacementField& f_u2a, double lambda_smooth) {
  require(x_a.shape() == x_u.shape() && x_a.shape() == f_a2u.spatial_shape() &&
              x_a.shape() == f_u2a.spatial_shape(),
          "bi_consistency_loss: shape mismatch");
  auto xa = ad::constant(with_channel_axis(x_a));
  auto xu = ad::constant(with_channel_axis(x_u));
  return ad::scalar_value(ad::bi_consistency_loss(xa, xu, cv(f_a2u.tensor()), cv(f_u2a.tensor()),
                                                  static_cast<float>(lambda_smooth)));
}

double fb_consistency_loss(const Volume& x_bar_a, const Volume& x_bar_u, const Volume& x_a,
                           const Volume& x_u, const PredictionQuad& seg, double lambda_dice) {
  require(x_bar_a.shape() == x_a.shape() && x_bar_u.shape() == x_u.shape(),
          "fb_consistency_loss: shape mismatch");
  return ad::scalar_value(ad::fb_consistency_loss(
      cv(x_bar_a), cv(x_bar_u), cv(x_a), cv(x_u), cv(seg.recon_a.probs()),
      cv(seg.original_a.probs()), cv(seg.recon_u.probs()), cv(seg.original_u.probs()),
      static_cast<float>(lambda_dice)));
}

Tensor one_hot(const LabelMap& y) {
  const std::int64_t vox = y.size();
  Tensor out(with_channels(y.num_classes(), y.shape()));
  for (std::int64_t v = 0; v < vox; ++v) out[static_cast<std::int64_t>(y[v]) * vox + v] = 1.0f;
  return out;
}

LabelMap argmax_labels(const Tensor& probs) { return ad::argmax_channels(probs); }

}  // namespace osseg
