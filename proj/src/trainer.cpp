#include "osseg/trainer.hpp"

#include <cmath>

#include <json.hpp>

#include "osseg/eval.hpp"
#include "osseg/loss_ops.hpp"
#include "osseg/nn_ops.hpp"
#include "osseg/warp.hpp"

namespace osseg {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::Beta: return "beta";
    case Variant::Adv: return "adv";
    case Variant::Ler: return "ler";
    case Variant::BetaLer: return "beta+ler";
    case Variant::AdvLer: return "adv+ler";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::Vanilla, Variant::Beta, Variant::Adv, Variant::Ler,
                    Variant::BetaLer, Variant::AdvLer})
    if (variant_name(v) == name) return v;
  throw std::invalid_argument("unknown variant '" + name + "'");
}

bool variant_uses_adversarial(Variant v) { return v == Variant::Adv || v == Variant::AdvLer; }
bool variant_uses_beta(Variant v) { return v == Variant::Beta || v == Variant::BetaLer; }
bool variant_uses_rectification(Variant v) {
  return v == Variant::Ler || v == Variant::BetaLer || v == Variant::AdvLer;
}

double gaussian_ramp(int iteration, int ramp_length) {
  require(ramp_length >= 1, "ramp_length must be >= 1");
  if (iteration >= ramp_length) return 1.0;
  const double t = 1.0 - static_cast<double>(iteration) / static_cast<double>(ramp_length);
  return std::exp(-5.0 * t * t);
}

double lr_schedule(int iteration, const TrainConfig& cfg, int unlabeled_count) {
  const int warmup = cfg.warmup_epochs * std::max(1, unlabeled_count);
  if (iteration < warmup)
    return cfg.lr_initial * static_cast<double>(iteration) / static_cast<double>(warmup);
  const double floor = cfg.lr_initial * 1e-3;
  const int span = std::max(1, cfg.n_iterations - warmup);
  double s = static_cast<double>(iteration - warmup) / static_cast<double>(span);
  s = std::min(1.0, std::max(0.0, s));
  return floor + (cfg.lr_initial - floor) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * s));
}

std::string IterationMetrics::to_json_line() const {
  nlohmann::json j{{"iteration", iteration}, {"l_reg", l_reg},     {"l_bi", l_bi},
                   {"l_fb", l_fb},           {"l_adv_g", l_adv_g}, {"l_adv_s", l_adv_s},
                   {"l_seg", l_seg},         {"lr", lr},           {"ramp", ramp}};
  if (val_dice >= 0.0) j["val_dice"] = val_dice;
  return j.dump();
}

namespace {

EncoderDecoderConfig net_config(const TrainConfig& cfg, int spatial_rank, int out_channels) {
  EncoderDecoderConfig nc;
  nc.spatial_rank = spatial_rank;
  nc.levels = cfg.levels;
  nc.base_channels = cfg.base_channels;
  nc.out_channels = out_channels;
  return nc;
}

SgdState make_sgd_state(const ParamStore& params) {
  SgdState s;
  for (const auto& [name, p] : params.entries()) s.velocity.emplace_back(p->value.shape());
  return s;
}

// v = mu v + (sign * g + wd * p); p -= lr * v. sign -1 ascends the objective.
void sgd_update(ParamStore& params, SgdState& opt, double lr, double wd, double mu, double sign) {
  const auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& p = entries[i].second;
    Tensor& vel = opt.velocity[i];
    const bool has_grad = !p->grad.empty();
    for (std::int64_t j = 0; j < p->value.size(); ++j) {
      const float g = has_grad ? p->grad[j] : 0.0f;
      vel[j] = static_cast<float>(mu * vel[j] + sign * g + wd * p->value[j]);
      p->value[j] -= static_cast<float>(lr * vel[j]);
    }
  }
}

double checked_scalar(const ad::Var& loss, int iteration, const char* phase) {
  const double v = ad::scalar_value(loss);
  if (!std::isfinite(v))
    throw TrainingError(std::string(phase) + " produced a non-finite loss", iteration);
  return v;
}

ad::Var one_minus(ad::Var x) { return ad::add_scalar(ad::scale(std::move(x), -1.0f), 1.0f); }

// Adversarial difference 1 - cos, with both predictions mapped to atlas space
// through the (detached) inverted spatial fields.
ad::Var adversarial_difference(ad::Var probs_g, ad::Var probs_ag,
                               const DisplacementField& phi_inv,
                               const DisplacementField& phi_a_inv) {
  auto g_atlas = ad::warp(std::move(probs_g), ad::constant(Tensor(phi_inv.tensor())));
  auto ag_atlas = ad::warp(std::move(probs_ag), ad::constant(Tensor(phi_a_inv.tensor())));
  return one_minus(ad::cosine_similarity(g_atlas, ag_atlas));
}

}  // namespace

TrainState::TrainState(const TrainConfig& cfg, int spatial_rank, int num_classes)
    : config(cfg),
      reg(net_config(cfg, spatial_rank, spatial_rank), hash_combine(cfg.seed, 1)),
      adv(net_config(cfg, spatial_rank, spatial_rank + 1), hash_combine(cfg.seed, 2)),
      seg(net_config(cfg, spatial_rank, num_classes), hash_combine(cfg.seed, 3)),
      opt_reg(make_sgd_state(reg.params())),
      opt_adv(make_sgd_state(adv.params())),
      opt_seg(make_sgd_state(seg.params())),
      rng(hash_combine(cfg.seed, 4)) {}

AugmentationBatch build_augmentation_batch(TrainState& state, const Atlas& atlas,
                                           const Volume& x_s, const Volume& x_a) {
  FreezeGuard fr(state.reg.params());  // value passes only
  AugmentationBatch b;
  b.transforms = TransformPair(extract_spatial(state.reg, atlas.image, x_s),
                               extract_appearance(state.reg, atlas.image, x_a));
  AugmentedSample vanilla = vanilla_augment(atlas, b.transforms);
  b.x_g = std::move(vanilla.image);
  b.y_g = std::move(vanilla.labels);
  b.warped_atlas = std::move(vanilla.warped_atlas);
  b.phi_inv = invert_field(b.transforms.spatial, state.config.inversion_iters);
  return b;
}

IterationMetrics registration_step(TrainState& state, const Atlas& atlas, const Volume& x_u,
                                   double lr, double ramp) {
  const TrainConfig& cfg = state.config;
  FreezeGuard fs(state.seg.params());
  FreezeGuard fg(state.adv.params());
  state.reg.params().zero_grads();

  auto xa = ad::constant(with_channel_axis(atlas.image));
  auto xu = ad::constant(with_channel_axis(x_u));
  auto f_a2u = state.reg.forward(xa, xu);
  auto f_u2a = state.reg.forward(xu, xa);

  auto warped_a = ad::warp(xa, f_a2u);
  auto warped_u = ad::warp(xu, f_u2a);
  auto recon_a = ad::warp(warped_a, f_u2a);
  auto recon_u = ad::warp(warped_u, f_a2u);

  auto l_bi = ad::add(ad::add(ad::mse(warped_a, xu), ad::mse(warped_u, xa)),
                      ad::scale(ad::add(ad::bending_energy(f_a2u), ad::bending_energy(f_u2a)),
                                static_cast<float>(cfg.weights.lambda_smooth)));

  ad::Var total = l_bi;
  ad::Var l_fb;
  if (cfg.dual_consistency) {
    // image-level reversibility
    l_fb = ad::add(ad::mae(recon_a, xa), ad::mae(recon_u, xu));

    // semantic reversibility through the frozen segmenter: gradients flow
    // through S's forward pass into the reconstructions; targets are detached
    // argmaxes of the original-image predictions
    const double lambda_dice_eff = cfg.weights.lambda_dice * ramp;
    if (lambda_dice_eff > 0.0) {
      auto logits_a = state.seg.forward_logits(xa);  // constant: S frozen, xa constant
      auto logits_u = state.seg.forward_logits(xu);
      auto logits_recon_a = state.seg.forward_logits(recon_a);
      auto logits_recon_u = state.seg.forward_logits(recon_u);
      const LabelMap ya = ad::argmax_channels(logits_a->value);
      const LabelMap yu = ad::argmax_channels(logits_u->value);
      auto semantic = ad::add(ad::dice_loss(ad::softmax_channels(logits_recon_a), ya),
                              ad::dice_loss(ad::softmax_channels(logits_recon_u), yu));
      l_fb = ad::add(l_fb, ad::scale(semantic, static_cast<float>(lambda_dice_eff)));
    }
    total = ad::add(l_bi, l_fb);
  }

  IterationMetrics m;
  m.l_bi = checked_scalar(l_bi, state.iteration, "registration");
  m.l_fb = l_fb ? checked_scalar(l_fb, state.iteration, "registration") : 0.0;
  m.l_reg = checked_scalar(total, state.iteration, "registration");
  ad::backward(total);
  sgd_update(state.reg.params(), state.opt_reg, lr, cfg.weight_decay, cfg.momentum, 1.0);
  return m;
}

IterationMetrics augmenter_step(TrainState& state, const Atlas& atlas,
                                const AugmentationBatch& batch, double lr) {
  const TrainConfig& cfg = state.config;
  FreezeGuard fr(state.reg.params());
  FreezeGuard fs(state.seg.params());
  state.adv.params().zero_grads();

  auto x_g = ad::constant(with_channel_axis(batch.x_g));
  auto [alpha, beta] = state.adv.forward(x_g);

  auto phi = ad::constant(Tensor(batch.transforms.spatial.tensor()));
  auto phi_a = ad::mul(alpha, phi);

  double psi_bar = 0.0;
  for (std::int64_t i = 0; i < batch.transforms.appearance.size(); ++i)
    psi_bar += batch.transforms.appearance[i];
  psi_bar /= static_cast<double>(batch.transforms.appearance.size());

  auto psi = ad::constant(with_channel_axis(batch.transforms.appearance));
  auto psi_a = ad::add(psi, ad::scale(beta, static_cast<float>(psi_bar)));
  auto x_ag = ad::warp(ad::add(ad::constant(with_channel_axis(atlas.image)), psi_a), phi_a);

  // prediction of x_g is a constant for G; prediction of x_ag carries gradient
  // through the frozen segmenter into alpha and beta
  auto probs_g = ad::softmax_channels(state.seg.forward_logits(x_g));
  auto probs_ag = ad::softmax_channels(state.seg.forward_logits(x_ag));

  DisplacementField phi_a_inv =
      invert_field(DisplacementField(Tensor(phi_a->value)), cfg.inversion_iters);
  auto l_adv = adversarial_difference(probs_g, probs_ag, batch.phi_inv, phi_a_inv);

  IterationMetrics m;
  m.l_adv_g = checked_scalar(l_adv, state.iteration, "augmenter");
  ad::backward(l_adv);
  // gradient ascent: G maximizes the segmentation difference
  sgd_update(state.adv.params(), state.opt_adv, lr, cfg.weight_decay, cfg.momentum, -1.0);
  return m;
}

namespace {

// Draws alpha in (0,1) and beta in (-1,1) from a Beta(0.5, 0.5)-shaped sampler
// rescaled to the adversarial network's output ranges.
std::pair<Tensor, Tensor> beta_perturbation(const Shape& spatial, int rank, Rng& rng) {
  Tensor alpha(with_channels(rank, spatial));
  for (std::int64_t i = 0; i < alpha.size(); ++i)
    alpha[i] = static_cast<float>(std::clamp(rng.beta_half_half(), 1e-3, 1.0 - 1e-3));
  Tensor beta(with_channels(1, spatial));
  for (std::int64_t i = 0; i < beta.size(); ++i)
    beta[i] = static_cast<float>(2.0 * rng.beta_half_half() - 1.0);
  return {std::move(alpha), std::move(beta)};
}

struct SegBranchLosses {
  ad::Var total;
  ad::Var probs;  // prediction of the branch image, for the adversarial term
};

// Supervised loss of one augmented branch. With rectification the spatial-only
// twin carries the structure loss and the branch image carries the weighted
// cross-entropy; otherwise the branch image carries the structure loss alone.
SegBranchLosses segmentation_branch(TrainState& state, const Volume& image,
                                    const LabelMap& labels, const Volume& twin, double ramp) {
  const TrainConfig& cfg = state.config;
  SegBranchLosses out;
  auto logits = state.seg.forward_logits(ad::constant(with_channel_axis(image)));
  out.probs = ad::softmax_channels(logits);

  if (variant_uses_rectification(cfg.variant)) {
    auto twin_logits = state.seg.forward_logits(ad::constant(with_channel_axis(twin)));
    auto twin_probs = ad::softmax_channels(twin_logits);
    auto str = ad::structure_loss(twin_logits, twin_probs, labels);
    auto rec = ad::rectification_loss(logits, out.probs, twin_probs, labels,
                                      static_cast<float>(cfg.weights.lambda_kl * ramp));
    out.total = ad::add(str, ad::scale(rec, static_cast<float>(cfg.weights.lambda_rec * ramp)));
  } else {
    out.total = ad::structure_loss(logits, out.probs, labels);
  }
  return out;
}

}  // namespace

IterationMetrics segmenter_step(TrainState& state, const Atlas& atlas,
                                const AugmentationBatch& batch, double lr, double ramp) {
  const TrainConfig& cfg = state.config;
  FreezeGuard fr(state.reg.params());
  FreezeGuard fg(state.adv.params());
  state.seg.params().zero_grads();

  // vanilla branch
  SegBranchLosses branch_g =
      segmentation_branch(state, batch.x_g, batch.y_g, batch.warped_atlas, ramp);
  ad::Var total = branch_g.total;

  IterationMetrics m;

  // perturbed branch: fresh alpha/beta per the training loop's second sampling
  if (variant_uses_adversarial(cfg.variant) || variant_uses_beta(cfg.variant)) {
    AugmentedSample sample;
    if (variant_uses_adversarial(cfg.variant)) {
      sample = adversarial_augment(state.adv, atlas, batch.transforms, batch.x_g);
    } else {
      auto [alpha, beta] =
          beta_perturbation(atlas.image.shape(), atlas.image.rank(), state.rng);
      sample = adversarial_augment_with(atlas, batch.transforms, alpha, beta);
    }
    SegBranchLosses branch_ag =
        segmentation_branch(state, sample.image, sample.labels, sample.warped_atlas, ramp);
    total = ad::add(total, branch_ag.total);

    if (variant_uses_adversarial(cfg.variant)) {
      DisplacementField phi_a_inv = invert_field(sample.spatial_used, cfg.inversion_iters);
      auto l_adv = adversarial_difference(branch_g.probs, branch_ag.probs, batch.phi_inv,
                                          phi_a_inv);
      m.l_adv_s = checked_scalar(l_adv, state.iteration, "segmenter");
      total = ad::add(total, l_adv);
    }
  }

  m.l_seg = checked_scalar(total, state.iteration, "segmenter") - m.l_adv_s;
  ad::backward(total);
  sgd_update(state.seg.params(), state.opt_seg, lr, cfg.weight_decay, cfg.momentum, 1.0);
  return m;
}

double validation_dice(const SegmentationNet& seg,
                       const std::vector<std::pair<Volume, LabelMap>>& validation) {
  require(!validation.empty(), "validation set is empty");
  double sum = 0.0;
  for (const auto& [image, labels] : validation) {
    Prediction pred = segment(seg, image);
    sum += dice_score(argmax_labels(pred.probs()), labels).mean;
  }
  return sum / static_cast<double>(validation.size());
}

TrainState train(const TrainConfig& cfg, const Atlas& atlas, const std::vector<Volume>& unlabeled,
                 const std::vector<std::pair<Volume, LabelMap>>& validation,
                 const TrainHooks& hooks) {
  cfg.validate();
  require(!unlabeled.empty(), "unlabeled set is empty");
  for (const auto& u : unlabeled)
    require(u.shape() == atlas.image.shape(), "unlabeled volume shape mismatch");
  for (const auto& [v, l] : validation)
    require(v.shape() == atlas.image.shape() && l.shape() == atlas.image.shape(),
            "validation pair shape mismatch");

  TrainState state(cfg, atlas.image.rank(), atlas.labels.num_classes());
  if (cfg.n_iterations == 0) return state;
  check_divisible(atlas.image.shape(), state.seg.config());

  const int n = static_cast<int>(unlabeled.size());
  for (int it = 0; it < cfg.n_iterations; ++it) {
    state.iteration = it;
    const double lr = lr_schedule(it, cfg, n);
    const double ramp = gaussian_ramp(it, cfg.effective_ramp());

    IterationMetrics m;
    m.iteration = it;
    m.lr = lr;
    m.ramp = ramp;

    for (int sample = 0; sample < cfg.batch_size; ++sample) {
      // spatial and appearance references drawn without replacement
      const int i_s = state.rng.uniform_int(n);
      int i_a = n >= 2 ? state.rng.uniform_int(n - 1) : 0;
      if (n >= 2 && i_a >= i_s) ++i_a;
      const Volume& x_s = unlabeled[static_cast<std::size_t>(i_s)];
      const Volume& x_a = unlabeled[static_cast<std::size_t>(i_a)];

      const bool reg_active = cfg.freeze_reg_after == 0 || it < cfg.freeze_reg_after;
      if (reg_active) {
        IterationMetrics mr = registration_step(state, atlas, x_s, lr, ramp);
        m.l_reg += mr.l_reg / cfg.batch_size;
        m.l_bi += mr.l_bi / cfg.batch_size;
        m.l_fb += mr.l_fb / cfg.batch_size;
      }

      AugmentationBatch batch = build_augmentation_batch(state, atlas, x_s, x_a);
      if (variant_uses_adversarial(cfg.variant)) {
        IterationMetrics mg = augmenter_step(state, atlas, batch, lr);
        m.l_adv_g += mg.l_adv_g / cfg.batch_size;
      }
      IterationMetrics ms = segmenter_step(state, atlas, batch, lr, ramp);
      m.l_adv_s += ms.l_adv_s / cfg.batch_size;
      m.l_seg += ms.l_seg / cfg.batch_size;
    }

    const bool eval_now = !validation.empty() && ((it + 1) % cfg.eval_every == 0 ||
                                                  it + 1 == cfg.n_iterations);
    if (eval_now) {
      m.val_dice = validation_dice(state.seg, validation);
      if (m.val_dice > state.best_val + 1e-3) {  // 0.1 Dice points
        state.best_val = m.val_dice;
        state.evals_since_improve = 0;
      } else {
        ++state.evals_since_improve;
      }
    }

    state.history.push_back(m);
    if (hooks.on_metrics) hooks.on_metrics(m);
    if (hooks.on_checkpoint && (it + 1) % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(state, it + 1);

    if (eval_now && state.evals_since_improve >= cfg.early_stop_patience) {
      state.stopped_early = true;
      break;
    }
  }
  state.iteration = static_cast<int>(state.history.size());
  return state;
}

}  // namespace osseg
