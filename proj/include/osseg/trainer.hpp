#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "osseg/augmentation.hpp"
#include "osseg/losses.hpp"
#include "osseg/networks.hpp"
#include "osseg/rng.hpp"
#include "osseg/volume.hpp"

namespace osseg {

// Pipeline variants for ablations: adversarial sampling (Adv), predefined
// Beta-distribution sampling (Beta), and label-error rectification (Ler).
enum class Variant { Vanilla, Beta, Adv, Ler, BetaLer, AdvLer };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
bool variant_uses_adversarial(Variant v);
bool variant_uses_beta(Variant v);
bool variant_uses_rectification(Variant v);

struct TrainConfig {
  int n_iterations = 2000;
  double lr_initial = 1e-2;
  double weight_decay = 1e-5;
  double momentum = 0.9;
  int warmup_epochs = 5;  // one epoch = one pass over the unlabeled set
  LossWeights weights;
  int ramp_length = 0;  // iterations of the Gaussian warm-up; 0 = n_iterations / 10
  int inversion_iters = 10;
  std::uint64_t seed = 0;
  int batch_size = 1;
  int checkpoint_every = 1000;
  int early_stop_patience = 5;  // evaluations without >= 0.1 point improvement
  int eval_every = 500;
  int levels = 4;
  int base_channels = 16;
  int freeze_reg_after = 0;  // > 0: stop updating R after that many iterations
  bool dual_consistency = true;  // false: registration trains on L_bi alone
  Variant variant = Variant::AdvLer;

  int effective_ramp() const {
    return ramp_length > 0 ? ramp_length : std::max(1, n_iterations / 10);
  }
  void validate() const {
    require(n_iterations >= 0, "n_iterations must be >= 0");
    require(lr_initial > 0.0, "lr_initial must be positive");
    require(weight_decay >= 0.0, "weight_decay must be >= 0");
    require(warmup_epochs >= 0, "warmup_epochs must be >= 0");
    require(ramp_length <= n_iterations || n_iterations == 0,
            "ramp_length must not exceed n_iterations");
    require(inversion_iters >= 1, "inversion_iters must be >= 1");
    require(batch_size >= 1 && checkpoint_every >= 1 && early_stop_patience >= 1 &&
                eval_every >= 1,
            "counts must be positive");
    weights.validate();
  }
};

// Time-dependent Gaussian warm-up: exp(-5 (1 - t/T)^2) for t < T, then 1.
double gaussian_ramp(int iteration, int ramp_length);

// Linear warm-up from 0 to lr_initial over warmup_epochs passes of the
// unlabeled set, then cosine decay to lr_initial * 1e-3 at n_iterations.
double lr_schedule(int iteration, const TrainConfig& cfg, int unlabeled_count);

// Per-network SGD-with-momentum buffers, index-parallel to the ParamStore.
struct SgdState {
  std::vector<Tensor> velocity;
};

struct IterationMetrics {
  int iteration = 0;
  double l_reg = 0.0;
  double l_bi = 0.0;
  double l_fb = 0.0;
  double l_adv_g = 0.0;  // adversarial difference after the augmenter phase
  double l_adv_s = 0.0;  // adversarial difference seen by the segmenter phase
  double l_seg = 0.0;
  double lr = 0.0;
  double ramp = 0.0;
  double val_dice = -1.0;  // -1 when no evaluation ran this iteration

  std::string to_json_line() const;
};

struct TrainState {
  TrainConfig config;
  RegistrationNet reg;
  AdversarialNet adv;
  SegmentationNet seg;
  SgdState opt_reg, opt_adv, opt_seg;
  Rng rng;
  int iteration = 0;
  std::vector<IterationMetrics> history;
  double best_val = -1.0;
  int evals_since_improve = 0;
  bool stopped_early = false;

  TrainState(const TrainConfig& cfg, int spatial_rank, int num_classes);
};

// Shared per-iteration augmentation inputs; everything here is a constant with
// respect to the phase being optimized (R and G are frozen when it is built).
struct AugmentationBatch {
  TransformPair transforms;
  Volume x_g;
  LabelMap y_g;
  Volume warped_atlas;
  DisplacementField phi_inv;  // gradient-detached inversion of the spatial field
};

AugmentationBatch build_augmentation_batch(TrainState& state, const Atlas& atlas,
                                           const Volume& x_s, const Volume& x_a);

// One optimization step of each phase. Only the named network is updated; the
// other two keep their parameters bit-identical.
IterationMetrics registration_step(TrainState& state, const Atlas& atlas, const Volume& x_u,
                                   double lr, double ramp);
IterationMetrics augmenter_step(TrainState& state, const Atlas& atlas,
                                const AugmentationBatch& batch, double lr);
IterationMetrics segmenter_step(TrainState& state, const Atlas& atlas,
                                const AugmentationBatch& batch, double lr, double ramp);

struct TrainHooks {
  std::function<void(const IterationMetrics&)> on_metrics;
  std::function<void(const TrainState&, int iteration)> on_checkpoint;
};

// Mean Dice of argmax segmentations over labeled pairs.
double validation_dice(const SegmentationNet& seg,
                       const std::vector<std::pair<Volume, LabelMap>>& validation);

// Full alternating optimization per the configured variant: registration,
// then (optionally) augmenter, then segmenter, once per outer iteration.
TrainState train(const TrainConfig& cfg, const Atlas& atlas, const std::vector<Volume>& unlabeled,
                 const std::vector<std::pair<Volume, LabelMap>>& validation,
                 const TrainHooks& hooks = {});

}  // namespace osseg
