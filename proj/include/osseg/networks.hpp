#pragma once

#include <string>
#include <utility>
#include <vector>

#include "osseg/autodiff.hpp"
#include "osseg/losses.hpp"
#include "osseg/rng.hpp"
#include "osseg/volume.hpp"

namespace osseg {

// Shared encoder-decoder trunk contract for the three networks.
struct EncoderDecoderConfig {
  int spatial_rank = 3;
  int levels = 4;
  int base_channels = 16;
  int in_channels = 1;
  int out_channels = 1;
  bool instance_normalization = true;  // {instance, none}
  float leaky_slope = 0.2f;

  int divisor() const { return 1 << (levels - 1); }
  void validate() const {
    require(spatial_rank == 2 || spatial_rank == 3, "spatial_rank must be 2 or 3");
    require(levels >= 2, "levels must be >= 2");
    require(base_channels >= 4, "base_channels must be >= 4");
    require(in_channels >= 1 && out_channels >= 1, "channel counts must be positive");
  }
};

// Ordered, named parameter registry of one network. Parameter order is the
// construction order and is stable across runs, which checkpointing and the
// optimizer rely on.
class ParamStore {
 public:
  ad::Var add(std::string name, Tensor init) {
    auto p = ad::parameter(std::move(init));
    entries_.emplace_back(std::move(name), p);
    return p;
  }

  const std::vector<std::pair<std::string, ad::Var>>& entries() const { return entries_; }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, p] : entries_) n += p->value.size();
    return n;
  }

  void set_requires_grad(bool enabled) {
    for (auto& [name, p] : entries_) p->requires_grad = enabled;
  }

  void zero_grads() {
    for (auto& [name, p] : entries_) p->zero_grad();
  }

  // FNV-1a over the raw parameter bytes; used by phase-isolation checks.
  std::uint64_t checksum() const {
    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& [name, p] : entries_) {
      const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
      const std::size_t n = static_cast<std::size_t>(p->value.size()) * sizeof(float);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
      }
    }
    return h;
  }

 private:
  std::vector<std::pair<std::string, ad::Var>> entries_;
};

// Temporarily disables gradient bookkeeping for a network's parameters.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamStore& store) : store_(&store) { store_->set_requires_grad(false); }
  ~FreezeGuard() { store_->set_requires_grad(true); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamStore* store_;
};

namespace nets {

struct ConvBlock {
  ad::Var w;
  ad::Var b;
  ad::Var gain;  // null when normalization is disabled
  ad::Var bias;
  int stride = 1;
  int pad = 1;
  float slope = 0.2f;

  ad::Var forward(ad::Var x) const;
};

struct HeadConv {
  ad::Var w;
  ad::Var b;

  ad::Var forward(ad::Var x) const;
};

// U-Net style trunk: strided-conv encoder, nearest-upsample decoder with skip
// concatenation; returns base_channels features at full resolution.
class UNetTrunk {
 public:
  UNetTrunk() = default;
  UNetTrunk(const EncoderDecoderConfig& cfg, ParamStore& store, Rng& rng);
  ad::Var forward(ad::Var x) const;

 private:
  EncoderDecoderConfig cfg_;
  std::vector<ConvBlock> enc_;   // 2 blocks per level, level 1.. start with stride 2
  std::vector<ConvBlock> dec_;   // 2 blocks per decoder level
};

ConvBlock make_conv_block(const EncoderDecoderConfig& cfg, ParamStore& store, Rng& rng,
                          const std::string& name, int in_ch, int out_ch, int stride);
HeadConv make_head(const EncoderDecoderConfig& cfg, ParamStore& store, Rng& rng,
                   const std::string& name, int in_ch, int out_ch, bool zero_init);

}  // namespace nets

// Deformable registration network R: consumes moving||fixed (2 channels),
// emits one displacement component per spatial axis. The output head is
// zero-initialized so an untrained network is the identity transform.
class RegistrationNet {
 public:
  RegistrationNet(EncoderDecoderConfig cfg, std::uint64_t seed);
  RegistrationNet(const RegistrationNet&) = delete;
  RegistrationNet& operator=(const RegistrationNet&) = delete;
  RegistrationNet(RegistrationNet&&) = default;
  RegistrationNet& operator=(RegistrationNet&&) = default;

  // moving/fixed as [1, spatial] vars; returns field [D, spatial].
  ad::Var forward(ad::Var moving, ad::Var fixed) const;
  const EncoderDecoderConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  EncoderDecoderConfig cfg_;
  ParamStore params_;
  nets::UNetTrunk trunk_;
  nets::HeadConv head_;
};

// Adversarial sampler G: consumes the augmented image, emits the spatial
// modulation alpha in (0,1)^D via sigmoid and the appearance modulation beta
// in (-1,1) via tanh.
class AdversarialNet {
 public:
  AdversarialNet(EncoderDecoderConfig cfg, std::uint64_t seed);
  AdversarialNet(const AdversarialNet&) = delete;
  AdversarialNet& operator=(const AdversarialNet&) = delete;
  AdversarialNet(AdversarialNet&&) = default;
  AdversarialNet& operator=(AdversarialNet&&) = default;

  // x as [1, spatial]; returns {alpha [D, spatial], beta [1, spatial]}.
  std::pair<ad::Var, ad::Var> forward(ad::Var x) const;
  const EncoderDecoderConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  EncoderDecoderConfig cfg_;
  ParamStore params_;
  nets::UNetTrunk trunk_;
  nets::HeadConv alpha_head_;
  nets::HeadConv beta_head_;
};

// Segmentation network S: single-channel image in, C class logits out.
class SegmentationNet {
 public:
  SegmentationNet(EncoderDecoderConfig cfg, std::uint64_t seed);
  SegmentationNet(const SegmentationNet&) = delete;
  SegmentationNet& operator=(const SegmentationNet&) = delete;
  SegmentationNet(SegmentationNet&&) = default;
  SegmentationNet& operator=(SegmentationNet&&) = default;

  ad::Var forward_logits(ad::Var x) const;
  int num_classes() const { return cfg_.out_channels; }
  const EncoderDecoderConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  EncoderDecoderConfig cfg_;
  ParamStore params_;
  nets::UNetTrunk trunk_;
  nets::HeadConv head_;
};

// Value-level entry points over frozen parameters.
DisplacementField register_pair(const RegistrationNet& reg, const Volume& moving,
                                const Volume& fixed);
std::pair<Tensor, Tensor> sample_perturbation(const AdversarialNet& adv, const Volume& x_g);
Prediction segment(const SegmentationNet& seg, const Volume& x);

// Divisibility precondition shared by all three networks.
void check_divisible(const Shape& spatial, const EncoderDecoderConfig& cfg);

}  // namespace osseg
