#include "osseg/networks.hpp"

#include <cmath>

#include "osseg/nn_ops.hpp"

namespace osseg {

void check_divisible(const Shape& spatial, const EncoderDecoderConfig& cfg) {
  require(static_cast<int>(spatial.size()) == cfg.spatial_rank,
          "input rank " + shape_str(spatial) + " does not match network rank " +
              std::to_string(cfg.spatial_rank));
  const int div = cfg.divisor();
  for (int d : spatial)
    require(d % div == 0, "spatial sizes " + shape_str(spatial) + " must be divisible by " +
                              std::to_string(div));
}

namespace nets {

namespace {

Tensor he_normal(Rng& rng, const Shape& shape, int fan_in) {
  Tensor t(shape);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<float>(rng.normal() * std_dev);
  return t;
}

Shape kernel_shape(int rank, int out_ch, int in_ch, int k) {
  Shape s{out_ch, in_ch};
  for (int d = 0; d < rank; ++d) s.push_back(k);
  return s;
}

}  // namespace

ConvBlock make_conv_block(const EncoderDecoderConfig& cfg, ParamStore& store, Rng& rng,
                          const std::string& name, int in_ch, int out_ch, int stride) {
  ConvBlock blk;
  const int k = 3;
  const int fan_in = in_ch * (cfg.spatial_rank == 2 ? k * k : k * k * k);
  blk.w = store.add(name + ".w", he_normal(rng, kernel_shape(cfg.spatial_rank, out_ch, in_ch, k),
                                           fan_in));
  blk.b = store.add(name + ".b", Tensor(Shape{out_ch}));
  if (cfg.instance_normalization) {
    blk.gain = store.add(name + ".gain", Tensor(Shape{out_ch}, 1.0f));
    blk.bias = store.add(name + ".bias", Tensor(Shape{out_ch}));
  }
  blk.stride = stride;
  blk.pad = 1;
  blk.slope = cfg.leaky_slope;
  return blk;
}

HeadConv make_head(const EncoderDecoderConfig& cfg, ParamStore& store, Rng& rng,
                   const std::string& name, int in_ch, int out_ch, bool zero_init) {
  HeadConv head;
  const Shape ks = kernel_shape(cfg.spatial_rank, out_ch, in_ch, 1);
  head.w = store.add(name + ".w", zero_init ? Tensor(ks) : he_normal(rng, ks, in_ch));
  head.b = store.add(name + ".b", Tensor(Shape{out_ch}));
  return head;
}

ad::Var ConvBlock::forward(ad::Var x) const {
  auto y = ad::conv(x, w, b, stride, pad);
  if (gain) y = ad::instance_norm(y, gain, bias);
  return ad::leaky_relu(y, slope);
}

ad::Var HeadConv::forward(ad::Var x) const { return ad::conv(x, w, b, 1, 0); }

UNetTrunk::UNetTrunk(const EncoderDecoderConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  auto ch = [&](int level) { return cfg.base_channels << level; };

  enc_.push_back(make_conv_block(cfg, store, rng, "enc0.a", cfg.in_channels, ch(0), 1));
  enc_.push_back(make_conv_block(cfg, store, rng, "enc0.b", ch(0), ch(0), 1));
  for (int lv = 1; lv < cfg.levels; ++lv) {
    const std::string base = "enc" + std::to_string(lv);
    enc_.push_back(make_conv_block(cfg, store, rng, base + ".down", ch(lv - 1), ch(lv), 2));
    enc_.push_back(make_conv_block(cfg, store, rng, base + ".b", ch(lv), ch(lv), 1));
  }
  for (int lv = cfg.levels - 1; lv >= 1; --lv) {
    const std::string base = "dec" + std::to_string(lv);
    dec_.push_back(
        make_conv_block(cfg, store, rng, base + ".a", ch(lv) + ch(lv - 1), ch(lv - 1), 1));
    dec_.push_back(make_conv_block(cfg, store, rng, base + ".b", ch(lv - 1), ch(lv - 1), 1));
  }
}

ad::Var UNetTrunk::forward(ad::Var x) const {
  check_divisible(spatial_of(x->value.shape()), cfg_);

  std::vector<ad::Var> skips;
  ad::Var h = enc_[0].forward(x);
  h = enc_[1].forward(h);
  skips.push_back(h);
  for (int lv = 1; lv < cfg_.levels; ++lv) {
    h = enc_[2 * lv].forward(h);
    h = enc_[2 * lv + 1].forward(h);
    skips.push_back(h);
  }
  for (int lv = cfg_.levels - 1; lv >= 1; --lv) {
    const int di = 2 * (cfg_.levels - 1 - lv);
    h = ad::upsample2(h);
    h = ad::concat_channels(h, skips[static_cast<std::size_t>(lv - 1)]);
    h = dec_[di].forward(h);
    h = dec_[di + 1].forward(h);
  }
  return h;
}

}  // namespace nets

RegistrationNet::RegistrationNet(EncoderDecoderConfig cfg, std::uint64_t seed) {
  cfg.in_channels = 2;
  cfg.out_channels = cfg.spatial_rank;
  cfg.validate();
  cfg_ = cfg;
  Rng rng(hash_combine(seed, 0x524547ULL));
  trunk_ = nets::UNetTrunk(cfg_, params_, rng);
  head_ = nets::make_head(cfg_, params_, rng, "head", cfg_.base_channels, cfg_.out_channels,
                          /*zero_init=*/true);
}

ad::Var RegistrationNet::forward(ad::Var moving, ad::Var fixed) const {
  return head_.forward(trunk_.forward(ad::concat_channels(std::move(moving), std::move(fixed))));
}

AdversarialNet::AdversarialNet(EncoderDecoderConfig cfg, std::uint64_t seed) {
  cfg.in_channels = 1;
  cfg.out_channels = cfg.spatial_rank + 1;
  cfg.validate();
  cfg_ = cfg;
  Rng rng(hash_combine(seed, 0x415547ULL));
  trunk_ = nets::UNetTrunk(cfg_, params_, rng);
  alpha_head_ = nets::make_head(cfg_, params_, rng, "alpha_head", cfg_.base_channels,
                                cfg_.spatial_rank, /*zero_init=*/false);
  beta_head_ =
      nets::make_head(cfg_, params_, rng, "beta_head", cfg_.base_channels, 1, /*zero_init=*/false);
}

std::pair<ad::Var, ad::Var> AdversarialNet::forward(ad::Var x) const {
  auto features = trunk_.forward(std::move(x));
  auto alpha = ad::sigmoid(alpha_head_.forward(features));
  auto beta = ad::tanh_op(beta_head_.forward(features));
  return {alpha, beta};
}

SegmentationNet::SegmentationNet(EncoderDecoderConfig cfg, std::uint64_t seed) {
  cfg.in_channels = 1;
  cfg.validate();
  cfg_ = cfg;
  Rng rng(hash_combine(seed, 0x534547ULL));
  trunk_ = nets::UNetTrunk(cfg_, params_, rng);
  head_ = nets::make_head(cfg_, params_, rng, "head", cfg_.base_channels, cfg_.out_channels,
                          /*zero_init=*/false);
}

ad::Var SegmentationNet::forward_logits(ad::Var x) const {
  return head_.forward(trunk_.forward(std::move(x)));
}

DisplacementField register_pair(const RegistrationNet& reg, const Volume& moving,
                                const Volume& fixed) {
  require(moving.shape() == fixed.shape(), "register_pair: shape mismatch");
  auto field = reg.forward(ad::constant(with_channel_axis(moving)),
                           ad::constant(with_channel_axis(fixed)));
  return DisplacementField(Tensor(field->value));
}

std::pair<Tensor, Tensor> sample_perturbation(const AdversarialNet& adv, const Volume& x_g) {
  auto [alpha, beta] = adv.forward(ad::constant(with_channel_axis(x_g)));
  return {alpha->value, beta->value};
}

Prediction segment(const SegmentationNet& seg, const Volume& x) {
  auto logits = seg.forward_logits(ad::constant(with_channel_axis(x)));
  return Prediction::from_logits(Tensor(logits->value));
}

}  // namespace osseg
