#pragma once

#include <array>
#include <cmath>

#include "osseg/errors.hpp"
#include "osseg/nn_ops.hpp"
#include "osseg/volume.hpp"

namespace osseg::ad {

inline constexpr double kProbFloor = 1e-7;   // clamp before any log of a probability
inline constexpr double kDiceSmooth = 1e-5;  // soft-Dice smoothing in numerator and denominator

// Mean squared difference.
template <class T>
VarT<T> mse(VarT<T> a, VarT<T> b) {
  require(a->value.shape() == b->value.shape(), "mse: shape mismatch");
  const std::int64_t n = a->value.size();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a->value[i]) - static_cast<double>(b->value[i]);
    acc += d * d;
  }
  TensorT<T> out(Shape{1});
  out[0] = static_cast<T>(acc / static_cast<double>(n));
  return make_op<T>(std::move(out), {a, b}, [a, b, n](NodeT<T>& self) {
    const T g = self.grad[0] * T(2) / static_cast<T>(n);
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) a->grad[i] += g * (a->value[i] - b->value[i]);
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) b->grad[i] -= g * (a->value[i] - b->value[i]);
    }
  });
}

// Mean absolute difference.
template <class T>
VarT<T> mae(VarT<T> a, VarT<T> b) {
  require(a->value.shape() == b->value.shape(), "mae: shape mismatch");
  const std::int64_t n = a->value.size();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i)
    acc += std::abs(static_cast<double>(a->value[i]) - static_cast<double>(b->value[i]));
  TensorT<T> out(Shape{1});
  out[0] = static_cast<T>(acc / static_cast<double>(n));
  return make_op<T>(std::move(out), {a, b}, [a, b, n](NodeT<T>& self) {
    const T g = self.grad[0] / static_cast<T>(n);
    if (a->requires_grad) a->ensure_grad();
    if (b->requires_grad) b->ensure_grad();
    for (std::int64_t i = 0; i < n; ++i) {
      const T d = a->value[i] - b->value[i];
      const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      if (a->requires_grad) a->grad[i] += g * s;
      if (b->requires_grad) b->grad[i] -= g * s;
    }
  });
}

namespace lossdet {
// Odometer over the interior coordinates (1..n-2 per axis) of a spatial grid.
template <class Fn>
void for_each_interior(const Shape& spatial, const std::array<std::int64_t, 3>& stride, Fn&& fn) {
  const int rank = static_cast<int>(spatial.size());
  std::array<int, 3> c{};
  for (int d = 0; d < rank; ++d) c[d] = 1;
  while (true) {
    std::int64_t idx = 0;
    for (int d = 0; d < rank; ++d) idx += c[d] * stride[d];
    fn(idx);
    int d = rank - 1;
    for (; d >= 0; --d) {
      if (++c[d] <= spatial[d] - 2) break;
      c[d] = 1;
    }
    if (d < 0) break;
  }
}
}  // namespace lossdet

// Bending energy of a displacement field [D, spatial]: mean over interior
// voxels of the summed squared second derivatives of every component, central
// differences, mixed terms counted twice. Exactly zero for affine fields.
template <class T>
VarT<T> bending_energy(VarT<T> field) {
  const Shape spatial = spatial_of(field->value.shape());
  const int rank = static_cast<int>(spatial.size());
  require(field->value.shape()[0] == rank, "bending_energy: field must be [D, spatial]");
  for (int d : spatial)
    require(d >= 3, "bending_energy: every spatial size must be >= 3, got " + shape_str(spatial));

  const std::int64_t vox = numel(spatial);
  std::array<std::int64_t, 3> stride{};
  stride[rank - 1] = 1;
  for (int d = rank - 2; d >= 0; --d) stride[d] = stride[d + 1] * spatial[d + 1];

  std::int64_t interior = 1;
  for (int d = 0; d < rank; ++d) interior *= spatial[d] - 2;
  const double inv_n = 1.0 / static_cast<double>(interior);

  double acc = 0.0;
  for (int comp = 0; comp < rank; ++comp) {
    const T* p = field->value.data() + comp * vox;
    lossdet::for_each_interior(spatial, stride, [&](std::int64_t idx) {
      for (int i = 0; i < rank; ++i) {
        const double dii = static_cast<double>(p[idx + stride[i]]) - 2.0 * p[idx] +
                           static_cast<double>(p[idx - stride[i]]);
        acc += dii * dii;
      }
      for (int i = 0; i < rank; ++i)
        for (int j = i + 1; j < rank; ++j) {
          const double dij = (static_cast<double>(p[idx + stride[i] + stride[j]]) -
                              p[idx + stride[i] - stride[j]] - p[idx - stride[i] + stride[j]] +
                              p[idx - stride[i] - stride[j]]) *
                             0.25;
          acc += 2.0 * dij * dij;
        }
    });
  }
  TensorT<T> out(Shape{1});
  out[0] = static_cast<T>(acc * inv_n);

  return make_op<T>(
      std::move(out), {field}, [field, spatial, stride, rank, vox, inv_n](NodeT<T>& self) {
        field->ensure_grad();
        const T g = self.grad[0] * static_cast<T>(inv_n);
        for (int comp = 0; comp < rank; ++comp) {
          const T* p = field->value.data() + comp * vox;
          T* gp = field->grad.data() + comp * vox;
          lossdet::for_each_interior(spatial, stride, [&](std::int64_t idx) {
            for (int i = 0; i < rank; ++i) {
              const T dii = p[idx + stride[i]] - T(2) * p[idx] + p[idx - stride[i]];
              const T c = g * T(2) * dii;
              gp[idx + stride[i]] += c;
              gp[idx] -= T(2) * c;
              gp[idx - stride[i]] += c;
            }
            for (int i = 0; i < rank; ++i)
              for (int j = i + 1; j < rank; ++j) {
                const T dij =
                    (p[idx + stride[i] + stride[j]] - p[idx + stride[i] - stride[j]] -
                     p[idx - stride[i] + stride[j]] + p[idx - stride[i] - stride[j]]) *
                    T(0.25);
                const T c = g * dij;
                gp[idx + stride[i] + stride[j]] += c;
                gp[idx + stride[i] - stride[j]] -= c;
                gp[idx - stride[i] + stride[j]] -= c;
                gp[idx - stride[i] - stride[j]] += c;
              }
          });
        }
      });
}

// Soft Dice loss of class probabilities [C, spatial] against integer labels:
// 1 - mean_c (2*sum(p_c*g_c) + eps) / (sum(p_c) + sum(g_c) + eps).
template <class T>
VarT<T> dice_loss(VarT<T> probs, const LabelMap& y, double eps = kDiceSmooth) {
  const Shape& ps = probs->value.shape();
  const int C = ps[0];
  require(spatial_of(ps) == y.shape(), "dice_loss: spatial shape mismatch");
  require(C == y.num_classes(), "dice_loss: class count mismatch");
  const std::int64_t vox = y.size();

  std::vector<double> inter(C, 0.0), psum(C, 0.0), gsum(C, 0.0);
  for (std::int64_t v = 0; v < vox; ++v) {
    const int cls = y[v];
    gsum[cls] += 1.0;
    for (int c = 0; c < C; ++c) {
      const double p = probs->value[c * vox + v];
      psum[c] += p;
      if (c == cls) inter[c] += p;
    }
  }
  double mean_dice = 0.0;
  std::vector<double> numer(C), denom(C);
  for (int c = 0; c < C; ++c) {
    numer[c] = 2.0 * inter[c] + eps;
    denom[c] = psum[c] + gsum[c] + eps;
    mean_dice += numer[c] / denom[c];
  }
  mean_dice /= C;
  TensorT<T> out(Shape{1});
  out[0] = static_cast<T>(1.0 - mean_dice);

  return make_op<T>(std::move(out), {probs},
                    [probs, y, C, vox, numer = std::move(numer),
                     denom = std::move(denom)](NodeT<T>& self) {
                      probs->ensure_grad();
                      const double g = static_cast<double>(self.grad[0]) / C;
                      for (int c = 0; c < C; ++c) {
                        const double inv_d = 1.0 / denom[c];
                        const double ratio = numer[c] * inv_d * inv_d;
                        T* gp = probs->grad.data() + c * vox;
                        for (std::int64_t v = 0; v < vox; ++v) {
                          const double dd = (y[v] == c ? 2.0 * inv_d : 0.0) - ratio;
                          gp[v] -= static_cast<T>(g * dd);
                        }
                      }
                    });
}

// Cross-entropy from logits [C, spatial] against integer labels, per-voxel
// optional non-negative weights, reduced as a mean over voxels (sum/N, not
// sum/sum-of-weights). Log-sum-exp is used for stability.
template <class T>
VarT<T> cross_entropy(VarT<T> logits, const LabelMap& y, const TensorT<T>* weight = nullptr) {
  const Shape& ls = logits->value.shape();
  const int C = ls[0];
  require(spatial_of(ls) == y.shape(), "cross_entropy: spatial shape mismatch");
  require(C == y.num_classes(), "cross_entropy: class count mismatch");
  if (weight) require(weight->shape() == y.shape(), "cross_entropy: weight shape mismatch");
  const std::int64_t vox = y.size();

  double acc = 0.0;
  for (std::int64_t v = 0; v < vox; ++v) {
    double m = logits->value[v];
    for (int c = 1; c < C; ++c) m = std::max(m, static_cast<double>(logits->value[c * vox + v]));
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(logits->value[c * vox + v]) - m);
    const double ce = m + std::log(z) - static_cast<double>(logits->value[y[v] * vox + v]);
    acc += (weight ? static_cast<double>((*weight)[v]) : 1.0) * ce;
  }
  TensorT<T> out(Shape{1});
  out[0] = static_cast<T>(acc / static_cast<double>(vox));

  TensorT<T> w = weight ? *weight : TensorT<T>();
  const bool has_w = weight != nullptr;
  return make_op<T>(std::move(out), {logits},
                    [logits, y, C, vox, w = std::move(w), has_w](NodeT<T>& self) {
                      logits->ensure_grad();
                      const T g = self.grad[0] / static_cast<T>(vox);
                      for (std::int64_t v = 0; v < vox; ++v) {
                        const T wv = has_w ? w[v] : T(1);
                        if (wv == T(0)) continue;
                        T m = logits->value[v];
                        for (int c = 1; c < C; ++c)
                          m = std::max(m, logits->value[c * vox + v]);
                        T z = T(0);
                        for (int c = 0; c < C; ++c) z += std::exp(logits->value[c * vox + v] - m);
                        const T inv_z = T(1) / z;
                        for (int c = 0; c < C; ++c) {
                          const T soft = std::exp(logits->value[c * vox + v] - m) * inv_z;
                          logits->grad[c * vox + v] +=
                              g * wv * (soft - (y[v] == c ? T(1) : T(0)));
                        }
                      }
                    });
}

// Per-voxel KL divergence sum_c p_c * log(p_c / q_c) between two probability
// tensors [C, spatial]; probabilities are clamped to kProbFloor before logs.
// Output is a scalar field with the spatial shape. Non-negative, zero at p==q.
template <class T>
VarT<T> kl_map(VarT<T> p, VarT<T> q) {
  require(p->value.shape() == q->value.shape(), "kl_map: shape mismatch");
  const Shape spatial = spatial_of(p->value.shape());
  const int C = p->value.shape()[0];
  const std::int64_t vox = numel(spatial);
  const T floor = static_cast<T>(kProbFloor);

  TensorT<T> out(spatial);
  for (std::int64_t v = 0; v < vox; ++v) {
    double k = 0.0;
    for (int c = 0; c < C; ++c) {
      const double pc = std::max(static_cast<double>(p->value[c * vox + v]), kProbFloor);
      const double qc = std::max(static_cast<double>(q->value[c * vox + v]), kProbFloor);
      k += static_cast<double>(p->value[c * vox + v]) * (std::log(pc) - std::log(qc));
    }
    out[v] = static_cast<T>(k);
  }
  return make_op<T>(std::move(out), {p, q}, [p, q, C, vox, floor](NodeT<T>& self) {
    for (std::int64_t v = 0; v < vox; ++v) {
      const T g = self.grad[v];
      if (g == T(0)) continue;
      for (int c = 0; c < C; ++c) {
        const T pc_raw = p->value[c * vox + v];
        const T qc_raw = q->value[c * vox + v];
        const T pc = std::max(pc_raw, floor);
        const T qc = std::max(qc_raw, floor);
        if (p->requires_grad) {
          p->ensure_grad();
          T d = std::log(pc) - std::log(qc);
          if (pc_raw > floor) d += pc_raw / pc;  // == 1 when unclamped
          p->grad[c * vox + v] += g * d;
        }
        if (q->requires_grad) {
          q->ensure_grad();
          if (qc_raw > floor) q->grad[c * vox + v] -= g * pc_raw / qc;
        }
      }
    }
  });
}

// Cosine similarity of the flattened tensors. Probability inputs land in
// [0, 1]; proportional inputs give exactly 1. Zero-norm operands are a
// numeric error.
template <class T>
VarT<T> cosine_similarity(VarT<T> a, VarT<T> b) {
  require(a->value.shape() == b->value.shape(), "cosine_similarity: shape mismatch");
  const std::int64_t n = a->value.size();
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double av = a->value[i], bv = b->value[i];
    dot += av * bv;
    na2 += av * av;
    nb2 += bv * bv;
  }
  if (na2 == 0.0 || nb2 == 0.0)
    throw NumericError("cosine_similarity: zero-norm operand");
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const double s = dot / (na * nb);
  TensorT<T> out(Shape{1});
  out[0] = static_cast<T>(s);
  return make_op<T>(std::move(out), {a, b}, [a, b, n, na, nb, s](NodeT<T>& self) {
    const double g = self.grad[0];
    const double inv = 1.0 / (na * nb);
    if (a->requires_grad) {
      a->ensure_grad();
      const double c = s / (na * na);
      for (std::int64_t i = 0; i < n; ++i)
        a->grad[i] += static_cast<T>(g * (b->value[i] * inv - c * a->value[i]));
    }
    if (b->requires_grad) {
      b->ensure_grad();
      const double c = s / (nb * nb);
      for (std::int64_t i = 0; i < n; ++i)
        b->grad[i] += static_cast<T>(g * (a->value[i] * inv - c * b->value[i]));
    }
  });
}

// ---- composites --------------------------------------------------------------

// Structure loss: soft Dice plus unweighted cross-entropy against the same
// labels. probs must be softmax(logits).
template <class T>
VarT<T> structure_loss(VarT<T> logits, VarT<T> probs, const LabelMap& y) {
  return add(dice_loss(probs, y), cross_entropy(logits, y));
}

// Label-error rectification: cross-entropy down-weighted per voxel by
// exp(-KL(p||p_ref)) plus a KL regularizer. The weight map is a constant in
// the gradient of the weighted term; only the regularizer carries KL gradient.
template <class T>
VarT<T> rectification_loss(VarT<T> logits, VarT<T> probs, VarT<T> probs_ref, const LabelMap& y,
                           T lambda_kl) {
  auto kl = kl_map(probs, probs_ref);
  TensorT<T> weight(kl->value.shape());
  for (std::int64_t i = 0; i < weight.size(); ++i) weight[i] = std::exp(-kl->value[i]);
  auto weighted_ce = cross_entropy(logits, y, &weight);
  return add(weighted_ce, scale(mean_all(kl), lambda_kl));
}

// Same decomposition with an externally supplied weight map; used by gradient
// tests that must hold the weight fixed while differencing.
template <class T>
VarT<T> rectification_loss_with_weight(VarT<T> logits, VarT<T> probs, VarT<T> probs_ref,
                                       const LabelMap& y, const TensorT<T>& weight, T lambda_kl) {
  auto kl = kl_map(probs, probs_ref);
  auto weighted_ce = cross_entropy(logits, y, &weight);
  return add(weighted_ce, scale(mean_all(kl), lambda_kl));
}

// Bidirectional registration consistency: symmetric image similarity plus
// bending-energy smoothness of both fields.
template <class T>
VarT<T> bi_consistency_loss(VarT<T> x_a, VarT<T> x_u, VarT<T> field_a2u, VarT<T> field_u2a,
                            T lambda_smooth) {
  auto sim = add(mse(warp(x_a, field_a2u), x_u), mse(warp(x_u, field_u2a), x_a));
  auto smooth = add(bending_energy(field_a2u), bending_energy(field_u2a));
  return add(sim, scale(smooth, lambda_smooth));
}

// Semantic agreement of a prediction with the detached argmax of a reference
// prediction, as soft Dice. probs is [C, spatial]; ref_probs supplies the
// target labels and receives no gradient.
template <class T>
LabelMap argmax_channels(const TensorT<T>& probs) {
  const Shape spatial = spatial_of(probs.shape());
  const int C = probs.shape()[0];
  const std::int64_t vox = numel(spatial);
  std::vector<std::int32_t> lab(static_cast<std::size_t>(vox));
  for (std::int64_t v = 0; v < vox; ++v) {
    int best = 0;
    T best_val = probs[v];
    for (int c = 1; c < C; ++c)
      if (probs[c * vox + v] > best_val) {
        best_val = probs[c * vox + v];
        best = c;
      }
    lab[static_cast<std::size_t>(v)] = best;
  }
  return LabelMap(spatial, C, std::move(lab));
}

// Forward-backward (reversible) consistency: L1 reconstruction of both images
// plus Dice agreement of the reconstructed-image predictions with the original
// -image predictions (argmax targets, detached).
template <class T>
VarT<T> fb_consistency_loss(VarT<T> x_bar_a, VarT<T> x_bar_u, VarT<T> x_a, VarT<T> x_u,
                            VarT<T> pred_bar_a, VarT<T> pred_a, VarT<T> pred_bar_u,
                            VarT<T> pred_u, T lambda_dice) {
  auto image = add(mae(x_bar_a, x_a), mae(x_bar_u, x_u));
  const LabelMap ya = argmax_channels(pred_a->value);
  const LabelMap yu = argmax_channels(pred_u->value);
  auto semantic = add(dice_loss(pred_bar_a, ya), dice_loss(pred_bar_u, yu));
  return add(image, scale(semantic, lambda_dice));
}

}  // namespace osseg::ad
