#pragma once

#include <cmath>

#include "osseg/autodiff.hpp"
#include "osseg/detail/warp_kernels.hpp"

namespace osseg::ad {

namespace convdet {

inline int out_extent(int n, int k, int stride, int pad) { return (n + 2 * pad - k) / stride + 1; }

// Output index bounds [lo, hi) for one axis such that the tapped input index
// o*stride - pad + kk stays inside [0, n).
inline void tap_bounds(int n, int no, int stride, int pad, int kk, int& lo, int& hi) {
  int a = pad - kk;
  lo = a > 0 ? (a + stride - 1) / stride : 0;
  int b = n + pad - kk;  // exclusive upper bound on o*stride
  hi = b > 0 ? (b + stride - 1) / stride : 0;
  if (hi > no) hi = no;
}

template <class T>
void conv2d_forward(const T* in, int ci_n, int h, int w, const T* wt, const T* bias, int co_n,
                    int k, int stride, int pad, T* out, int ho, int wo) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < co_n; ++co) {
    T* oplane = out + static_cast<std::int64_t>(co) * ho * wo;
    const T bv = bias ? bias[co] : T(0);
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(ho) * wo; ++i) oplane[i] = bv;
    for (int ci = 0; ci < ci_n; ++ci) {
      const T* iplane = in + static_cast<std::int64_t>(ci) * h * w;
      const T* wk = wt + (static_cast<std::int64_t>(co) * ci_n + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        int ylo, yhi;
        tap_bounds(h, ho, stride, pad, ky, ylo, yhi);
        for (int kx = 0; kx < k; ++kx) {
          const T wv = wk[ky * k + kx];
          int xlo, xhi;
          tap_bounds(w, wo, stride, pad, kx, xlo, xhi);
          for (int yo = ylo; yo < yhi; ++yo) {
            const int yi = yo * stride - pad + ky;
            const T* irow = iplane + static_cast<std::int64_t>(yi) * w - pad + kx;
            T* orow = oplane + static_cast<std::int64_t>(yo) * wo;
            if (stride == 1) {
              for (int xo = xlo; xo < xhi; ++xo) orow[xo] += wv * irow[xo];
            } else {
              for (int xo = xlo; xo < xhi; ++xo) orow[xo] += wv * irow[xo * stride];
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward(const T* in, int ci_n, int h, int w, const T* wt, int co_n, int k, int stride,
                     int pad, const T* gout, int ho, int wo, T* gin, T* gw, T* gb) {
  if (gin) {
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < ci_n; ++ci) {
      T* gplane = gin + static_cast<std::int64_t>(ci) * h * w;
      for (int co = 0; co < co_n; ++co) {
        const T* goplane = gout + static_cast<std::int64_t>(co) * ho * wo;
        const T* wk = wt + (static_cast<std::int64_t>(co) * ci_n + ci) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          int ylo, yhi;
          tap_bounds(h, ho, stride, pad, ky, ylo, yhi);
          for (int kx = 0; kx < k; ++kx) {
            const T wv = wk[ky * k + kx];
            int xlo, xhi;
            tap_bounds(w, wo, stride, pad, kx, xlo, xhi);
            for (int yo = ylo; yo < yhi; ++yo) {
              const int yi = yo * stride - pad + ky;
              T* grow = gplane + static_cast<std::int64_t>(yi) * w - pad + kx;
              const T* gorow = goplane + static_cast<std::int64_t>(yo) * wo;
              if (stride == 1) {
                for (int xo = xlo; xo < xhi; ++xo) grow[xo] += wv * gorow[xo];
              } else {
                for (int xo = xlo; xo < xhi; ++xo) grow[xo * stride] += wv * gorow[xo];
              }
            }
          }
        }
      }
    }
  }
  if (gw || gb) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < co_n; ++co) {
      const T* goplane = gout + static_cast<std::int64_t>(co) * ho * wo;
      if (gb) {
        T acc = T(0);
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(ho) * wo; ++i) acc += goplane[i];
        gb[co] += acc;
      }
      if (!gw) continue;
      for (int ci = 0; ci < ci_n; ++ci) {
        const T* iplane = in + static_cast<std::int64_t>(ci) * h * w;
        T* gwk = gw + (static_cast<std::int64_t>(co) * ci_n + ci) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          int ylo, yhi;
          tap_bounds(h, ho, stride, pad, ky, ylo, yhi);
          for (int kx = 0; kx < k; ++kx) {
            int xlo, xhi;
            tap_bounds(w, wo, stride, pad, kx, xlo, xhi);
            T acc = T(0);
            for (int yo = ylo; yo < yhi; ++yo) {
              const int yi = yo * stride - pad + ky;
              const T* irow = iplane + static_cast<std::int64_t>(yi) * w - pad + kx;
              const T* gorow = goplane + static_cast<std::int64_t>(yo) * wo;
              if (stride == 1) {
                for (int xo = xlo; xo < xhi; ++xo) acc += gorow[xo] * irow[xo];
              } else {
                for (int xo = xlo; xo < xhi; ++xo) acc += gorow[xo] * irow[xo * stride];
              }
            }
            gwk[ky * k + kx] += acc;
          }
        }
      }
    }
  }
}

template <class T>
void conv3d_forward(const T* in, int ci_n, int d, int h, int w, const T* wt, const T* bias,
                    int co_n, int k, int stride, int pad, T* out, int dd, int ho, int wo) {
  const std::int64_t ivol = static_cast<std::int64_t>(d) * h * w;
  const std::int64_t ovol = static_cast<std::int64_t>(dd) * ho * wo;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < co_n; ++co) {
    T* oplane = out + co * ovol;
    const T bv = bias ? bias[co] : T(0);
    for (std::int64_t i = 0; i < ovol; ++i) oplane[i] = bv;
    for (int ci = 0; ci < ci_n; ++ci) {
      const T* iplane = in + ci * ivol;
      const T* wk = wt + (static_cast<std::int64_t>(co) * ci_n + ci) * k * k * k;
      for (int kz = 0; kz < k; ++kz) {
        int zlo, zhi;
        tap_bounds(d, dd, stride, pad, kz, zlo, zhi);
        for (int ky = 0; ky < k; ++ky) {
          int ylo, yhi;
          tap_bounds(h, ho, stride, pad, ky, ylo, yhi);
          for (int kx = 0; kx < k; ++kx) {
            const T wv = wk[(kz * k + ky) * k + kx];
            int xlo, xhi;
            tap_bounds(w, wo, stride, pad, kx, xlo, xhi);
            for (int zo = zlo; zo < zhi; ++zo) {
              const int zi = zo * stride - pad + kz;
              for (int yo = ylo; yo < yhi; ++yo) {
                const int yi = yo * stride - pad + ky;
                const T* irow =
                    iplane + (static_cast<std::int64_t>(zi) * h + yi) * w - pad + kx;
                T* orow = oplane + (static_cast<std::int64_t>(zo) * ho + yo) * wo;
                if (stride == 1) {
                  for (int xo = xlo; xo < xhi; ++xo) orow[xo] += wv * irow[xo];
                } else {
                  for (int xo = xlo; xo < xhi; ++xo) orow[xo] += wv * irow[xo * stride];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv3d_backward(const T* in, int ci_n, int d, int h, int w, const T* wt, int co_n, int k,
                     int stride, int pad, const T* gout, int dd, int ho, int wo, T* gin, T* gw,
                     T* gb) {
  const std::int64_t ivol = static_cast<std::int64_t>(d) * h * w;
  const std::int64_t ovol = static_cast<std::int64_t>(dd) * ho * wo;
  if (gin) {
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < ci_n; ++ci) {
      T* gplane = gin + ci * ivol;
      for (int co = 0; co < co_n; ++co) {
        const T* goplane = gout + co * ovol;
        const T* wk = wt + (static_cast<std::int64_t>(co) * ci_n + ci) * k * k * k;
        for (int kz = 0; kz < k; ++kz) {
          int zlo, zhi;
          tap_bounds(d, dd, stride, pad, kz, zlo, zhi);
          for (int ky = 0; ky < k; ++ky) {
            int ylo, yhi;
            tap_bounds(h, ho, stride, pad, ky, ylo, yhi);
            for (int kx = 0; kx < k; ++kx) {
              const T wv = wk[(kz * k + ky) * k + kx];
              int xlo, xhi;
              tap_bounds(w, wo, stride, pad, kx, xlo, xhi);
              for (int zo = zlo; zo < zhi; ++zo) {
                const int zi = zo * stride - pad + kz;
                for (int yo = ylo; yo < yhi; ++yo) {
                  const int yi = yo * stride - pad + ky;
                  T* grow = gplane + (static_cast<std::int64_t>(zi) * h + yi) * w - pad + kx;
                  const T* gorow = goplane + (static_cast<std::int64_t>(zo) * ho + yo) * wo;
                  if (stride == 1) {
                    for (int xo = xlo; xo < xhi; ++xo) grow[xo] += wv * gorow[xo];
                  } else {
                    for (int xo = xlo; xo < xhi; ++xo) grow[xo * stride] += wv * gorow[xo];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  if (gw || gb) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < co_n; ++co) {
      const T* goplane = gout + co * ovol;
      if (gb) {
        T acc = T(0);
        for (std::int64_t i = 0; i < ovol; ++i) acc += goplane[i];
        gb[co] += acc;
      }
      if (!gw) continue;
      for (int ci = 0; ci < ci_n; ++ci) {
        const T* iplane = in + ci * ivol;
        T* gwk = gw + (static_cast<std::int64_t>(co) * ci_n + ci) * k * k * k;
        for (int kz = 0; kz < k; ++kz) {
          int zlo, zhi;
          tap_bounds(d, dd, stride, pad, kz, zlo, zhi);
          for (int ky = 0; ky < k; ++ky) {
            int ylo, yhi;
            tap_bounds(h, ho, stride, pad, ky, ylo, yhi);
            for (int kx = 0; kx < k; ++kx) {
              int xlo, xhi;
              tap_bounds(w, wo, stride, pad, kx, xlo, xhi);
              T acc = T(0);
              for (int zo = zlo; zo < zhi; ++zo) {
                const int zi = zo * stride - pad + kz;
                for (int yo = ylo; yo < yhi; ++yo) {
                  const int yi = yo * stride - pad + ky;
                  const T* irow =
                      iplane + (static_cast<std::int64_t>(zi) * h + yi) * w - pad + kx;
                  const T* gorow = goplane + (static_cast<std::int64_t>(zo) * ho + yo) * wo;
                  if (stride == 1) {
                    for (int xo = xlo; xo < xhi; ++xo) acc += gorow[xo] * irow[xo];
                  } else {
                    for (int xo = xlo; xo < xhi; ++xo) acc += gorow[xo] * irow[xo * stride];
                  }
                }
              }
              gwk[(kz * k + ky) * k + kx] += acc;
            }
          }
        }
      }
    }
  }
}

}  // namespace convdet

// Convolution over [Cin, spatial] input with [Cout, Cin, k^rank] weights.
template <class T>
VarT<T> conv(VarT<T> x, VarT<T> w, VarT<T> b, int stride = 1, int pad = 1) {
  const Shape& xs = x->value.shape();
  const Shape& ws = w->value.shape();
  const int rank = static_cast<int>(xs.size()) - 1;
  require(rank == 2 || rank == 3, "conv: input must be [C, spatial]");
  require(static_cast<int>(ws.size()) == rank + 2 && ws[1] == xs[0],
          "conv: weight shape mismatch");
  const int k = ws[2];
  const int co_n = ws[0];
  const int ci_n = xs[0];

  Shape os{co_n};
  for (int d = 0; d < rank; ++d) os.push_back(convdet::out_extent(xs[1 + d], k, stride, pad));
  TensorT<T> out(os);
  if (rank == 2)
    convdet::conv2d_forward(x->value.data(), ci_n, xs[1], xs[2], w->value.data(),
                            b ? b->value.data() : nullptr, co_n, k, stride, pad, out.data(), os[1],
                            os[2]);
  else
    convdet::conv3d_forward(x->value.data(), ci_n, xs[1], xs[2], xs[3], w->value.data(),
                            b ? b->value.data() : nullptr, co_n, k, stride, pad, out.data(), os[1],
                            os[2], os[3]);

  std::vector<VarT<T>> parents{x, w};
  if (b) parents.push_back(b);
  return make_op<T>(std::move(out), std::move(parents),
                    [x, w, b, rank, k, stride, pad](NodeT<T>& self) {
                      const Shape& xs = x->value.shape();
                      const Shape& os = self.value.shape();
                      T* gin = nullptr;
                      T* gw = nullptr;
                      T* gb = nullptr;
                      if (x->requires_grad) {
                        x->ensure_grad();
                        gin = x->grad.data();
                      }
                      if (w->requires_grad) {
                        w->ensure_grad();
                        gw = w->grad.data();
                      }
                      if (b && b->requires_grad) {
                        b->ensure_grad();
                        gb = b->grad.data();
                      }
                      if (rank == 2)
                        convdet::conv2d_backward(x->value.data(), xs[0], xs[1], xs[2],
                                                 w->value.data(), os[0], k, stride, pad,
                                                 self.grad.data(), os[1], os[2], gin, gw, gb);
                      else
                        convdet::conv3d_backward(x->value.data(), xs[0], xs[1], xs[2], xs[3],
                                                 w->value.data(), os[0], k, stride, pad,
                                                 self.grad.data(), os[1], os[2], os[3], gin, gw,
                                                 gb);
                    });
}

// Per-channel normalization over the spatial extent with learnable gain/bias.
template <class T>
VarT<T> instance_norm(VarT<T> x, VarT<T> gain, VarT<T> bias, T eps = T(1e-5)) {
  const Shape& xs = x->value.shape();
  const int C = xs[0];
  const std::int64_t vox = x->value.size() / C;
  require(gain->value.size() == C && bias->value.size() == C, "instance_norm: param size");

  TensorT<T> out(xs);
  TensorT<T> xhat(xs);
  TensorT<T> inv_std(Shape{C});
  for (int c = 0; c < C; ++c) {
    const T* xp = x->value.data() + c * vox;
    T mu = T(0);
    for (std::int64_t i = 0; i < vox; ++i) mu += xp[i];
    mu /= static_cast<T>(vox);
    T var = T(0);
    for (std::int64_t i = 0; i < vox; ++i) {
      T d = xp[i] - mu;
      var += d * d;
    }
    var /= static_cast<T>(vox);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[c] = is;
    const T g = gain->value[c];
    const T b = bias->value[c];
    T* xh = xhat.data() + c * vox;
    T* op = out.data() + c * vox;
    for (std::int64_t i = 0; i < vox; ++i) {
      xh[i] = (xp[i] - mu) * is;
      op[i] = g * xh[i] + b;
    }
  }
  return make_op<T>(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), C,
       vox](NodeT<T>& self) {
        for (int c = 0; c < C; ++c) {
          const T* go = self.grad.data() + c * vox;
          const T* xh = xhat.data() + c * vox;
          T sum_go = T(0), sum_goxh = T(0);
          for (std::int64_t i = 0; i < vox; ++i) {
            sum_go += go[i];
            sum_goxh += go[i] * xh[i];
          }
          if (gain->requires_grad) {
            gain->ensure_grad();
            gain->grad[c] += sum_goxh;
          }
          if (bias->requires_grad) {
            bias->ensure_grad();
            bias->grad[c] += sum_go;
          }
          if (x->requires_grad) {
            x->ensure_grad();
            T* gx = x->grad.data() + c * vox;
            const T g = gain->value[c];
            const T is = inv_std[c];
            const T m_go = sum_go / static_cast<T>(vox);
            const T m_goxh = sum_goxh / static_cast<T>(vox);
            for (std::int64_t i = 0; i < vox; ++i)
              gx[i] += g * is * (go[i] - m_go - xh[i] * m_goxh);
          }
        }
      });
}

template <class T>
VarT<T> leaky_relu(VarT<T> x, T slope) {
  TensorT<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) {
    T v = x->value[i];
    out[i] = v > T(0) ? v : slope * v;
  }
  return make_op<T>(std::move(out), {x}, [x, slope](NodeT<T>& self) {
    x->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i)
      x->grad[i] += self.grad[i] * (x->value[i] > T(0) ? T(1) : slope);
  });
}

template <class T>
VarT<T> sigmoid(VarT<T> x) {
  TensorT<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x->value[i]));
  return make_op<T>(std::move(out), {x}, [x](NodeT<T>& self) {
    x->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) {
      const T y = self.value[i];
      x->grad[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <class T>
VarT<T> tanh_op(VarT<T> x) {
  TensorT<T> out(x->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x->value[i]);
  return make_op<T>(std::move(out), {x}, [x](NodeT<T>& self) {
    x->ensure_grad();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) {
      const T y = self.value[i];
      x->grad[i] += self.grad[i] * (T(1) - y * y);
    }
  });
}

// Softmax across the leading channel axis of [C, spatial].
template <class T>
VarT<T> softmax_channels(VarT<T> x) {
  const Shape& xs = x->value.shape();
  const int C = xs[0];
  const std::int64_t vox = x->value.size() / C;
  TensorT<T> out(xs);
  for (std::int64_t v = 0; v < vox; ++v) {
    T m = x->value[v];
    for (int c = 1; c < C; ++c) m = std::max(m, x->value[c * vox + v]);
    T z = T(0);
    for (int c = 0; c < C; ++c) {
      T e = std::exp(x->value[c * vox + v] - m);
      out[c * vox + v] = e;
      z += e;
    }
    const T inv = T(1) / z;
    for (int c = 0; c < C; ++c) out[c * vox + v] *= inv;
  }
  return make_op<T>(std::move(out), {x}, [x, C, vox](NodeT<T>& self) {
    x->ensure_grad();
    for (std::int64_t v = 0; v < vox; ++v) {
      T dot = T(0);
      for (int c = 0; c < C; ++c) dot += self.grad[c * vox + v] * self.value[c * vox + v];
      for (int c = 0; c < C; ++c)
        x->grad[c * vox + v] += self.value[c * vox + v] * (self.grad[c * vox + v] - dot);
    }
  });
}

// Nearest-neighbour x2 upsampling of every spatial axis.
template <class T>
VarT<T> upsample2(VarT<T> x) {
  const Shape& xs = x->value.shape();
  const int rank = static_cast<int>(xs.size()) - 1;
  Shape os = xs;
  for (int d = 1; d <= rank; ++d) os[d] *= 2;
  TensorT<T> out(os);
  const int C = xs[0];
  if (rank == 2) {
    const int h = xs[1], w = xs[2];
    for (int c = 0; c < C; ++c) {
      const T* ip = x->value.data() + static_cast<std::int64_t>(c) * h * w;
      T* op = out.data() + static_cast<std::int64_t>(c) * 4 * h * w;
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
          op[static_cast<std::int64_t>(y) * 2 * w + xx] =
              ip[static_cast<std::int64_t>(y / 2) * w + xx / 2];
    }
  } else {
    const int d0 = xs[1], h = xs[2], w = xs[3];
    for (int c = 0; c < C; ++c) {
      const T* ip = x->value.data() + static_cast<std::int64_t>(c) * d0 * h * w;
      T* op = out.data() + static_cast<std::int64_t>(c) * 8 * d0 * h * w;
      for (int z = 0; z < 2 * d0; ++z)
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx)
            op[(static_cast<std::int64_t>(z) * 2 * h + y) * 2 * w + xx] =
                ip[(static_cast<std::int64_t>(z / 2) * h + y / 2) * w + xx / 2];
    }
  }
  return make_op<T>(std::move(out), {x}, [x, rank](NodeT<T>& self) {
    x->ensure_grad();
    const Shape& xs = x->value.shape();
    const int C = xs[0];
    if (rank == 2) {
      const int h = xs[1], w = xs[2];
      for (int c = 0; c < C; ++c) {
        const T* gp = self.grad.data() + static_cast<std::int64_t>(c) * 4 * h * w;
        T* gx = x->grad.data() + static_cast<std::int64_t>(c) * h * w;
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx)
            gx[static_cast<std::int64_t>(y / 2) * w + xx / 2] +=
                gp[static_cast<std::int64_t>(y) * 2 * w + xx];
      }
    } else {
      const int d0 = xs[1], h = xs[2], w = xs[3];
      for (int c = 0; c < C; ++c) {
        const T* gp = self.grad.data() + static_cast<std::int64_t>(c) * 8 * d0 * h * w;
        T* gx = x->grad.data() + static_cast<std::int64_t>(c) * d0 * h * w;
        for (int z = 0; z < 2 * d0; ++z)
          for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
              gx[(static_cast<std::int64_t>(z / 2) * h + y / 2) * w + xx / 2] +=
                  gp[(static_cast<std::int64_t>(z) * 2 * h + y) * 2 * w + xx];
      }
    }
  });
}

// Concatenation along the channel axis.
template <class T>
VarT<T> concat_channels(VarT<T> a, VarT<T> b) {
  const Shape sa = a->value.shape(), sb = b->value.shape();
  require(spatial_of(sa) == spatial_of(sb), "concat: spatial shape mismatch");
  Shape os = sa;
  os[0] = sa[0] + sb[0];
  TensorT<T> out(os);
  std::copy(a->value.data(), a->value.data() + a->value.size(), out.data());
  std::copy(b->value.data(), b->value.data() + b->value.size(), out.data() + a->value.size());
  return make_op<T>(std::move(out), {a, b}, [a, b](NodeT<T>& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::int64_t i = 0; i < a->grad.size(); ++i) a->grad[i] += self.grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      const std::int64_t off = a->value.size();
      for (std::int64_t i = 0; i < b->grad.size(); ++i) b->grad[i] += self.grad[off + i];
    }
  });
}

// Differentiable pull-back warp of [C, spatial] values by a [D, spatial]
// displacement field; gradients flow to both values and field components.
template <class T>
VarT<T> warp(VarT<T> values, VarT<T> field) {
  const Shape vs = values->value.shape();
  const Shape spatial = spatial_of(vs);
  require(spatial_of(field->value.shape()) == spatial &&
              field->value.shape()[0] == static_cast<int>(spatial.size()),
          "warp: field/value shape mismatch");
  TensorT<T> out(vs);
  detail::warp_pull_linear(values->value.data(), field->value.data(), spatial, vs[0], out.data());
  return make_op<T>(std::move(out), {values, field}, [values, field, spatial, C = vs[0]](
                                                         NodeT<T>& self) {
    T* gsrc = nullptr;
    T* gfield = nullptr;
    if (values->requires_grad) {
      values->ensure_grad();
      gsrc = values->grad.data();
    }
    if (field->requires_grad) {
      field->ensure_grad();
      gfield = field->grad.data();
    }
    detail::warp_pull_linear_backward(values->value.data(), field->value.data(), spatial, C,
                                      self.grad.data(), gsrc, gfield);
  });
}

}  // namespace osseg::ad
