/* Copyright 2026 The stnface Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "stnface/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace stnface {
namespace {

template <typename T>
void check_conv_shapes(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                       int stride, int pad) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  if (input.dim(1) != weight.dim(1)) {
    throw DimensionError("conv2d channel mismatch: input " +
                         shape_str(input.shape()) + " vs weight " +
                         shape_str(weight.shape()));
  }
  if (stride < 1 || pad < 0) throw InputError("conv2d: stride must be >= 1");
  if (weight.dim(2) > input.dim(2) + 2 * pad ||
      weight.dim(3) > input.dim(3) + 2 * pad) {
    throw DimensionError("conv2d kernel " + shape_str(weight.shape()) +
                         " larger than padded input " + shape_str(input.shape()));
  }
}

// col[(c*kh + i)*kw + j][oh*Wo + ow]
template <typename T>
void im2col(const T* img, int C, int H, int W, int kh, int kw, int stride,
            int pad, int Ho, int Wo, T* col) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        T* row = col + ((c * kh + i) * kw + j) * P;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * stride - pad + i;
          T* dst = row + oh * Wo;
          if (ih < 0 || ih >= H) {
            std::fill(dst, dst + Wo, T(0));
            continue;
          }
          const T* src = img + (c * H + ih) * W;
          for (int ow = 0; ow < Wo; ++ow) {
            const int iw = ow * stride - pad + j;
            dst[ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

// Transposed layout: row[p][r].
template <typename T>
void im2row(const T* img, int C, int H, int W, int kh, int kw, int stride,
            int pad, int Ho, int Wo, T* rows) {
  const int R = C * kh * kw;
  for (int oh = 0; oh < Ho; ++oh) {
    for (int ow = 0; ow < Wo; ++ow) {
      T* dst = rows + static_cast<std::size_t>(oh * Wo + ow) * R;
      for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
          const int ih = oh * stride - pad + i;
          for (int j = 0; j < kw; ++j) {
            const int iw = ow * stride - pad + j;
            *dst++ = (ih >= 0 && ih < H && iw >= 0 && iw < W)
                         ? img[(c * H + ih) * W + iw]
                         : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride,
                int pad, int Ho, int Wo, T* img) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T* row = col + ((c * kh + i) * kw + j) * P;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * stride - pad + i;
          if (ih < 0 || ih >= H) continue;
          T* dst = img + (c * H + ih) * W;
          for (int ow = 0; ow < Wo; ++ow) {
            const int iw = ow * stride - pad + j;
            if (iw >= 0 && iw < W) dst[iw] += row[oh * Wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input,
                              const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias, int stride, int pad) {
  check_conv_shapes(input, weight, stride, pad);
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int K = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (bias.numel() != static_cast<std::size_t>(K)) {
    throw DimensionError("conv2d bias " + shape_str(bias.shape()) +
                         " vs weight " + shape_str(weight.shape()));
  }
  const int Ho = conv_out_size(H, kh, stride, pad);
  const int Wo = conv_out_size(W, kw, stride, pad);
  const int P = Ho * Wo, R = C * kh * kw;
  BasicTensor<T> out({N, K, Ho, Wo});
  const T* wp = weight.ptr();
  const T* bp = bias.ptr();
  const T* ip = input.ptr();
  T* op = out.ptr();

#pragma omp parallel
  {
    std::vector<T> col(static_cast<std::size_t>(R) * P);
#pragma omp for schedule(static)
    for (int n = 0; n < N; ++n) {
      im2col(ip + static_cast<std::size_t>(n) * C * H * W, C, H, W, kh, kw,
             stride, pad, Ho, Wo, col.data());
      T* __restrict o = op + static_cast<std::size_t>(n) * K * P;
      for (int k = 0; k < K; ++k) {
        T* __restrict ok = o + static_cast<std::size_t>(k) * P;
        for (int r = 0; r < R; ++r) {
          const T wv = wp[k * R + r];
          const T* __restrict cr = col.data() + static_cast<std::size_t>(r) * P;
          for (int p = 0; p < P; ++p) ok[p] += wv * cr[p];
        }
        const T b = bp[k];
        for (int p = 0; p < P; ++p) ok[p] += b;
      }
    }
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& grad_out,
                               const BasicTensor<T>& input,
                               const BasicTensor<T>& weight, int stride,
                               int pad, bool need_input_grad) {
  check_conv_shapes(input, weight, stride, pad);
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int K = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int Ho = conv_out_size(H, kh, stride, pad);
  const int Wo = conv_out_size(W, kw, stride, pad);
  if (grad_out.shape() != Shape{N, K, Ho, Wo}) {
    throw DimensionError("conv2d grad_out " + shape_str(grad_out.shape()) +
                         " does not match output " +
                         shape_str(Shape{N, K, Ho, Wo}));
  }
  const int P = Ho * Wo, R = C * kh * kw;
  const T* gp = grad_out.ptr();
  const T* ip = input.ptr();
  const T* wp = weight.ptr();

  Conv2dGrads<T> g;
  g.weight = BasicTensor<T>(weight.shape());
  g.bias = BasicTensor<T>({K});

  for (int k = 0; k < K; ++k) {
    T acc = T(0);
    for (int n = 0; n < N; ++n) {
      const T* gk = gp + (static_cast<std::size_t>(n) * K + k) * P;
      for (int p = 0; p < P; ++p) acc += gk[p];
    }
    g.bias[k] = acc;
  }

  std::vector<T> rows(static_cast<std::size_t>(N) * P * R);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    im2row(ip + static_cast<std::size_t>(n) * C * H * W, C, H, W, kh, kw, stride,
           pad, Ho, Wo, rows.data() + static_cast<std::size_t>(n) * P * R);
  }

  T* gw = g.weight.ptr();
#pragma omp parallel for schedule(static)
  for (int k = 0; k < K; ++k) {
    T* __restrict gwk = gw + static_cast<std::size_t>(k) * R;
    for (int n = 0; n < N; ++n) {
      const T* gk = gp + (static_cast<std::size_t>(n) * K + k) * P;
      const T* rn = rows.data() + static_cast<std::size_t>(n) * P * R;
      for (int p = 0; p < P; ++p) {
        const T gv = gk[p];
        const T* __restrict rp = rn + static_cast<std::size_t>(p) * R;
        for (int r = 0; r < R; ++r) gwk[r] += gv * rp[r];
      }
    }
  }

  if (need_input_grad) {
    g.input = BasicTensor<T>(input.shape());
    T* gi = g.input.ptr();
#pragma omp parallel
    {
      std::vector<T> gcol(static_cast<std::size_t>(R) * P);
#pragma omp for schedule(static)
      for (int n = 0; n < N; ++n) {
        std::fill(gcol.begin(), gcol.end(), T(0));
        for (int k = 0; k < K; ++k) {
          const T* __restrict gk = gp + (static_cast<std::size_t>(n) * K + k) * P;
          for (int r = 0; r < R; ++r) {
            const T wv = wp[k * R + r];
            T* __restrict dst = gcol.data() + static_cast<std::size_t>(r) * P;
            for (int p = 0; p < P; ++p) dst[p] += wv * gk[p];
          }
        }
        col2im_add(gcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                   gi + static_cast<std::size_t>(n) * C * H * W);
      }
    }
  }
  return g;
}

template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& input, int k, int stride) {
  require_rank(input.shape(), 4, "maxpool2d input");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (k < 1 || stride < 1 || k > H || k > W) {
    throw DimensionError("maxpool2d window " + std::to_string(k) +
                         " does not fit input " + shape_str(input.shape()));
  }
  const int Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
  PoolResult<T> r;
  r.output = BasicTensor<T>({N, C, Ho, Wo});
  r.argmax.resize(r.output.numel());
  const T* ip = input.ptr();
#pragma omp parallel for schedule(static)
  for (int nc = 0; nc < N * C; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * H * W;
    for (int oh = 0; oh < Ho; ++oh) {
      for (int ow = 0; ow < Wo; ++ow) {
        std::size_t best = base + static_cast<std::size_t>(oh * stride) * W + ow * stride;
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j < k; ++j) {
            const std::size_t idx =
                base + static_cast<std::size_t>(oh * stride + i) * W + ow * stride + j;
            if (ip[idx] > ip[best]) best = idx;
          }
        }
        const std::size_t o = (static_cast<std::size_t>(nc) * Ho + oh) * Wo + ow;
        r.output[o] = ip[best];
        r.argmax[o] = static_cast<std::int64_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_out,
                                  std::span<const std::int64_t> argmax,
                                  const Shape& input_shape) {
  if (argmax.size() != grad_out.numel()) {
    throw DimensionError("maxpool2d backward: argmax/grad_out size mismatch");
  }
  BasicTensor<T> gi(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    gi[static_cast<std::size_t>(argmax[o])] += grad_out[o];
  }
  return gi;
}

template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input,
                          const BasicTensor<T>& weight,
                          const BasicTensor<T>& bias) {
  require_rank(input.shape(), 2, "fc input");
  require_rank(weight.shape(), 2, "fc weight");
  const int N = input.dim(0), D = input.dim(1), M = weight.dim(1);
  if (weight.dim(0) != D || bias.numel() != static_cast<std::size_t>(M)) {
    throw DimensionError("fc shape mismatch: input " + shape_str(input.shape()) +
                         " weight " + shape_str(weight.shape()) + " bias " +
                         shape_str(bias.shape()));
  }
  BasicTensor<T> out({N, M});
  const T* xp = input.ptr();
  const T* wp = weight.ptr();
  const T* bp = bias.ptr();
  T* op = out.ptr();
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    T* __restrict o = op + static_cast<std::size_t>(n) * M;
    for (int d = 0; d < D; ++d) {
      const T xv = xp[static_cast<std::size_t>(n) * D + d];
      const T* __restrict wr = wp + static_cast<std::size_t>(d) * M;
      for (int m = 0; m < M; ++m) o[m] += xv * wr[m];
    }
    for (int m = 0; m < M; ++m) o[m] += bp[m];
  }
  return out;
}

template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& grad_out,
                       const BasicTensor<T>& input,
                       const BasicTensor<T>& weight, bool need_input_grad) {
  require_rank(input.shape(), 2, "fc input");
  const int N = input.dim(0), D = input.dim(1), M = weight.dim(1);
  if (weight.dim(0) != D || grad_out.shape() != Shape{N, M}) {
    throw DimensionError("fc backward shape mismatch: grad_out " +
                         shape_str(grad_out.shape()) + " input " +
                         shape_str(input.shape()) + " weight " +
                         shape_str(weight.shape()));
  }
  const T* gp = grad_out.ptr();
  const T* xp = input.ptr();
  FcGrads<T> g;
  g.weight = BasicTensor<T>({D, M});
  g.bias = BasicTensor<T>({M});
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < M; ++m) g.bias[m] += gp[static_cast<std::size_t>(n) * M + m];
  }
  T* gw = g.weight.ptr();
#pragma omp parallel for schedule(static)
  for (int d = 0; d < D; ++d) {
    T* __restrict row = gw + static_cast<std::size_t>(d) * M;
    for (int n = 0; n < N; ++n) {
      const T xv = xp[static_cast<std::size_t>(n) * D + d];
      const T* __restrict gn = gp + static_cast<std::size_t>(n) * M;
      for (int m = 0; m < M; ++m) row[m] += xv * gn[m];
    }
  }
  if (need_input_grad) {
    std::vector<T> wt(static_cast<std::size_t>(M) * D);
    const T* wp = weight.ptr();
    for (int d = 0; d < D; ++d) {
      for (int m = 0; m < M; ++m) {
        wt[static_cast<std::size_t>(m) * D + d] = wp[static_cast<std::size_t>(d) * M + m];
      }
    }
    g.input = BasicTensor<T>({N, D});
    T* gi = g.input.ptr();
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
      T* __restrict dst = gi + static_cast<std::size_t>(n) * D;
      for (int m = 0; m < M; ++m) {
        const T gv = gp[static_cast<std::size_t>(n) * M + m];
        const T* __restrict wr = wt.data() + static_cast<std::size_t>(m) * D;
        for (int d = 0; d < D; ++d) dst[d] += gv * wr[d];
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  y.drop_grad();
  for (auto& v : y.data()) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_out,
                             const BasicTensor<T>& x) {
  if (grad_out.numel() != x.numel()) {
    throw DimensionError("relu backward: " + shape_str(grad_out.shape()) +
                         " vs " + shape_str(x.shape()));
  }
  BasicTensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    g[i] = x[i] > T(0) ? grad_out[i] : T(0);
  }
  return g;
}

template <typename T>
BasicTensor<T> avgpool_global_forward(const BasicTensor<T>& x) {
  require_rank(x.shape(), 4, "global avgpool input");
  const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  BasicTensor<T> out({N, C});
  for (int nc = 0; nc < N * C; ++nc) {
    T s = T(0);
    const T* p = x.ptr() + static_cast<std::size_t>(nc) * HW;
    for (int i = 0; i < HW; ++i) s += p[i];
    out[nc] = s / static_cast<T>(HW);
  }
  return out;
}

template <typename T>
BasicTensor<T> avgpool_global_backward(const BasicTensor<T>& grad_out,
                                       const Shape& input_shape) {
  require_rank(input_shape, 4, "global avgpool input");
  const int N = input_shape[0], C = input_shape[1];
  const int HW = input_shape[2] * input_shape[3];
  if (grad_out.shape() != Shape{N, C}) {
    throw DimensionError("global avgpool backward: " + shape_str(grad_out.shape()));
  }
  BasicTensor<T> g(input_shape);
  for (int nc = 0; nc < N * C; ++nc) {
    const T v = grad_out[nc] / static_cast<T>(HW);
    T* p = g.ptr() + static_cast<std::size_t>(nc) * HW;
    for (int i = 0; i < HW; ++i) p[i] = v;
  }
  return g;
}

template <typename T>
BasicTensor<T> softmax_forward(const BasicTensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax logits");
  const int N = logits.dim(0), M = logits.dim(1);
  BasicTensor<T> probs({N, M});
  for (int n = 0; n < N; ++n) {
    const T* z = logits.ptr() + static_cast<std::size_t>(n) * M;
    T* p = probs.ptr() + static_cast<std::size_t>(n) * M;
    const T zmax = *std::max_element(z, z + M);
    T sum = T(0);
    for (int m = 0; m < M; ++m) {
      p[m] = std::exp(z[m] - zmax);
      sum += p[m];
    }
    for (int m = 0; m < M; ++m) p[m] /= sum;
  }
  return probs;
}

template <typename T>
LossResult<T> softmax_xent_loss(const BasicTensor<T>& logits,
                                std::span<const int> labels) {
  require_rank(logits.shape(), 2, "softmax logits");
  const int N = logits.dim(0), M = logits.dim(1);
  if (labels.size() != static_cast<std::size_t>(N)) {
    throw DimensionError("softmax_xent: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(logits.shape()));
  }
  for (int y : labels) {
    if (y < 0 || y >= M) {
      throw IndexError("softmax_xent: label " + std::to_string(y) +
                       " outside [0," + std::to_string(M) + ")");
    }
  }
  LossResult<T> r;
  r.grad = BasicTensor<T>({N, M});
  T total = T(0);
  for (int n = 0; n < N; ++n) {
    const T* z = logits.ptr() + static_cast<std::size_t>(n) * M;
    T* g = r.grad.ptr() + static_cast<std::size_t>(n) * M;
    const T zmax = *std::max_element(z, z + M);
    T sum = T(0);
    for (int m = 0; m < M; ++m) sum += std::exp(z[m] - zmax);
    const T log_sum = std::log(sum);
    total -= z[labels[n]] - zmax - log_sum;
    for (int m = 0; m < M; ++m) {
      const T p = std::exp(z[m] - zmax - log_sum);
      g[m] = (p - (m == labels[n] ? T(1) : T(0))) / static_cast<T>(N);
    }
  }
  r.loss = total / static_cast<T>(N);
  return r;
}

template <typename T>
LossResult<T> regression_loss(const BasicTensor<T>& pred,
                              const BasicTensor<T>& target, RegressionLoss mode) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("regression_loss: pred " + shape_str(pred.shape()) +
                         " vs target " + shape_str(target.shape()));
  }
  const T count = static_cast<T>(pred.numel());
  LossResult<T> r;
  r.grad = BasicTensor<T>(pred.shape());
  T total = T(0);
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const T d = pred[i] - target[i];
    if (mode == RegressionLoss::kL2) {
      total += d * d;
      r.grad[i] = T(2) * d / count;
    } else if (std::abs(d) < T(1)) {
      total += T(0.5) * d * d;
      r.grad[i] = d / count;
    } else {
      total += std::abs(d) - T(0.5);
      r.grad[i] = (d > T(0) ? T(1) : T(-1)) / count;
    }
  }
  r.loss = total / count;
  return r;
}

#define STNFACE_INSTANTIATE_OPS(T)                                              \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&,                 \
                                         const BasicTensor<T>&,                 \
                                         const BasicTensor<T>&, int, int);      \
  template Conv2dGrads<T> conv2d_backward(const BasicTensor<T>&,                \
                                          const BasicTensor<T>&,                \
                                          const BasicTensor<T>&, int, int, bool); \
  template PoolResult<T> maxpool2d_forward(const BasicTensor<T>&, int, int);    \
  template BasicTensor<T> maxpool2d_backward(                                   \
      const BasicTensor<T>&, std::span<const std::int64_t>, const Shape&);      \
  template BasicTensor<T> fc_forward(const BasicTensor<T>&,                     \
                                     const BasicTensor<T>&,                     \
                                     const BasicTensor<T>&);                    \
  template FcGrads<T> fc_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                  const BasicTensor<T>&, bool);                 \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                  \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&,                  \
                                        const BasicTensor<T>&);                 \
  template BasicTensor<T> avgpool_global_forward(const BasicTensor<T>&);        \
  template BasicTensor<T> avgpool_global_backward(const BasicTensor<T>&,        \
                                                  const Shape&);                \
  template BasicTensor<T> softmax_forward(const BasicTensor<T>&);               \
  template LossResult<T> softmax_xent_loss(const BasicTensor<T>&,               \
                                           std::span<const int>);               \
  template LossResult<T> regression_loss(const BasicTensor<T>&,                 \
                                         const BasicTensor<T>&, RegressionLoss);

STNFACE_INSTANTIATE_OPS(float)
STNFACE_INSTANTIATE_OPS(double)

}  // namespace stnface
