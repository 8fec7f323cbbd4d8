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

#include "stnface/reference.hpp"

#include <cmath>

namespace stnface::reference {

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input,
                              const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias, int stride, int pad) {
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int K = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int Ho = conv_out_size(H, kh, stride, pad);
  const int Wo = conv_out_size(W, kw, stride, pad);
  BasicTensor<T> out({N, K, Ho, Wo});
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          T s = T(0);
          for (int c = 0; c < C; ++c) {
            for (int i = 0; i < kh; ++i) {
              const int ih = oh * stride - pad + i;
              if (ih < 0 || ih >= H) continue;
              for (int j = 0; j < kw; ++j) {
                const int iw = ow * stride - pad + j;
                if (iw < 0 || iw >= W) continue;
                s += weight.at(k, c, i, j) * input.at(n, c, ih, iw);
              }
            }
          }
          out.at(n, k, oh, ow) = s + bias[k];
        }
      }
    }
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& grad_out,
                               const BasicTensor<T>& input,
                               const BasicTensor<T>& weight, int stride,
                               int pad) {
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int K = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int Ho = grad_out.dim(2), Wo = grad_out.dim(3);
  Conv2dGrads<T> g;
  g.input = BasicTensor<T>(input.shape());
  g.weight = BasicTensor<T>(weight.shape());
  g.bias = BasicTensor<T>({K});
  for (int k = 0; k < K; ++k) {
    for (int n = 0; n < N; ++n) {
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) g.bias[k] += grad_out.at(n, k, oh, ow);
      }
    }
  }
  for (int k = 0; k < K; ++k) {
    for (int n = 0; n < N; ++n) {
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          const T gv = grad_out.at(n, k, oh, ow);
          for (int c = 0; c < C; ++c) {
            for (int i = 0; i < kh; ++i) {
              const int ih = oh * stride - pad + i;
              if (ih < 0 || ih >= H) continue;
              for (int j = 0; j < kw; ++j) {
                const int iw = ow * stride - pad + j;
                if (iw < 0 || iw >= W) continue;
                g.weight.at(k, c, i, j) += gv * input.at(n, c, ih, iw);
              }
            }
          }
        }
      }
    }
  }
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
          for (int oh = 0; oh < Ho; ++oh) {
            const int ih = oh * stride - pad + i;
            if (ih < 0 || ih >= H) continue;
            for (int ow = 0; ow < Wo; ++ow) {
              const int iw = ow * stride - pad + j;
              if (iw < 0 || iw >= W) continue;
              T s = T(0);
              for (int k = 0; k < K; ++k) {
                s += weight.at(k, c, i, j) * grad_out.at(n, k, oh, ow);
              }
              g.input.at(n, c, ih, iw) += s;
            }
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input,
                          const BasicTensor<T>& weight,
                          const BasicTensor<T>& bias) {
  const int N = input.dim(0), D = input.dim(1), M = weight.dim(1);
  BasicTensor<T> out({N, M});
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < M; ++m) {
      T s = T(0);
      for (int d = 0; d < D; ++d) s += input.at(n, d) * weight.at(d, m);
      out.at(n, m) = s + bias[m];
    }
  }
  return out;
}

template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& grad_out,
                       const BasicTensor<T>& input,
                       const BasicTensor<T>& weight) {
  const int N = input.dim(0), D = input.dim(1), M = weight.dim(1);
  FcGrads<T> g;
  g.input = BasicTensor<T>({N, D});
  g.weight = BasicTensor<T>({D, M});
  g.bias = BasicTensor<T>({M});
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < M; ++m) g.bias[m] += grad_out.at(n, m);
  }
  for (int d = 0; d < D; ++d) {
    for (int m = 0; m < M; ++m) {
      T s = T(0);
      for (int n = 0; n < N; ++n) s += input.at(n, d) * grad_out.at(n, m);
      g.weight.at(d, m) = s;
    }
  }
  for (int n = 0; n < N; ++n) {
    for (int d = 0; d < D; ++d) {
      T s = T(0);
      for (int m = 0; m < M; ++m) s += grad_out.at(n, m) * weight.at(d, m);
      g.input.at(n, d) = s;
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> bilinear_sample_forward(const BasicTensor<T>& U,
                                       const BasicSampleGrid<T>& grid) {
  const int R = U.dim(0), C = U.dim(1), H = U.dim(2), W = U.dim(3);
  const int Ho = grid.out_size.h, Wo = grid.out_size.w;
  BasicTensor<T> V({R, C, Ho, Wo});
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      for (int i = 0; i < Ho; ++i) {
        for (int j = 0; j < Wo; ++j) {
          const T x = grid.source_coords.at(r, i, j, 0);
          const T y = grid.source_coords.at(r, i, j, 1);
          if (!(x > T(-1) && x < T(W) && y > T(-1) && y < T(H))) continue;
          const int x0 = static_cast<int>(std::floor(x));
          const int y0 = static_cast<int>(std::floor(y));
          T s = T(0);
          for (int h = std::max(y0, 0); h <= std::min(y0 + 1, H - 1); ++h) {
            const T ky = kernel_weight(y - static_cast<T>(h));
            for (int w = std::max(x0, 0); w <= std::min(x0 + 1, W - 1); ++w) {
              s += U.at(r, c, h, w) * kernel_weight(x - static_cast<T>(w)) * ky;
            }
          }
          V.at(r, c, i, j) = s;
        }
      }
    }
  }
  return V;
}

template <typename T>
SamplerGrads<T> bilinear_sample_backward(const BasicTensor<T>& grad_V,
                                         const BasicTensor<T>& U,
                                         const BasicSampleGrid<T>& grid) {
  const int R = U.dim(0), C = U.dim(1), H = U.dim(2), W = U.dim(3);
  const int Ho = grid.out_size.h, Wo = grid.out_size.w;
  SamplerGrads<T> g;
  g.grad_U = BasicTensor<T>(U.shape());
  g.grad_coords = BasicTensor<T>(grid.source_coords.shape());
  for (int r = 0; r < R; ++r) {
    for (int i = 0; i < Ho; ++i) {
      for (int j = 0; j < Wo; ++j) {
        const T x = grid.source_coords.at(r, i, j, 0);
        const T y = grid.source_coords.at(r, i, j, 1);
        if (!(x > T(-1) && x < T(W) && y > T(-1) && y < T(H))) continue;
        const int x0 = static_cast<int>(std::floor(x));
        const int y0 = static_cast<int>(std::floor(y));
        T gx = T(0), gy = T(0);
        for (int c = 0; c < C; ++c) {
          const T gv = grad_V.at(r, c, i, j);
          T dx = T(0), dy = T(0);
          for (int h = std::max(y0, 0); h <= std::min(y0 + 1, H - 1); ++h) {
            const T th = static_cast<T>(h);
            for (int w = std::max(x0, 0); w <= std::min(x0 + 1, W - 1); ++w) {
              const T tw = static_cast<T>(w);
              const T kx = kernel_weight(x - tw), ky = kernel_weight(y - th);
              g.grad_U.at(r, c, h, w) += gv * kx * ky;
              dx += U.at(r, c, h, w) * ky * kernel_slope(tw, x);
              dy += U.at(r, c, h, w) * kx * kernel_slope(th, y);
            }
          }
          gx += gv * dx;
          gy += gv * dy;
        }
        g.grad_coords.at(r, i, j, 0) = gx;
        g.grad_coords.at(r, i, j, 1) = gy;
      }
    }
  }
  return g;
}

#define STNFACE_INSTANTIATE_REFERENCE(T)                                         \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&,                  \
                                         const BasicTensor<T>&,                  \
                                         const BasicTensor<T>&, int, int);       \
  template Conv2dGrads<T> conv2d_backward(const BasicTensor<T>&,                 \
                                          const BasicTensor<T>&,                 \
                                          const BasicTensor<T>&, int, int);      \
  template BasicTensor<T> fc_forward(const BasicTensor<T>&,                      \
                                     const BasicTensor<T>&,                      \
                                     const BasicTensor<T>&);                     \
  template FcGrads<T> fc_backward(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                  const BasicTensor<T>&);                        \
  template BasicTensor<T> bilinear_sample_forward(const BasicTensor<T>&,         \
                                                  const BasicSampleGrid<T>&);    \
  template SamplerGrads<T> bilinear_sample_backward(                             \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicSampleGrid<T>&);

STNFACE_INSTANTIATE_REFERENCE(float)
STNFACE_INSTANTIATE_REFERENCE(double)

}  // namespace stnface::reference
