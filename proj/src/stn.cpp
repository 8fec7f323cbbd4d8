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

#include "stnface/stn.hpp"

#include <cmath>

namespace stnface {
namespace {

// Pixel-space affine map x_pix = ax * j + bx * i + cx (same for y), built from
// theta and the normalization so that identity theta gives ax = 1, bx = cx = 0
// exactly when out_size == src_size.
struct PixelMap {
  double ax, bx, cx, ay, by, cy;
};

PixelMap pixel_map(const double* th, Size2 out, Size2 src) {
  const double hx = (src.w - 1) / 2.0;
  const double hy = (src.h - 1) / 2.0;
  const bool xs = out.w > 1, ys = out.h > 1;
  PixelMap m{};
  m.ax = xs ? th[0] * (src.w - 1) / (out.w - 1) : 0.0;
  m.bx = ys ? th[1] * (src.w - 1) / (out.h - 1) : 0.0;
  m.cx = hx * (th[2] + 1.0 - (xs ? th[0] : 0.0) - (ys ? th[1] : 0.0));
  m.ay = xs ? th[3] * (src.h - 1) / (out.w - 1) : 0.0;
  m.by = ys ? th[4] * (src.h - 1) / (out.h - 1) : 0.0;
  m.cy = hy * (th[5] + 1.0 - (xs ? th[3] : 0.0) - (ys ? th[4] : 0.0));
  return m;
}

inline double lattice(int idx, int n) {
  return n > 1 ? 2.0 * idx / (n - 1) - 1.0 : 0.0;
}

template <typename T>
void check_grid(const BasicTensor<T>& U, const BasicSampleGrid<T>& grid) {
  require_rank(U.shape(), 4, "sampler input");
  if (grid.source_coords.dim(0) != U.dim(0)) {
    throw DimensionError("sampler: grid has " +
                         std::to_string(grid.source_coords.dim(0)) +
                         " regions, input " + shape_str(U.shape()));
  }
  if (grid.src_size != Size2{U.dim(2), U.dim(3)}) {
    throw DimensionError("sampler: grid built for a different source size than " +
                         shape_str(U.shape()));
  }
}

}  // namespace

AffineTheta AffineTheta::from_rotation(double alpha, double t1, double t2) {
  const double c = std::cos(alpha), s = std::sin(alpha);
  return {{static_cast<float>(c), static_cast<float>(-s), static_cast<float>(t1),
           static_cast<float>(s), static_cast<float>(c), static_cast<float>(t2)}};
}

template <typename T>
BasicTensor<T> theta_tensor(std::span<const AffineTheta> thetas) {
  BasicTensor<T> t({static_cast<int>(std::max<std::size_t>(thetas.size(), 1)), 6});
  for (std::size_t r = 0; r < thetas.size(); ++r) {
    for (int k = 0; k < 6; ++k) t[r * 6 + k] = static_cast<T>(thetas[r].params[k]);
  }
  return t;
}

template <typename T>
BasicSampleGrid<T> affine_grid(const BasicTensor<T>& theta, Size2 out_size,
                               Size2 src_size) {
  require_rank(theta.shape(), 2, "affine_grid theta");
  if (theta.dim(1) != 6) throw DimensionError("affine_grid: theta must be [R,6]");
  if (out_size.h < 1 || out_size.w < 1 || src_size.h < 1 || src_size.w < 1) {
    throw DimensionError("affine_grid: sizes must be >= 1");
  }
  const int R = theta.dim(0);
  BasicSampleGrid<T> g;
  g.out_size = out_size;
  g.src_size = src_size;
  g.source_coords = BasicTensor<T>({R, out_size.h, out_size.w, 2});
  for (int r = 0; r < R; ++r) {
    double th[6];
    for (int k = 0; k < 6; ++k) th[k] = static_cast<double>(theta[r * 6 + k]);
    const PixelMap m = pixel_map(th, out_size, src_size);
    const T ax = static_cast<T>(m.ax), bx = static_cast<T>(m.bx), cx = static_cast<T>(m.cx);
    const T ay = static_cast<T>(m.ay), by = static_cast<T>(m.by), cy = static_cast<T>(m.cy);
    T* dst = g.source_coords.ptr() +
             static_cast<std::size_t>(r) * out_size.h * out_size.w * 2;
    for (int i = 0; i < out_size.h; ++i) {
      for (int j = 0; j < out_size.w; ++j) {
        const T tj = static_cast<T>(j), ti = static_cast<T>(i);
        *dst++ = ax * tj + bx * ti + cx;
        *dst++ = ay * tj + by * ti + cy;
      }
    }
  }
  return g;
}

SampleGrid affine_grid(std::span<const AffineTheta> thetas, Size2 out_size,
                       Size2 src_size) {
  if (thetas.empty()) throw DimensionError("affine_grid: no regions");
  return affine_grid(theta_tensor<float>(thetas), out_size, src_size);
}

template <typename T>
BasicTensor<T> bilinear_sample_forward(const BasicTensor<T>& U,
                                       const BasicSampleGrid<T>& grid) {
  check_grid(U, grid);
  const int R = U.dim(0), C = U.dim(1), H = U.dim(2), W = U.dim(3);
  const int Ho = grid.out_size.h, Wo = grid.out_size.w, P = Ho * Wo;
  BasicTensor<T> V({R, C, Ho, Wo});
  const T* up = U.ptr();
  const T* gp = grid.source_coords.ptr();
  T* vp = V.ptr();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < R; ++r) {
    for (int p = 0; p < P; ++p) {
      const T x = gp[(static_cast<std::size_t>(r) * P + p) * 2];
      const T y = gp[(static_cast<std::size_t>(r) * P + p) * 2 + 1];
      if (!(x > T(-1) && x < T(W) && y > T(-1) && y < T(H))) continue;
      const int x0 = static_cast<int>(std::floor(x));
      const int y0 = static_cast<int>(std::floor(y));
      for (int c = 0; c < C; ++c) {
        const T* uc = up + (static_cast<std::size_t>(r) * C + c) * H * W;
        T s = T(0);
        for (int h = y0; h <= y0 + 1; ++h) {
          if (h < 0 || h >= H) continue;
          const T ky = kernel_weight(y - static_cast<T>(h));
          for (int w = x0; w <= x0 + 1; ++w) {
            if (w < 0 || w >= W) continue;
            s += uc[h * W + w] * kernel_weight(x - static_cast<T>(w)) * ky;
          }
        }
        vp[(static_cast<std::size_t>(r) * C + c) * P + p] = s;
      }
    }
  }
  return V;
}

template <typename T>
SamplerGrads<T> bilinear_sample_backward(const BasicTensor<T>& grad_V,
                                         const BasicTensor<T>& U,
                                         const BasicSampleGrid<T>& grid) {
  check_grid(U, grid);
  const int R = U.dim(0), C = U.dim(1), H = U.dim(2), W = U.dim(3);
  const int Ho = grid.out_size.h, Wo = grid.out_size.w, P = Ho * Wo;
  if (grad_V.shape() != Shape{R, C, Ho, Wo}) {
    throw DimensionError("sampler backward: grad_V " + shape_str(grad_V.shape()));
  }
  SamplerGrads<T> g;
  g.grad_U = BasicTensor<T>(U.shape());
  g.grad_coords = BasicTensor<T>(grid.source_coords.shape());
  const T* up = U.ptr();
  const T* gvp = grad_V.ptr();
  const T* gp = grid.source_coords.ptr();
  T* gup = g.grad_U.ptr();
  T* gcp = g.grad_coords.ptr();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < R; ++r) {
    for (int p = 0; p < P; ++p) {
      const std::size_t ci = (static_cast<std::size_t>(r) * P + p) * 2;
      const T x = gp[ci];
      const T y = gp[ci + 1];
      if (!(x > T(-1) && x < T(W) && y > T(-1) && y < T(H))) continue;
      const int x0 = static_cast<int>(std::floor(x));
      const int y0 = static_cast<int>(std::floor(y));
      T gx = T(0), gy = T(0);
      for (int c = 0; c < C; ++c) {
        const std::size_t plane = (static_cast<std::size_t>(r) * C + c) * H * W;
        const T gv = gvp[(static_cast<std::size_t>(r) * C + c) * P + p];
        T dx = T(0), dy = T(0);
        for (int h = y0; h <= y0 + 1; ++h) {
          if (h < 0 || h >= H) continue;
          const T th = static_cast<T>(h);
          const T ky = kernel_weight(y - th);
          const T sy = kernel_slope(th, y);
          for (int w = x0; w <= x0 + 1; ++w) {
            if (w < 0 || w >= W) continue;
            const T tw = static_cast<T>(w);
            const T kx = kernel_weight(x - tw);
            const T u = up[plane + h * W + w];
            gup[plane + h * W + w] += gv * kx * ky;
            dx += u * ky * kernel_slope(tw, x);
            dy += u * kx * sy;
          }
        }
        gx += gv * dx;
        gy += gv * dy;
      }
      gcp[ci] = gx;
      gcp[ci + 1] = gy;
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> theta_backward(const BasicTensor<T>& grad_coords, Size2 out_size,
                              Size2 src_size) {
  require_rank(grad_coords.shape(), 4, "theta_backward grad_coords");
  if (grad_coords.dim(1) != out_size.h || grad_coords.dim(2) != out_size.w ||
      grad_coords.dim(3) != 2) {
    throw DimensionError("theta_backward: grad_coords " +
                         shape_str(grad_coords.shape()) + " vs out size");
  }
  const int R = grad_coords.dim(0);
  const double hx = (src_size.w - 1) / 2.0, hy = (src_size.h - 1) / 2.0;
  BasicTensor<T> gt({R, 6});
  for (int r = 0; r < R; ++r) {
    double acc[6] = {0, 0, 0, 0, 0, 0};
    const T* g = grad_coords.ptr() +
                 static_cast<std::size_t>(r) * out_size.h * out_size.w * 2;
    for (int i = 0; i < out_size.h; ++i) {
      const double yt = lattice(i, out_size.h);
      for (int j = 0; j < out_size.w; ++j) {
        const double xt = lattice(j, out_size.w);
        const double gx = static_cast<double>(*g++) * hx;
        const double gy = static_cast<double>(*g++) * hy;
        acc[0] += gx * xt;
        acc[1] += gx * yt;
        acc[2] += gx;
        acc[3] += gy * xt;
        acc[4] += gy * yt;
        acc[5] += gy;
      }
    }
    for (int k = 0; k < 6; ++k) gt[static_cast<std::size_t>(r) * 6 + k] = static_cast<T>(acc[k]);
  }
  return gt;
}

#define STNFACE_INSTANTIATE_STN(T)                                               \
  template BasicTensor<T> theta_tensor<T>(std::span<const AffineTheta>);         \
  template BasicSampleGrid<T> affine_grid(const BasicTensor<T>&, Size2, Size2);  \
  template BasicTensor<T> bilinear_sample_forward(const BasicTensor<T>&,         \
                                                  const BasicSampleGrid<T>&);    \
  template SamplerGrads<T> bilinear_sample_backward(                             \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicSampleGrid<T>&);  \
  template BasicTensor<T> theta_backward(const BasicTensor<T>&, Size2, Size2);

STNFACE_INSTANTIATE_STN(float)
STNFACE_INSTANTIATE_STN(double)

}  // namespace stnface
