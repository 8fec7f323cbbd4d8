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

#include "stnface/roi_pool.hpp"

#include <algorithm>
#include <cmath>

namespace stnface {

CellRange roi_footprint(const BBox& box, double spatial_scale, int feat_h,
                        int feat_w) {
  auto axis = [](double lo, double hi, double scale, int n, int& a, int& b) {
    a = static_cast<int>(std::floor(lo * scale));
    b = static_cast<int>(std::ceil(hi * scale));
    a = std::clamp(a, 0, n - 1);
    b = std::clamp(b, a + 1, n);
  };
  CellRange r{};
  axis(box.x1, box.x2, spatial_scale, feat_w, r.x0, r.x1);
  axis(box.y1, box.y2, spatial_scale, feat_h, r.y0, r.y1);
  return r;
}

template <typename T>
RoiPoolResult<T> roi_pool_forward(const BasicTensor<T>& feat,
                                  std::span<const BBox> boxes,
                                  double spatial_scale, Size2 out) {
  require_rank(feat.shape(), 4, "roi_pool features");
  if (feat.dim(0) != 1) throw DimensionError("roi_pool expects a single image");
  if (boxes.empty()) throw InputError("roi_pool: no boxes");
  const int C = feat.dim(1), H = feat.dim(2), W = feat.dim(3);
  const int R = static_cast<int>(boxes.size());
  RoiPoolResult<T> res;
  res.output = BasicTensor<T>({R, C, out.h, out.w});
  res.argmax.assign(res.output.numel(), -1);
  const T* fp = feat.ptr();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < R; ++r) {
    const CellRange cr = roi_footprint(boxes[r], spatial_scale, H, W);
    const int nh = cr.y1 - cr.y0, nw = cr.x1 - cr.x0;
    for (int c = 0; c < C; ++c) {
      const std::size_t plane = static_cast<std::size_t>(c) * H * W;
      for (int i = 0; i < out.h; ++i) {
        const int hs = cr.y0 + (i * nh) / out.h;
        const int he = cr.y0 + ((i + 1) * nh + out.h - 1) / out.h;
        for (int j = 0; j < out.w; ++j) {
          const int ws = cr.x0 + (j * nw) / out.w;
          const int we = cr.x0 + ((j + 1) * nw + out.w - 1) / out.w;
          std::int64_t best = -1;
          for (int h = hs; h < he; ++h) {
            for (int w = ws; w < we; ++w) {
              const std::int64_t idx = static_cast<std::int64_t>(plane) + h * W + w;
              if (best < 0 || fp[idx] > fp[best]) best = idx;
            }
          }
          const std::size_t o = ((static_cast<std::size_t>(r) * C + c) * out.h + i) * out.w + j;
          res.argmax[o] = best;
          res.output[o] = best >= 0 ? fp[best] : T(0);
        }
      }
    }
  }
  return res;
}

template <typename T>
BasicTensor<T> roi_pool_backward(const BasicTensor<T>& grad_out,
                                 std::span<const std::int64_t> argmax,
                                 const Shape& feat_shape) {
  if (argmax.size() != grad_out.numel()) {
    throw DimensionError("roi_pool backward: argmax/grad_out size mismatch");
  }
  BasicTensor<T> g(feat_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    if (argmax[o] >= 0) g[static_cast<std::size_t>(argmax[o])] += grad_out[o];
  }
  return g;
}

template RoiPoolResult<float> roi_pool_forward(const Tensor&, std::span<const BBox>,
                                               double, Size2);
template RoiPoolResult<double> roi_pool_forward(const TensorD&,
                                                std::span<const BBox>, double, Size2);
template Tensor roi_pool_backward(const Tensor&, std::span<const std::int64_t>,
                                  const Shape&);
template TensorD roi_pool_backward(const TensorD&, std::span<const std::int64_t>,
                                   const Shape&);

}  // namespace stnface
