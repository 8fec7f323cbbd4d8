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

#include "stnface/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace stnface {

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string token(std::istream& is) {
  std::string t;
  for (;;) {
    int c = is.get();
    if (c == EOF) break;
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
      continue;
    }
    if (std::isspace(c)) {
      if (!t.empty()) break;
      continue;
    }
    t.push_back(static_cast<char>(c));
  }
  return t;
}

int header_int(std::istream& is, const std::string& what, const std::filesystem::path& path) {
  const std::string t = token(is);
  try {
    std::size_t used = 0;
    const int v = std::stoi(t, &used);
    if (used != t.size() || v < 1) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw InputError(path.string() + ": bad " + what + " '" + t + "'");
  }
}

}  // namespace

Tensor read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot read image " + path.string());
  const std::string magic = token(is);
  if (magic != "P6" && magic != "P5") {
    throw InputError(path.string() + ": only binary PPM (P6) and PGM (P5) are supported");
  }
  const int w = header_int(is, "width", path);
  const int h = header_int(is, "height", path);
  const int maxval = header_int(is, "maxval", path);
  if (maxval > 255) throw InputError(path.string() + ": 16-bit images are not supported");
  const int ch = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * ch);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw InputError(path.string() + ": truncated pixel data");
  }
  Tensor img({3, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) {
      const unsigned char b = buf[p * ch + (ch == 3 ? c : 0)];
      img[c * plane + p] = static_cast<float>(b) / static_cast<float>(maxval);
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  const int r = image.rank();
  if (!((r == 3 && image.dim(0) == 3) || (r == 4 && image.dim(0) == 1 && image.dim(1) == 3))) {
    throw DimensionError("write_ppm expects [3,H,W] or [1,3,H,W], got " + shape_str(image.shape()));
  }
  const int h = image.dim(r - 2), w = image.dim(r - 1);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<unsigned char> buf(plane * 3);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(image[c * plane + p], 0.0f, 1.0f);
      buf[p * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write image " + path.string());
  os << "P6\n" << w << ' ' << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw InputError("write failed: " + path.string());
}

}  // namespace stnface
