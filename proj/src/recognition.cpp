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

#include "stnface/recognition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "stnface/binary_io.hpp"

namespace stnface {

void check_share_depth(int share_depth) {
  if (share_depth < 0 || share_depth > kBackboneBlocks) {
    throw ConfigError("model.share_depth",
                      "must be in 0..4, got " + std::to_string(share_depth));
  }
}

template <typename T>
LossResult<T> center_loss(const BasicTensor<T>& embeddings, std::span<const int> labels,
                          const CenterBank& bank, double lambda) {
  require_rank(embeddings.shape(), 2, "center_loss embeddings");
  const int n = embeddings.dim(0), d = embeddings.dim(1);
  if (static_cast<int>(labels.size()) != n) {
    throw DimensionError("center_loss: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " embeddings");
  }
  if (bank.dim() != d) {
    throw DimensionError("center_loss: embedding dim " + std::to_string(d) +
                         " vs center dim " + std::to_string(bank.dim()));
  }
  LossResult<T> res;
  res.grad = BasicTensor<T>(embeddings.shape());
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= bank.size()) {
      throw IndexError("center_loss: label " + std::to_string(y) + " has no center");
    }
    for (int j = 0; j < d; ++j) {
      const double r = static_cast<double>(embeddings.at(i, j)) - bank.centers.at(y, j);
      sum += r * r;
      res.grad.at(i, j) = static_cast<T>(lambda * r / n);
    }
  }
  res.loss = static_cast<T>(0.5 * lambda * sum / n);
  return res;
}

template LossResult<float> center_loss(const Tensor&, std::span<const int>, const CenterBank&,
                                       double);
template LossResult<double> center_loss(const TensorD&, std::span<const int>,
                                        const CenterBank&, double);

void update_centers(CenterBank& bank, const Tensor& embeddings, std::span<const int> labels,
                    double alpha) {
  const int n = embeddings.dim(0), d = embeddings.dim(1);
  std::vector<int> count(static_cast<std::size_t>(bank.size()), 0);
  std::vector<double> delta(static_cast<std::size_t>(bank.size()) * d, 0.0);
  for (int i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= bank.size()) {
      throw IndexError("update_centers: label " + std::to_string(y) + " has no center");
    }
    ++count[y];
    for (int j = 0; j < d; ++j) {
      delta[static_cast<std::size_t>(y) * d + j] +=
          static_cast<double>(bank.centers.at(y, j)) - embeddings.at(i, j);
    }
  }
  for (int y = 0; y < bank.size(); ++y) {
    if (count[y] == 0) continue;
    for (int j = 0; j < d; ++j) {
      const double dc = delta[static_cast<std::size_t>(y) * d + j] / (1.0 + count[y]);
      bank.centers.at(y, j) = static_cast<float>(bank.centers.at(y, j) - alpha * dc);
    }
  }
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw InputError("cosine similarity of vectors with dims " + std::to_string(a.size()) +
                     " and " + std::to_string(b.size()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) throw InputError("cosine similarity of a zero vector");
  // sqrt(na * na) == na exactly, so a vector's similarity with itself is 1.
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

Verdict verify(const Embedding& a, const Embedding& b, double threshold) {
  const double s = cosine_similarity(a.vector, b.vector);
  return {s >= threshold, s};
}

double pair_accuracy(std::span<const ScoredPair> pairs, double threshold) {
  if (pairs.empty()) throw InputError("no verification pairs");
  std::size_t correct = 0;
  for (const auto& p : pairs) correct += ((p.similarity >= threshold) == p.same);
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

ThresholdChoice find_best_threshold(std::span<const ScoredPair> pairs) {
  if (pairs.empty()) throw InputError("no verification pairs");
  std::vector<ScoredPair> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredPair& a, const ScoredPair& b) { return a.similarity < b.similarity; });
  const std::size_t n = sorted.size();
  std::size_t total_same = 0;
  for (const auto& p : sorted) total_same += p.same;

  // Sweep thresholds upward. At threshold sorted[i].similarity every pair
  // from index i on is accepted.
  std::size_t same_below = 0, diff_below = 0;
  ThresholdChoice best{sorted[0].similarity, -1.0};
  for (std::size_t i = 0; i < n;) {
    const double t = sorted[i].similarity;
    const std::size_t correct = diff_below + (total_same - same_below);
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    if (acc > best.accuracy) best = {t, acc};
    for (; i < n && sorted[i].similarity == t; ++i) {
      (sorted[i].same ? same_below : diff_below) += 1;
    }
  }
  const double acc = static_cast<double>(diff_below) / static_cast<double>(n);
  if (acc > best.accuracy) {
    best = {std::nextafter(sorted.back().similarity, std::numeric_limits<double>::infinity()),
            acc};
  }
  return best;
}

namespace {
constexpr char kEmbMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint32_t kNoLabel = 0xFFFFFFFFu;
}  // namespace

void write_embeddings(const std::filesystem::path& path, std::span<const Embedding> embs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os.write(kEmbMagic, 4);
  for (const auto& e : embs) {
    bin::put_le<std::uint32_t>(os, e.label ? static_cast<std::uint32_t>(*e.label) : kNoLabel);
    bin::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.vector.size()));
    for (float v : e.vector) bin::put_f32(os, v);
  }
  if (!os) throw InputError("write failed: " + path.string());
}

std::vector<Embedding> read_embeddings(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot read " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kEmbMagic)) {
    throw InputError(path.string() + ": not an embedding file");
  }
  std::vector<Embedding> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    Embedding e;
    const auto label = bin::get_le<std::uint32_t>(is);
    if (label != kNoLabel) e.label = static_cast<int>(label);
    const auto d = bin::get_le<std::uint32_t>(is);
    e.vector.resize(d);
    for (auto& v : e.vector) v = bin::get_f32(is);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace stnface
