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

#include "stnface/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <set>

#include "stnface/binary_io.hpp"
#include "stnface/model.hpp"
#include "stnface/training.hpp"

namespace stnface {

namespace {
constexpr char kMagic[8] = {'S', 'T', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr const char* kIterName = "meta.iter";
constexpr const char* kCentersName = "recog.centers";

std::string read_name(std::istream& is) {
  const auto len = bin::get_le<std::uint16_t>(is);
  std::string name(len, '\0');
  if (!is.read(name.data(), len)) throw InputError("truncated checkpoint name");
  return name;
}
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw InputError("cannot write " + tmp);
    os.write(kMagic, 8);
    for (const auto& [name, t] : ckpt.tensors) {
      bin::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      bin::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
      for (int d : t.shape()) bin::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
      for (float v : t.data()) bin::put_f32(os, v);
    }
    const std::string footer = kIterName;
    bin::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(footer.size()));
    os.write(footer.data(), static_cast<std::streamsize>(footer.size()));
    bin::put_le<std::uint64_t>(os, ckpt.iter);
    if (!os) throw InputError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot read checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) {
    throw InputError(path.string() + ": not a checkpoint file");
  }
  Checkpoint ckpt;
  for (;;) {
    const std::string name = read_name(is);
    if (name == kIterName) {
      ckpt.iter = bin::get_le<std::uint64_t>(is);
      break;
    }
    const int rank = bin::get_le<std::uint8_t>(is);
    if (rank < 1) throw InputError("checkpoint tensor " + name + " has rank 0");
    Shape shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) d = static_cast<int>(bin::get_le<std::uint32_t>(is));
    Tensor t(shape);
    for (float& v : t.data()) v = bin::get_f32(is);
    ckpt.tensors.emplace_back(name, std::move(t));
  }
  return ckpt;
}

Checkpoint capture_checkpoint(FaceModel& model, const OptimizerState& opt) {
  Checkpoint c;
  for (auto* p : model.params()) {
    Tensor v = p->value;
    v.drop_grad();
    c.tensors.emplace_back(p->name, std::move(v));
  }
  c.tensors.emplace_back(kCentersName, model.centers().centers);
  for (auto* p : model.params()) {
    auto it = opt.velocity.find(p->name);
    c.tensors.emplace_back(p->name + ".momentum",
                           it != opt.velocity.end() ? it->second : Tensor(p->value.shape()));
  }
  c.iter = opt.iter;
  return c;
}

void restore_checkpoint(const Checkpoint& ckpt, FaceModel& model, OptimizerState& opt) {
  std::set<std::string> used;
  auto take = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    const Tensor* t = ckpt.find(name);
    if (!t) throw StateMismatch("checkpoint lacks " + name);
    if (t->shape() != shape) {
      throw StateMismatch(name + ": checkpoint shape " + shape_str(t->shape()) +
                          ", model shape " + shape_str(shape));
    }
    used.insert(name);
    return *t;
  };
  // Validate everything before mutating the model.
  for (auto* p : model.params()) {
    take(p->name, p->value.shape());
    take(p->name + ".momentum", p->value.shape());
  }
  take(kCentersName, model.centers().centers.shape());
  for (const auto& [name, t] : ckpt.tensors) {
    if (!used.count(name)) throw StateMismatch("checkpoint has unknown tensor " + name);
  }
  opt.velocity.clear();
  for (auto* p : model.params()) {
    p->value = *ckpt.find(p->name);
    opt.velocity[p->name] = *ckpt.find(p->name + ".momentum");
  }
  model.centers().centers = *ckpt.find(kCentersName);
  opt.iter = ckpt.iter;
}

std::uint64_t parameter_hash(FaceModel& model) {
  std::uint64_t h = 1469598103934665603ull;
  auto feed = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (auto* p : model.params()) {
    feed(p->name.data(), p->name.size());
    for (int d : p->value.shape()) feed(&d, sizeof d);
    for (float v : p->value.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      feed(&bits, sizeof bits);
    }
  }
  return h;
}

}  // namespace stnface
