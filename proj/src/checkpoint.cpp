/*
 * Copyright 2026 The circnet Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "circnet/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <map>

namespace circnet {
namespace {

constexpr char kMagic[4] = {'C', '1', 'C', 'K'};
const std::string kAdamPrefix = "adam/";

void put(std::vector<char>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

std::uint64_t get(const std::vector<char>& in, std::size_t& pos, int bytes) {
  if (in.size() - pos < std::size_t(bytes)) {
    throw CheckpointError("truncated checkpoint at byte " + std::to_string(pos));
  }
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= std::uint64_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += std::size_t(bytes);
  return v;
}

}  // namespace

std::vector<char> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::vector<char> out(kMagic, kMagic + 4);
  put(out, kCheckpointVersion, 4);
  put(out, tensors.size(), 4);
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw CheckpointError("tensor name too long");
    if (t.shape.size() > 0xff) throw CheckpointError("tensor rank too large");
    if (ag::shape_size(t.shape) != t.data.size()) {
      throw CheckpointError("tensor '" + t.name + "' shape does not match data");
    }
    put(out, t.name.size(), 2);
    out.insert(out.end(), t.name.begin(), t.name.end());
    put(out, t.shape.size(), 1);
    for (auto d : t.shape) {
      if (d > 0xffffffffULL) throw CheckpointError("tensor dimension too large");
      put(out, d, 4);
    }
    for (double v : t.data) put(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < 12 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = get(bytes, pos, 4);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get(bytes, pos, 4);
  std::vector<NamedTensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = get(bytes, pos, 2);
    if (bytes.size() - pos < len) throw CheckpointError("truncated tensor name");
    t.name.assign(bytes.begin() + pos, bytes.begin() + pos + len);
    pos += len;
    const auto rank = get(bytes, pos, 1);
    for (std::uint64_t r = 0; r < rank; ++r) t.shape.push_back(get(bytes, pos, 4));
    const std::size_t n = ag::shape_size(t.shape);
    if ((bytes.size() - pos) / 8 < n) {
      throw CheckpointError("truncated data for tensor '" + t.name + "'");
    }
    t.data.resize(n);
    for (auto& v : t.data) v = std::bit_cast<double>(get(bytes, pos, 8));
    out.push_back(std::move(t));
  }
  if (pos != bytes.size()) throw CheckpointError("trailing bytes after checkpoint");
  return out;
}

std::vector<NamedTensor> snapshot_state(const Model& model, const Adam* adam) {
  std::vector<NamedTensor> out;
  for (const auto& s : model.state()) {
    out.push_back({s.name, s.shape, {s.data.begin(), s.data.end()}});
  }
  if (adam) {
    out.push_back({kAdamPrefix + "step", {1}, {double(adam->step())}});
    out.push_back(
        {kAdamPrefix + "examples_seen", {1}, {double(adam->examples_seen())}});
    for (const auto& [name, m] : adam->moments()) {
      out.push_back({kAdamPrefix + "m1/" + name, {m.first.size()}, m.first});
      out.push_back({kAdamPrefix + "m2/" + name, {m.second.size()}, m.second});
    }
  }
  return out;
}

void restore_state(const std::vector<NamedTensor>& tensors, Model& model,
                   Adam* adam) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (const auto& s : model.state()) {
    const auto it = by_name.find(s.name);
    if (it == by_name.end()) {
      throw CheckpointError("checkpoint is missing tensor '" + s.name + "'");
    }
    if (it->second->shape != s.shape) {
      throw CheckpointError("tensor '" + s.name + "' has shape " +
                            ag::shape_string(it->second->shape) +
                            ", model expects " + ag::shape_string(s.shape));
    }
    std::copy(it->second->data.begin(), it->second->data.end(), s.data.begin());
  }
  if (!adam) return;
  auto scalar = [&](const std::string& name) -> std::uint64_t {
    const auto it = by_name.find(kAdamPrefix + name);
    if (it == by_name.end() || it->second->data.size() != 1) {
      throw CheckpointError("checkpoint has no optimizer state");
    }
    return std::uint64_t(it->second->data[0]);
  };
  const std::uint64_t step = scalar("step");
  const std::uint64_t seen = scalar("examples_seen");
  std::vector<std::pair<std::string, Adam::Moments>> moments;
  const std::string m1 = kAdamPrefix + "m1/";
  for (const auto& t : tensors) {
    if (t.name.rfind(m1, 0) != 0) continue;
    const std::string name = t.name.substr(m1.size());
    const auto second = by_name.find(kAdamPrefix + "m2/" + name);
    if (second == by_name.end()) {
      throw CheckpointError("optimizer moment pair incomplete for '" + name + "'");
    }
    moments.push_back({name, Adam::Moments{t.data, second->second->data}});
  }
  adam->restore(step, seen, std::move(moments));
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Adam* adam) {
  write_file(path, encode_checkpoint(snapshot_state(model, adam)));
}

void load_checkpoint(const std::filesystem::path& path, Model& model, Adam* adam) {
  restore_state(decode_checkpoint(read_file(path)), model, adam);
}

}  // namespace circnet
