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

// Checkpoint layout (little-endian):
//   "C1CK" | u32 version | u32 tensor count
//   per tensor: u16 name length | name | u8 rank | u32 dims[rank] | f64 data
//
// Optimizer state travels as ordinary tensors under the "adam/" prefix.

#ifndef CIRCNET_CHECKPOINT_HPP_
#define CIRCNET_CHECKPOINT_HPP_

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "circnet/model.hpp"
#include "circnet/optimizer.hpp"

namespace circnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  ag::Shape shape;
  std::vector<double> data;

  bool operator==(const NamedTensor&) const = default;
};

std::vector<char> encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::vector<char>& bytes);

std::vector<NamedTensor> snapshot_state(const Model& model, const Adam* adam);
// Every model state entry must be present with a matching shape; optimizer
// tensors are restored when `adam` is given.
void restore_state(const std::vector<NamedTensor>& tensors, Model& model,
                   Adam* adam);

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Adam* adam);
void load_checkpoint(const std::filesystem::path& path, Model& model, Adam* adam);

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace circnet

#endif  // CIRCNET_CHECKPOINT_HPP_
