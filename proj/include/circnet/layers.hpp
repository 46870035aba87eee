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

// Trainable building blocks. A batch of videos is passed as one frame matrix
// [R, k] plus offsets (B+1 entries) marking where each video's frames start.

#ifndef CIRCNET_LAYERS_HPP_
#define CIRCNET_LAYERS_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "circnet/autograd.hpp"
#include "circnet/optimizer.hpp"
#include "circnet/structured.hpp"

namespace circnet {

// Everything a checkpoint needs: trainable tensors, frozen tensors (fixed
// sign diagonals) and batch-norm running statistics.
struct StateEntry {
  std::string name;
  ag::Shape shape;
  std::span<double> data;
  bool frozen = false;  // stored but never updated (fixed-sign diagonals)
};

struct Registry {
  std::vector<NamedParameter> trainable;
  std::vector<StateEntry> state;

  void add_tensor(const std::string& name, ag::Tensor& t, bool train);
  void add_buffer(const std::string& name, std::vector<double>& v);
};

// Linear map x -> x W (+ b) where W is dense or a stack of DC chains.
class Linear {
 public:
  Linear() = default;
  explicit Linear(const StructuredLinear& init);
  Linear(const LinearSpec& spec, std::mt19937_64& rng)
      : Linear(StructuredLinear::random(spec, rng)) {}

  const LinearSpec& spec() const { return spec_; }
  // Ignores spec.activation; callers apply their own nonlinearity.
  ag::Tensor forward(ag::Tape& tape, const ag::Tensor& x) const;
  StructuredLinear export_numeric() const;
  void collect(const std::string& prefix, Registry& reg);

 private:
  LinearSpec spec_;
  ag::Tensor dense_;
  // chains_[chain][factor] = (diagonal, circulant)
  std::vector<std::vector<std::pair<ag::Tensor, ag::Tensor>>> chains_;
  ag::Tensor bias_;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t features);
  ag::Tensor forward(ag::Tape& tape, const ag::Tensor& x, bool training);
  void collect(const std::string& prefix, Registry& reg);
  std::size_t features() const { return state_.running_mean.size(); }

 private:
  ag::Tensor gamma_;
  ag::Tensor beta_;
  ag::BatchNormState state_;
};

enum class Pooling { kMax, kAverage, kRobust };
std::string to_string(Pooling p);
Pooling parse_pooling(const std::string& text);

// Mixes (id, epoch, salt) into one RNG seed.
std::uint64_t sampling_key(std::uint64_t id, std::uint64_t epoch,
                           std::uint64_t salt);

struct RobustOptions {
  std::size_t samples = 10;      // n_s
  std::size_t sample_size = 15;  // k_s
  // Every subset is the whole set; reduces to max pooling.
  bool exhaustive = false;
};

// Mean over n_s subsets of the per-subset max. Each video's rows are put in
// lexicographic order before sampling with replacement, so the result only
// depends on the set of rows and keys[b].
ag::Tensor robust_pool(ag::Tape& tape, const ag::Tensor& projected,
                       std::span<const std::size_t> offsets,
                       std::span<const std::uint64_t> keys,
                       const RobustOptions& options);

struct DBoFConfig {
  std::size_t feature_dim = 0;
  std::size_t cluster_size = 0;
  Pooling pooling = Pooling::kMax;
  RobustOptions robust;
  bool structured = false;
  std::size_t factors = 1;
  DiagMode diag = DiagMode::kLearned;
};

class DBoF {
 public:
  DBoF() = default;
  DBoF(const DBoFConfig& cfg, std::mt19937_64& rng);
  const DBoFConfig& config() const { return cfg_; }
  Linear& projection() { return projection_; }
  ag::Tensor forward(ag::Tape& tape, const ag::Tensor& frames,
                     std::span<const std::size_t> offsets,
                     std::span<const std::uint64_t> keys, bool training);
  void collect(const std::string& prefix, Registry& reg);

 private:
  DBoFConfig cfg_;
  Linear projection_;
  BatchNorm bn_;
};

struct ClusterConfig {
  std::size_t feature_dim = 0;
  std::size_t clusters = 0;
};

// Soft-assignment residual aggregation with intra then global L2 norm.
class NetVLAD {
 public:
  NetVLAD() = default;
  NetVLAD(const ClusterConfig& cfg, std::mt19937_64& rng);
  std::size_t output_dim() const { return cfg_.clusters * cfg_.feature_dim; }
  ag::Tensor forward(ag::Tape& tape, const ag::Tensor& frames,
                     std::span<const std::size_t> offsets, bool training);
  void collect(const std::string& prefix, Registry& reg);
  ag::Tensor& assignment() { return assign_w_; }
  ag::Tensor& centers() { return centers_; }

 private:
  ClusterConfig cfg_;
  ag::Tensor assign_w_;  // [k, K]
  BatchNorm bn_;
  ag::Tensor centers_;   // [K, k]
};

// NetVLAD first-order block followed by the second-order block.
class NetFV {
 public:
  NetFV() = default;
  NetFV(const ClusterConfig& cfg, std::mt19937_64& rng);
  std::size_t output_dim() const { return 2 * cfg_.clusters * cfg_.feature_dim; }
  ag::Tensor forward(ag::Tape& tape, const ag::Tensor& frames,
                     std::span<const std::size_t> offsets, bool training);
  void collect(const std::string& prefix, Registry& reg);
  ag::Tensor& assignment() { return assign_w_; }
  ag::Tensor& centers() { return centers_; }
  ag::Tensor& sigma() { return sigma_; }

 private:
  ClusterConfig cfg_;
  ag::Tensor assign_w_;
  BatchNorm bn_;
  ag::Tensor centers_;
  ag::Tensor sigma_;
};

struct DenseBlockConfig {
  bool structured = false;
  std::size_t factors = 1;
  DiagMode diag = DiagMode::kLearned;
};

// Linear (no bias) -> batch norm -> relu.
class FullyConnected {
 public:
  FullyConnected() = default;
  FullyConnected(std::size_t in, std::size_t out, const DenseBlockConfig& cfg,
                 std::mt19937_64& rng);
  ag::Tensor forward(ag::Tape& tape, const ag::Tensor& x, bool training);
  void collect(const std::string& prefix, Registry& reg);
  Linear& linear() { return linear_; }

 private:
  Linear linear_;
  BatchNorm bn_;
};

// Per label: p = sum_e softmax(gate)_e sigmoid(expert_e), where the gate has
// one extra dummy option (the last column) that contributes nothing.
class MixtureOfExperts {
 public:
  MixtureOfExperts() = default;
  MixtureOfExperts(std::size_t input_dim, std::size_t labels,
                   std::size_t mixtures, const DenseBlockConfig& cfg,
                   std::mt19937_64& rng);
  ag::Tensor forward(ag::Tape& tape, const ag::Tensor& x) const;
  void collect(const std::string& prefix, Registry& reg);
  Linear& gating() { return gating_; }
  Linear& experts() { return experts_; }

 private:
  std::size_t labels_ = 0;
  std::size_t mixtures_ = 0;
  Linear gating_;   // in -> labels * (mixtures + 1), no bias
  Linear experts_;  // in -> labels * mixtures, with bias
};

// y = sigmoid(gate(x)) * x. With batch_norm the gate is BN(x W); without it
// the gate is x W + b.
class ContextGating {
 public:
  ContextGating() = default;
  ContextGating(std::size_t dim, bool batch_norm, const DenseBlockConfig& cfg,
                std::mt19937_64& rng);
  ag::Tensor forward(ag::Tape& tape, const ag::Tensor& x, bool training);
  void collect(const std::string& prefix, Registry& reg);
  Linear& linear() { return linear_; }

 private:
  Linear linear_;
  bool use_bn_ = true;
  BatchNorm bn_;
};

}  // namespace circnet

#endif  // CIRCNET_LAYERS_HPP_
