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

// Video classifiers assembled from the layers:
//
//   base:      per modality  embedding -> FC, concat -> MoE -> context gating
//   diversity: per modality  [embedding -> FC]*, averaged, then as above

#ifndef CIRCNET_MODEL_HPP_
#define CIRCNET_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "circnet/config.hpp"
#include "circnet/dataset.hpp"
#include "circnet/layers.hpp"

namespace circnet {

enum class Topology { kBase, kDiversity };
enum class EmbeddingKind { kDBoF, kNetVLAD, kNetFV };

std::string to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding(const std::string& text);

struct ModalityConfig {
  bool enabled = true;
  std::size_t feature_dim = 0;
  std::vector<EmbeddingKind> embeddings{EmbeddingKind::kDBoF};
  DBoFConfig dbof;  // feature_dim is taken from the modality
  std::size_t netvlad_clusters = 64;
  std::size_t netfv_clusters = 64;
  std::size_t fc_width = 512;
  DenseBlockConfig fc;
};

struct ModelConfig {
  Topology topology = Topology::kBase;
  std::size_t num_labels = 0;
  std::size_t frames_sampled = 0;  // 0 keeps every frame
  ModalityConfig video;
  ModalityConfig audio;
  std::size_t mixtures = 2;
  DenseBlockConfig moe;
  bool context_gating = true;
  bool context_gating_bn = true;
  DenseBlockConfig context;

  void validate() const;
  std::size_t classifier_input() const;
  std::size_t embedding_dim(const ModalityConfig& m, EmbeddingKind kind) const;
};

// Reads `model.*` keys.
ModelConfig model_config_from(const Config& cfg);

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }

  // Returns [videos, labels] probabilities. Training mode uses batch
  // statistics and samples robust-pooling subsets keyed by (id, epoch).
  ag::Tensor forward(ag::Tape& tape, const Batch& batch, bool training);

  std::vector<NamedParameter>& parameters() { return registry_.trainable; }
  const std::vector<StateEntry>& state() const { return registry_.state; }
  // Stored values: every state entry except frozen tensors, which matches
  // the reporting convention (weights + biases + 4 per batch-norm feature).
  std::size_t stored_parameter_count() const;

  // Access for tests and transfer experiments.
  struct Branch {
    EmbeddingKind kind;
    DBoF dbof;
    NetVLAD netvlad;
    NetFV netfv;
    FullyConnected fc;
  };
  std::vector<Branch>& branches(bool audio) { return audio ? audio_ : video_; }
  MixtureOfExperts& moe() { return moe_; }
  ContextGating& context_gating() { return gating_; }

 private:
  ag::Tensor modality_forward(ag::Tape& tape, std::vector<Branch>& branches,
                              const Matrix& frames, const Batch& batch,
                              bool training, std::uint64_t salt);

  ModelConfig cfg_;
  std::vector<Branch> video_;
  std::vector<Branch> audio_;
  MixtureOfExperts moe_;
  ContextGating gating_;
  Registry registry_;
};

}  // namespace circnet

#endif  // CIRCNET_MODEL_HPP_
