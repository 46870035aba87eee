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

#include "circnet/model.hpp"

namespace circnet {

std::string to_string(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::kDBoF: return "dbof";
    case EmbeddingKind::kNetVLAD: return "netvlad";
    case EmbeddingKind::kNetFV: return "netfv";
  }
  return "?";
}

EmbeddingKind parse_embedding(const std::string& text) {
  if (text == "dbof") return EmbeddingKind::kDBoF;
  if (text == "netvlad") return EmbeddingKind::kNetVLAD;
  if (text == "netfv") return EmbeddingKind::kNetFV;
  throw ConfigError("unknown embedding '" + text + "'");
}

std::size_t ModelConfig::embedding_dim(const ModalityConfig& m,
                                       EmbeddingKind kind) const {
  switch (kind) {
    case EmbeddingKind::kDBoF: return m.dbof.cluster_size;
    case EmbeddingKind::kNetVLAD: return m.netvlad_clusters * m.feature_dim;
    case EmbeddingKind::kNetFV: return 2 * m.netfv_clusters * m.feature_dim;
  }
  return 0;
}

std::size_t ModelConfig::classifier_input() const {
  std::size_t total = 0;
  if (video.enabled) total += video.fc_width;
  if (audio.enabled) total += audio.fc_width;
  return total;
}

void ModelConfig::validate() const {
  if (num_labels == 0) throw ConfigError("model.num_labels must be >= 1");
  if (mixtures == 0) throw ConfigError("model.mixtures must be >= 1");
  if (!video.enabled && !audio.enabled) {
    throw ConfigError("at least one modality must be enabled");
  }
  for (const ModalityConfig* m : {&video, &audio}) {
    if (!m->enabled) continue;
    const std::string name = m == &video ? "video" : "audio";
    if (m->feature_dim == 0) throw ConfigError(name + " feature_dim must be >= 1");
    if (m->fc_width == 0) throw ConfigError(name + " fc width must be >= 1");
    if (m->embeddings.empty()) throw ConfigError(name + " has no embedding");
    if (topology == Topology::kBase && m->embeddings.size() != 1) {
      throw ConfigError("base topology takes exactly one embedding per modality");
    }
    for (auto kind : m->embeddings) {
      if (embedding_dim(*m, kind) == 0) {
        throw ConfigError(name + " " + to_string(kind) + " has zero width");
      }
      if (kind == EmbeddingKind::kDBoF && m->dbof.pooling == Pooling::kRobust &&
          (m->dbof.robust.samples == 0 || m->dbof.robust.sample_size == 0)) {
        throw ConfigError(name + " robust pooling needs samples and sample_size");
      }
    }
  }
}

namespace {

DenseBlockConfig block_from(const Config& cfg, const std::string& prefix) {
  DenseBlockConfig b;
  b.structured = cfg.get_bool(prefix + ".structured", false);
  b.factors = cfg.get_size(prefix + ".factors", 1);
  b.diag = parse_diag_mode(cfg.get_string(prefix + ".diag", "learned"));
  return b;
}

ModalityConfig modality_from(const Config& cfg, const std::string& prefix,
                             const ModalityConfig& defaults) {
  ModalityConfig m = defaults;
  m.enabled = cfg.get_bool(prefix + ".enabled", defaults.enabled);
  m.feature_dim = cfg.get_size(prefix + ".feature_dim", defaults.feature_dim);
  m.embeddings.clear();
  for (const auto& name : cfg.get_list(prefix + ".embeddings", {"dbof"})) {
    m.embeddings.push_back(parse_embedding(name));
  }
  m.dbof.feature_dim = m.feature_dim;
  m.dbof.cluster_size =
      cfg.get_size(prefix + ".dbof.cluster_size", defaults.dbof.cluster_size);
  m.dbof.pooling = parse_pooling(cfg.get_string(prefix + ".dbof.pooling", "max"));
  m.dbof.robust.samples = cfg.get_size(prefix + ".dbof.robust_samples", 10);
  m.dbof.robust.sample_size = cfg.get_size(prefix + ".dbof.robust_sample_size", 15);
  const DenseBlockConfig proj = block_from(cfg, prefix + ".dbof");
  m.dbof.structured = proj.structured;
  m.dbof.factors = proj.factors;
  m.dbof.diag = proj.diag;
  m.netvlad_clusters = cfg.get_size(prefix + ".netvlad.clusters", defaults.netvlad_clusters);
  m.netfv_clusters = cfg.get_size(prefix + ".netfv.clusters", defaults.netfv_clusters);
  m.fc_width = cfg.get_size(prefix + ".fc.width", defaults.fc_width);
  m.fc = block_from(cfg, prefix + ".fc");
  return m;
}

}  // namespace

ModelConfig model_config_from(const Config& cfg) {
  ModelConfig m;
  const std::string topology = cfg.get_string("model.topology", "base");
  if (topology == "base") {
    m.topology = Topology::kBase;
  } else if (topology == "diversity") {
    m.topology = Topology::kDiversity;
  } else {
    throw ConfigError("unknown model.topology '" + topology + "'");
  }
  m.num_labels = cfg.get_size("model.num_labels", 64);
  m.frames_sampled = cfg.get_size("model.frames_sampled", 32);

  ModalityConfig video;
  video.feature_dim = 16;
  video.dbof.cluster_size = 128;
  video.fc_width = 32;
  video.netvlad_clusters = video.netfv_clusters = 8;
  ModalityConfig audio;
  audio.feature_dim = 4;
  audio.dbof.cluster_size = 64;
  audio.fc_width = 32;
  audio.netvlad_clusters = audio.netfv_clusters = 4;
  m.video = modality_from(cfg, "model.video", video);
  m.audio = modality_from(cfg, "model.audio", audio);

  m.mixtures = cfg.get_size("model.moe.mixtures", 2);
  m.moe = block_from(cfg, "model.moe");
  m.context_gating = cfg.get_bool("model.context_gating.enabled", true);
  m.context_gating_bn = cfg.get_bool("model.context_gating.batch_norm", true);
  m.context = block_from(cfg, "model.context_gating");
  m.validate();
  return m;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  auto build = [&](const ModalityConfig& m, std::vector<Branch>& out) {
    if (!m.enabled) return;
    out.reserve(m.embeddings.size());
    for (auto kind : m.embeddings) {
      Branch b;
      b.kind = kind;
      switch (kind) {
        case EmbeddingKind::kDBoF: {
          DBoFConfig d = m.dbof;
          d.feature_dim = m.feature_dim;
          b.dbof = DBoF(d, rng);
          break;
        }
        case EmbeddingKind::kNetVLAD:
          b.netvlad = NetVLAD({m.feature_dim, m.netvlad_clusters}, rng);
          break;
        case EmbeddingKind::kNetFV:
          b.netfv = NetFV({m.feature_dim, m.netfv_clusters}, rng);
          break;
      }
      b.fc = FullyConnected(cfg_.embedding_dim(m, kind), m.fc_width, m.fc, rng);
      out.push_back(std::move(b));
    }
  };
  build(cfg_.video, video_);
  build(cfg_.audio, audio_);
  moe_ = MixtureOfExperts(cfg_.classifier_input(), cfg_.num_labels, cfg_.mixtures,
                          cfg_.moe, rng);
  if (cfg_.context_gating) {
    gating_ = ContextGating(cfg_.num_labels, cfg_.context_gating_bn, cfg_.context,
                            rng);
  }

  auto collect = [&](std::vector<Branch>& branches, const std::string& modality) {
    for (std::size_t i = 0; i < branches.size(); ++i) {
      auto& b = branches[i];
      const std::string prefix =
          modality + "." + to_string(b.kind) + std::to_string(i);
      switch (b.kind) {
        case EmbeddingKind::kDBoF: b.dbof.collect(prefix, registry_); break;
        case EmbeddingKind::kNetVLAD: b.netvlad.collect(prefix, registry_); break;
        case EmbeddingKind::kNetFV: b.netfv.collect(prefix, registry_); break;
      }
      b.fc.collect(prefix + ".fc", registry_);
    }
  };
  collect(video_, "video");
  collect(audio_, "audio");
  moe_.collect("moe", registry_);
  if (cfg_.context_gating) gating_.collect("context", registry_);
}

std::size_t Model::stored_parameter_count() const {
  std::size_t total = 0;
  for (const auto& s : registry_.state) {
    if (!s.frozen) total += s.data.size();
  }
  return total;
}

ag::Tensor Model::modality_forward(ag::Tape& tape, std::vector<Branch>& branches,
                                   const Matrix& frames, const Batch& batch,
                                   bool training, std::uint64_t salt) {
  const ag::Tensor x = ag::Tensor::constant({frames.rows, frames.cols}, frames.data);
  std::vector<ag::Tensor> outs;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    auto& b = branches[i];
    ag::Tensor emb;
    switch (b.kind) {
      case EmbeddingKind::kDBoF: {
        std::vector<std::uint64_t> keys;
        keys.reserve(batch.size());
        for (auto id : batch.ids) {
          keys.push_back(training ? sampling_key(id, batch.epoch, salt + i)
                                  : sampling_key(id, 0, (salt + i) ^ 0xe7a1ULL));
        }
        emb = b.dbof.forward(tape, x, batch.offsets, keys, training);
        break;
      }
      case EmbeddingKind::kNetVLAD:
        emb = b.netvlad.forward(tape, x, batch.offsets, training);
        break;
      case EmbeddingKind::kNetFV:
        emb = b.netfv.forward(tape, x, batch.offsets, training);
        break;
    }
    outs.push_back(b.fc.forward(tape, emb, training));
  }
  if (outs.size() == 1) return outs.front();
  ag::Tensor sum = outs.front();
  for (std::size_t i = 1; i < outs.size(); ++i) sum = ag::add(tape, sum, outs[i]);
  return ag::scale(tape, sum, 1.0 / double(outs.size()));
}

ag::Tensor Model::forward(ag::Tape& tape, const Batch& batch, bool training) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  std::vector<ag::Tensor> parts;
  if (cfg_.video.enabled) {
    if (batch.video.cols != cfg_.video.feature_dim) {
      throw DimensionError("video features have width " +
                           std::to_string(batch.video.cols) + ", model expects " +
                           std::to_string(cfg_.video.feature_dim));
    }
    parts.push_back(modality_forward(tape, video_, batch.video, batch, training, 0));
  }
  if (cfg_.audio.enabled) {
    if (batch.audio.cols != cfg_.audio.feature_dim) {
      throw DimensionError("audio features have width " +
                           std::to_string(batch.audio.cols) + ", model expects " +
                           std::to_string(cfg_.audio.feature_dim));
    }
    parts.push_back(modality_forward(tape, audio_, batch.audio, batch, training, 64));
  }
  const ag::Tensor features =
      parts.size() == 1 ? parts.front() : ag::concat(tape, parts);
  ag::Tensor probs = moe_.forward(tape, features);
  if (cfg_.context_gating) probs = gating_.forward(tape, probs, training);
  return probs;
}

}  // namespace circnet
