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

#include "circnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace circnet {

void Registry::add_tensor(const std::string& name, ag::Tensor& t, bool train) {
  if (train) trainable.push_back({name, t});
  state.push_back({name, t.shape(), t.mutable_data(), !train});
}

void Registry::add_buffer(const std::string& name, std::vector<double>& v) {
  state.push_back({name, {v.size()}, v});
}

// ---- Linear ---------------------------------------------------------------

Linear::Linear(const StructuredLinear& init) : spec_(init.spec) {
  init.validate();
  if (!spec_.structured) {
    dense_ = ag::Tensor::parameter({spec_.in_dim, spec_.out_dim}, init.dense.data);
  } else {
    for (const auto& chain : init.chains) {
      std::vector<std::pair<ag::Tensor, ag::Tensor>> factors;
      for (const auto& pair : chain.factors()) {
        const std::size_t n = pair.circulant.dim();
        ag::Tensor d = pair.diagonal.mode == DiagMode::kLearned
                           ? ag::Tensor::parameter({n}, pair.diagonal.d)
                           : ag::Tensor::constant({n}, pair.diagonal.d);
        factors.emplace_back(d, ag::Tensor::parameter({n}, pair.circulant.c));
      }
      chains_.push_back(std::move(factors));
    }
  }
  if (spec_.bias) bias_ = ag::Tensor::parameter({spec_.out_dim}, init.bias);
}

ag::Tensor Linear::forward(ag::Tape& tape, const ag::Tensor& x) const {
  if (x.cols() != spec_.in_dim) {
    throw DimensionError("linear: input width " + std::to_string(x.cols()) +
                         " != " + std::to_string(spec_.in_dim));
  }
  ag::Tensor y;
  if (!spec_.structured) {
    y = ag::matmul(tape, x, dense_);
  } else {
    const AdapterPlan plan = plan_adapter(spec_.in_dim, spec_.out_dim);
    const ag::Tensor padded = spec_.in_dim == plan.chain_dim
                                  ? x
                                  : ag::pad_cols(tape, x, plan.chain_dim);
    std::vector<ag::Tensor> outs;
    for (const auto& chain : chains_) {
      ag::Tensor h = padded;
      for (std::size_t i = chain.size(); i-- > 0;) {
        h = ag::circ_matvec_batched(tape, h, chain[i].second);
        h = ag::diag_scale(tape, h, chain[i].first);
      }
      outs.push_back(h);
    }
    y = outs.size() == 1 ? outs.front() : ag::concat(tape, outs);
    if (y.cols() != spec_.out_dim) y = ag::slice(tape, y, 0, spec_.out_dim);
  }
  if (spec_.bias) y = ag::bias_add(tape, y, bias_);
  return y;
}

StructuredLinear Linear::export_numeric() const {
  StructuredLinear out;
  out.spec = spec_;
  if (!spec_.structured) {
    out.dense = Matrix(spec_.in_dim, spec_.out_dim);
    out.dense.data.assign(dense_.data().begin(), dense_.data().end());
  } else {
    for (const auto& chain : chains_) {
      std::vector<DCPair> pairs;
      for (const auto& [d, c] : chain) {
        DCPair pair;
        pair.diagonal.d.assign(d.data().begin(), d.data().end());
        pair.diagonal.mode = spec_.diag;
        pair.circulant.c.assign(c.data().begin(), c.data().end());
        pairs.push_back(std::move(pair));
      }
      out.chains.emplace_back(std::move(pairs));
    }
  }
  if (spec_.bias) out.bias.assign(bias_.data().begin(), bias_.data().end());
  return out;
}

void Linear::collect(const std::string& prefix, Registry& reg) {
  if (!spec_.structured) {
    reg.add_tensor(prefix + ".w", dense_, true);
  } else {
    for (std::size_t k = 0; k < chains_.size(); ++k) {
      for (std::size_t i = 0; i < chains_[k].size(); ++i) {
        const std::string base =
            prefix + ".chain" + std::to_string(k) + "." + std::to_string(i);
        reg.add_tensor(base + ".d", chains_[k][i].first,
                       spec_.diag == DiagMode::kLearned);
        reg.add_tensor(base + ".c", chains_[k][i].second, true);
      }
    }
  }
  if (spec_.bias) reg.add_tensor(prefix + ".b", bias_, true);
}

// ---- BatchNorm ------------------------------------------------------------

BatchNorm::BatchNorm(std::size_t features)
    : gamma_(ag::Tensor::parameter({features}, std::vector<double>(features, 1.0))),
      beta_(ag::Tensor::parameter({features}, std::vector<double>(features, 0.0))),
      state_(features) {}

ag::Tensor BatchNorm::forward(ag::Tape& tape, const ag::Tensor& x,
                              bool training) {
  return ag::batch_norm(tape, x, gamma_, beta_, state_, training);
}

void BatchNorm::collect(const std::string& prefix, Registry& reg) {
  reg.add_tensor(prefix + ".gamma", gamma_, true);
  reg.add_tensor(prefix + ".beta", beta_, true);
  reg.add_buffer(prefix + ".mean", state_.running_mean);
  reg.add_buffer(prefix + ".var", state_.running_var);
}

// ---- pooling --------------------------------------------------------------

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::kMax: return "max";
    case Pooling::kAverage: return "average";
    case Pooling::kRobust: return "robust";
  }
  return "?";
}

Pooling parse_pooling(const std::string& text) {
  if (text == "max") return Pooling::kMax;
  if (text == "average" || text == "avg" || text == "mean") return Pooling::kAverage;
  if (text == "robust") return Pooling::kRobust;
  throw std::invalid_argument("unknown pooling '" + text + "'");
}

std::uint64_t sampling_key(std::uint64_t id, std::uint64_t epoch,
                           std::uint64_t salt) {
  // splitmix64 finalizer over a simple combination.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(id) ^ epoch) ^ salt);
}

ag::Tensor robust_pool(ag::Tape& tape, const ag::Tensor& projected,
                       std::span<const std::size_t> offsets,
                       std::span<const std::uint64_t> keys,
                       const RobustOptions& options) {
  if (offsets.size() < 2) throw ag::ShapeError("robust_pool: no videos");
  const std::size_t videos = offsets.size() - 1;
  if (keys.size() != videos) throw ag::ShapeError("robust_pool: one key per video");
  if (options.samples == 0 || options.sample_size == 0) {
    throw std::invalid_argument("robust_pool: n_s and k_s must be >= 1");
  }
  const std::size_t p = projected.cols();
  const auto data = projected.data();

  std::vector<std::size_t> picks;
  std::vector<std::size_t> set_offsets{0};
  std::vector<std::size_t> video_offsets{0};
  for (std::size_t b = 0; b < videos; ++b) {
    const std::size_t begin = offsets[b], end = offsets[b + 1];
    if (end <= begin) throw ag::ShapeError("robust_pool: empty frame set");
    std::vector<std::size_t> order(end - begin);
    std::iota(order.begin(), order.end(), begin);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
      return std::lexicographical_compare(data.begin() + a * p,
                                          data.begin() + (a + 1) * p,
                                          data.begin() + c * p,
                                          data.begin() + (c + 1) * p);
    });
    std::mt19937_64 rng(keys[b]);
    std::uniform_int_distribution<std::size_t> pick(0, order.size() - 1);
    for (std::size_t s = 0; s < options.samples; ++s) {
      if (options.exhaustive) {
        picks.insert(picks.end(), order.begin(), order.end());
      } else {
        for (std::size_t j = 0; j < options.sample_size; ++j) {
          picks.push_back(order[pick(rng)]);
        }
      }
      set_offsets.push_back(picks.size());
    }
    video_offsets.push_back(video_offsets.back() + options.samples);
  }
  const ag::Tensor gathered = ag::gather_rows(tape, projected, picks);
  const ag::Tensor maxed = ag::reduce_max_over_set(tape, gathered, set_offsets);
  return ag::segment_mean(tape, maxed, video_offsets);
}

// ---- DBoF -----------------------------------------------------------------

DBoF::DBoF(const DBoFConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  if (cfg.cluster_size <= cfg.feature_dim) {
    std::cerr << "warning: DBoF cluster size " << cfg.cluster_size
              << " is not larger than feature dim " << cfg.feature_dim << "\n";
  }
  LinearSpec spec;
  spec.in_dim = cfg.feature_dim;
  spec.out_dim = cfg.cluster_size;
  spec.structured = cfg.structured;
  spec.factors = cfg.factors;
  spec.diag = cfg.diag;
  projection_ = Linear(spec, rng);
  bn_ = BatchNorm(cfg.cluster_size);
}

ag::Tensor DBoF::forward(ag::Tape& tape, const ag::Tensor& frames,
                         std::span<const std::size_t> offsets,
                         std::span<const std::uint64_t> keys, bool training) {
  ag::Tensor h = projection_.forward(tape, frames);
  h = ag::relu(tape, bn_.forward(tape, h, training));
  switch (cfg_.pooling) {
    case Pooling::kMax: return ag::reduce_max_over_set(tape, h, offsets);
    case Pooling::kAverage: return ag::segment_mean(tape, h, offsets);
    case Pooling::kRobust: return robust_pool(tape, h, offsets, keys, cfg_.robust);
  }
  throw std::logic_error("unreachable pooling");
}

void DBoF::collect(const std::string& prefix, Registry& reg) {
  projection_.collect(prefix + ".proj", reg);
  bn_.collect(prefix + ".bn", reg);
}

// ---- NetVLAD / NetFV ------------------------------------------------------

namespace {

ag::Tensor normal_parameter(ag::Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(ag::shape_size(shape));
  for (auto& x : v) x = dist(rng);
  return ag::Tensor::parameter(std::move(shape), std::move(v));
}

void check_cluster_config(const ClusterConfig& cfg) {
  if (cfg.feature_dim == 0 || cfg.clusters == 0) {
    throw std::invalid_argument("cluster embedding needs positive sizes");
  }
}

}  // namespace

NetVLAD::NetVLAD(const ClusterConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  check_cluster_config(cfg);
  const double s = 1.0 / std::sqrt(double(cfg.feature_dim));
  assign_w_ = normal_parameter({cfg.feature_dim, cfg.clusters}, s, rng);
  bn_ = BatchNorm(cfg.clusters);
  centers_ = normal_parameter({cfg.clusters, cfg.feature_dim}, s, rng);
}

ag::Tensor NetVLAD::forward(ag::Tape& tape, const ag::Tensor& frames,
                            std::span<const std::size_t> offsets, bool training) {
  const ag::Tensor logits = bn_.forward(tape, ag::matmul(tape, frames, assign_w_),
                                        training);
  const ag::Tensor assign = ag::softmax(tape, logits);
  ag::Tensor v = ag::vlad_aggregate(tape, frames, assign, centers_, offsets);
  v = ag::l2_normalize_blocks(tape, v, cfg_.feature_dim);
  return ag::l2_normalize_blocks(tape, v, output_dim());
}

void NetVLAD::collect(const std::string& prefix, Registry& reg) {
  reg.add_tensor(prefix + ".assign", assign_w_, true);
  bn_.collect(prefix + ".bn", reg);
  reg.add_tensor(prefix + ".centers", centers_, true);
}

NetFV::NetFV(const ClusterConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  check_cluster_config(cfg);
  const double s = 1.0 / std::sqrt(double(cfg.feature_dim));
  assign_w_ = normal_parameter({cfg.feature_dim, cfg.clusters}, s, rng);
  bn_ = BatchNorm(cfg.clusters);
  centers_ = normal_parameter({cfg.clusters, cfg.feature_dim}, s, rng);
  sigma_ = ag::Tensor::parameter(
      {cfg.clusters, cfg.feature_dim},
      std::vector<double>(cfg.clusters * cfg.feature_dim, 1.0));
}

ag::Tensor NetFV::forward(ag::Tape& tape, const ag::Tensor& frames,
                          std::span<const std::size_t> offsets, bool training) {
  const ag::Tensor logits = bn_.forward(tape, ag::matmul(tape, frames, assign_w_),
                                        training);
  const ag::Tensor assign = ag::softmax(tape, logits);
  ag::Tensor first = ag::vlad_aggregate(tape, frames, assign, centers_, offsets);
  ag::Tensor second =
      ag::fisher_second_order(tape, frames, assign, centers_, sigma_, offsets);
  first = ag::l2_normalize_blocks(tape, first, cfg_.feature_dim);
  second = ag::l2_normalize_blocks(tape, second, cfg_.feature_dim);
  return ag::l2_normalize_blocks(tape, ag::concat(tape, {first, second}),
                                 output_dim());
}

void NetFV::collect(const std::string& prefix, Registry& reg) {
  reg.add_tensor(prefix + ".assign", assign_w_, true);
  bn_.collect(prefix + ".bn", reg);
  reg.add_tensor(prefix + ".centers", centers_, true);
  reg.add_tensor(prefix + ".sigma", sigma_, true);
}

// ---- classifier head ------------------------------------------------------

namespace {

LinearSpec block_spec(std::size_t in, std::size_t out, const DenseBlockConfig& cfg,
                      bool bias) {
  LinearSpec spec;
  spec.in_dim = in;
  spec.out_dim = out;
  spec.structured = cfg.structured;
  spec.factors = cfg.factors;
  spec.diag = cfg.diag;
  spec.bias = bias;
  return spec;
}

}  // namespace

FullyConnected::FullyConnected(std::size_t in, std::size_t out,
                               const DenseBlockConfig& cfg, std::mt19937_64& rng)
    : linear_(block_spec(in, out, cfg, false), rng), bn_(out) {}

ag::Tensor FullyConnected::forward(ag::Tape& tape, const ag::Tensor& x,
                                   bool training) {
  return ag::relu(tape, bn_.forward(tape, linear_.forward(tape, x), training));
}

void FullyConnected::collect(const std::string& prefix, Registry& reg) {
  linear_.collect(prefix, reg);
  bn_.collect(prefix + ".bn", reg);
}

MixtureOfExperts::MixtureOfExperts(std::size_t input_dim, std::size_t labels,
                                   std::size_t mixtures,
                                   const DenseBlockConfig& cfg,
                                   std::mt19937_64& rng)
    : labels_(labels),
      mixtures_(mixtures),
      gating_(block_spec(input_dim, labels * (mixtures + 1), cfg, false), rng),
      experts_(block_spec(input_dim, labels * mixtures, cfg, true), rng) {
  if (labels == 0 || mixtures == 0) {
    throw std::invalid_argument("MoE needs labels and mixtures >= 1");
  }
}

ag::Tensor MixtureOfExperts::forward(ag::Tape& tape, const ag::Tensor& x) const {
  const std::size_t n = x.rows();
  ag::Tensor gates = gating_.forward(tape, x);
  gates = ag::reshape(tape, gates, {n * labels_, mixtures_ + 1});
  gates = ag::slice(tape, ag::softmax(tape, gates), 0, mixtures_);
  ag::Tensor experts = ag::sigmoid(tape, experts_.forward(tape, x));
  experts = ag::reshape(tape, experts, {n * labels_, mixtures_});
  const ag::Tensor probs = ag::row_sum(tape, ag::mul(tape, gates, experts));
  return ag::reshape(tape, probs, {n, labels_});
}

void MixtureOfExperts::collect(const std::string& prefix, Registry& reg) {
  gating_.collect(prefix + ".gate", reg);
  experts_.collect(prefix + ".expert", reg);
}

ContextGating::ContextGating(std::size_t dim, bool batch_norm,
                             const DenseBlockConfig& cfg, std::mt19937_64& rng)
    : linear_(block_spec(dim, dim, cfg, !batch_norm), rng), use_bn_(batch_norm) {
  if (use_bn_) bn_ = BatchNorm(dim);
}

ag::Tensor ContextGating::forward(ag::Tape& tape, const ag::Tensor& x,
                                  bool training) {
  ag::Tensor gate = linear_.forward(tape, x);
  if (use_bn_) gate = bn_.forward(tape, gate, training);
  return ag::mul(tape, ag::sigmoid(tape, gate), x);
}

void ContextGating::collect(const std::string& prefix, Registry& reg) {
  linear_.collect(prefix, reg);
  if (use_bn_) bn_.collect(prefix + ".bn", reg);
}

}  // namespace circnet
