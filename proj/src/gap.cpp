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

#include "circnet/gap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace circnet {

void GapAccumulator::accumulate(std::span<const Prediction> predictions,
                                std::span<const std::uint32_t> truth) {
  std::unordered_set<std::uint32_t> seen;
  for (const auto& p : predictions) {
    if (!std::isfinite(p.confidence)) {
      throw std::invalid_argument("non-finite prediction confidence");
    }
    if (!seen.insert(p.label).second) {
      throw std::invalid_argument("duplicate label " + std::to_string(p.label) +
                                  " in one video's predictions");
    }
  }
  const std::unordered_set<std::uint32_t> truth_set(truth.begin(), truth.end());

  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].confidence > predictions[b].confidence;
  });
  const std::size_t keep = std::min(top_k_, order.size());
  for (std::size_t i = 0; i < keep; ++i) {
    const auto& p = predictions[order[i]];
    pool_.push_back({p.confidence, truth_set.count(p.label) != 0});
  }
  positives_ += truth_set.size();
}

void GapAccumulator::accumulate_dense(std::span<const double> scores,
                                      std::span<const std::uint32_t> truth) {
  std::vector<Prediction> preds(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    preds[i] = {std::uint32_t(i), scores[i]};
  }
  accumulate(preds, truth);
}

void GapAccumulator::merge(const GapAccumulator& other) {
  pool_.insert(pool_.end(), other.pool_.begin(), other.pool_.end());
  positives_ += other.positives_;
}

double GapAccumulator::gap() const {
  if (positives_ == 0) {
    throw std::logic_error("gap() needs at least one ground-truth label");
  }
  std::vector<std::size_t> order(pool_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pool_[a].confidence > pool_[b].confidence;
  });
  double ap = 0.0;
  std::uint64_t hits = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (!pool_[order[i]].relevant) continue;
    ++hits;
    ap += double(hits) / double(i + 1);
  }
  return ap / double(positives_);
}

}  // namespace circnet
