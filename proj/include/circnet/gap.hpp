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

// Global average precision over the pooled top-k predictions of every video.

#ifndef CIRCNET_GAP_HPP_
#define CIRCNET_GAP_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace circnet {

struct Prediction {
  std::uint32_t label = 0;
  double confidence = 0.0;
};

struct PooledEntry {
  double confidence = 0.0;
  bool relevant = false;
};

class GapAccumulator {
 public:
  explicit GapAccumulator(std::size_t top_k = 20) : top_k_(top_k) {}

  // Keeps the video's top_k predictions (stable on ties) and counts every
  // truth label as a positive. Throws on duplicate or non-finite predictions.
  void accumulate(std::span<const Prediction> predictions,
                  std::span<const std::uint32_t> truth);
  // Scores for all labels of one video; label = index.
  void accumulate_dense(std::span<const double> scores,
                        std::span<const std::uint32_t> truth);

  void merge(const GapAccumulator& other);

  // sum_i relevant_i * precision@i / total_positives over the pool sorted by
  // descending confidence, ties in insertion order.
  double gap() const;

  std::size_t top_k() const { return top_k_; }
  std::uint64_t total_positives() const { return positives_; }
  const std::vector<PooledEntry>& pool() const { return pool_; }

 private:
  std::size_t top_k_;
  std::vector<PooledEntry> pool_;
  std::uint64_t positives_ = 0;
};

}  // namespace circnet

#endif  // CIRCNET_GAP_HPP_
