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


// Definitional GAP evaluation and random instances for cross-checking
// GapAccumulator.

#ifndef CIRCNET_TESTS_GAP_ORACLE_HPP_
#define CIRCNET_TESTS_GAP_ORACLE_HPP_

#include <algorithm>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "circnet/gap.hpp"

namespace circnet::testing {

struct Video {
  std::vector<Prediction> predictions;
  std::vector<std::uint32_t> truth;
};

// Sum of p(i) * (r(i) - r(i-1)) over the pooled, confidence-sorted top-k
// predictions, computed directly from cumulative counts.
inline double brute_force_gap(const std::vector<Video>& videos, std::size_t top_k) {
  std::vector<std::pair<double, bool>> pool;
  double positives = 0.0;
  for (const auto& v : videos) {
    auto preds = v.predictions;
    std::stable_sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) {
      return a.confidence > b.confidence;
    });
    if (preds.size() > top_k) preds.resize(top_k);
    for (const auto& p : preds) {
      const bool rel = std::find(v.truth.begin(), v.truth.end(), p.label) != v.truth.end();
      pool.emplace_back(p.confidence, rel);
    }
    positives += double(v.truth.size());
  }
  std::stable_sort(pool.begin(), pool.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  double hits = 0.0, gap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    hits += pool[i].second;
    const double precision = hits / double(i + 1);
    const double recall = hits / positives;
    gap += precision * (recall - prev_recall);
    prev_recall = recall;
  }
  return gap;
}

inline std::vector<Video> random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> videos(1, 50), labels(1, 10);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  const std::size_t num_labels = labels(rng);
  std::vector<Video> out(videos(rng));
  for (auto& v : out) {
    std::vector<std::uint32_t> all(num_labels);
    std::iota(all.begin(), all.end(), 0u);
    std::shuffle(all.begin(), all.end(), rng);
    const std::size_t predicted = std::uniform_int_distribution<std::size_t>(0, num_labels)(rng);
    for (std::size_t i = 0; i < predicted; ++i) v.predictions.push_back({all[i], conf(rng)});
    std::shuffle(all.begin(), all.end(), rng);
    v.truth.assign(all.begin(),
                   all.begin() + std::uniform_int_distribution<std::size_t>(0, std::min<std::size_t>(3, num_labels))(rng));
  }
  out[0].truth = {0};
  return out;
}

}  // namespace circnet::testing

#endif  // CIRCNET_TESTS_GAP_ORACLE_HPP_
