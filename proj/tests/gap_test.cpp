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
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "support/gap_oracle.hpp"

namespace circnet {
namespace {

using testing::brute_force_gap;
using testing::random_instance;
using testing::Video;

GapAccumulator accumulate_all(const std::vector<Video>& videos, std::size_t top_k = 20) {
  GapAccumulator acc(top_k);
  for (const auto& v : videos) acc.accumulate(v.predictions, v.truth);
  return acc;
}

TEST(Gap, WorkedExample) {
  GapAccumulator acc;
  const std::vector<std::uint32_t> truth_a{1}, truth_b{2};
  acc.accumulate(std::vector<Prediction>{{1, 0.9}, {3, 0.8}}, truth_a);
  acc.accumulate(std::vector<Prediction>{{2, 0.7}}, truth_b);
  EXPECT_NEAR(acc.gap(), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(Gap, SingleCorrectPrediction) {
  GapAccumulator acc;
  const std::vector<std::uint32_t> truth{7};
  acc.accumulate(std::vector<Prediction>{{7, 0.9}}, truth);
  ASSERT_EQ(acc.pool().size(), 1u);
  EXPECT_EQ(acc.pool()[0].confidence, 0.9);
  EXPECT_TRUE(acc.pool()[0].relevant);
  EXPECT_EQ(acc.total_positives(), 1u);
  EXPECT_EQ(acc.gap(), 1.0);
}

TEST(Gap, NoRelevantEntriesIsZero) {
  GapAccumulator acc;
  const std::vector<std::uint32_t> truth{1};
  acc.accumulate(std::vector<Prediction>{{2, 0.9}, {3, 0.5}}, truth);
  EXPECT_EQ(acc.gap(), 0.0);
}

TEST(Gap, PerfectRankingIsOne) {
  GapAccumulator acc;
  for (std::uint32_t v = 0; v < 5; ++v) {
    const std::vector<std::uint32_t> truth{v, v + 10};
    acc.accumulate(std::vector<Prediction>{{v, 0.9 - 0.01 * v}, {v + 10, 0.8 - 0.01 * v},
                                           {v + 20, 0.1}},
                   truth);
  }
  EXPECT_DOUBLE_EQ(acc.gap(), 1.0);
}

TEST(Gap, KeepsTopTwentyPerVideo) {
  GapAccumulator acc;
  std::vector<Prediction> preds;
  for (std::uint32_t l = 0; l < 25; ++l) preds.push_back({l, double(l) / 25.0});
  const std::vector<std::uint32_t> truth{0, 24};
  acc.accumulate(preds, truth);
  ASSERT_EQ(acc.pool().size(), 20u);
  for (const auto& e : acc.pool()) EXPECT_GE(e.confidence, 5.0 / 25.0);
  EXPECT_EQ(acc.total_positives(), 2u);  // label 0 was cut but still counts
}

TEST(Gap, RejectsBadInput) {
  GapAccumulator acc;
  const std::vector<std::uint32_t> truth{1};
  EXPECT_THROW(acc.accumulate(std::vector<Prediction>{{1, 0.5}, {1, 0.4}}, truth),
               std::invalid_argument);
  EXPECT_THROW(acc.accumulate(std::vector<Prediction>{{1, std::nan("")}}, truth),
               std::invalid_argument);
  EXPECT_THROW(GapAccumulator().gap(), std::logic_error);
}

TEST(Gap, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(2718);
  for (int trial = 0; trial < 200; ++trial) {
    const auto videos = random_instance(rng);
    const std::size_t top_k = trial % 3 == 0 ? 3 : 20;
    EXPECT_NEAR(accumulate_all(videos, top_k).gap(), brute_force_gap(videos, top_k), 1e-12)
        << "trial " << trial;
  }
}

TEST(Gap, DenseScoresMatchSparsePredictions) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u;
  GapAccumulator dense, sparse;
  for (int v = 0; v < 10; ++v) {
    std::vector<double> scores(30);
    std::vector<Prediction> preds;
    for (std::uint32_t l = 0; l < 30; ++l) {
      scores[l] = u(rng);
      preds.push_back({l, scores[l]});
    }
    const std::vector<std::uint32_t> truth{std::uint32_t(v), std::uint32_t(v + 3)};
    dense.accumulate_dense(scores, truth);
    sparse.accumulate(preds, truth);
  }
  EXPECT_EQ(dense.gap(), sparse.gap());
}

TEST(Gap, MergeIsOrderIndependent) {
  std::mt19937_64 rng(6);
  const auto videos = random_instance(rng);
  GapAccumulator a, b;
  for (std::size_t i = 0; i < videos.size(); ++i)
    (i % 2 ? a : b).accumulate(videos[i].predictions, videos[i].truth);
  GapAccumulator ab = a, ba = b;
  ab.merge(b);
  ba.merge(a);
  EXPECT_EQ(ab.pool().size(), a.pool().size() + b.pool().size());
  EXPECT_EQ(ab.total_positives(), a.total_positives() + b.total_positives());
  EXPECT_NEAR(ab.gap(), ba.gap(), 1e-15);
  EXPECT_NEAR(ab.gap(), accumulate_all(videos).gap(), 1e-15);
}

TEST(Gap, InputOrderDoesNotMatter) {
  std::mt19937_64 rng(7);
  auto videos = random_instance(rng);
  const double g = accumulate_all(videos).gap();
  for (int i = 0; i < 5; ++i) {
    std::shuffle(videos.begin(), videos.end(), rng);
    for (auto& v : videos) std::shuffle(v.predictions.begin(), v.predictions.end(), rng);
    EXPECT_NEAR(accumulate_all(videos).gap(), g, 1e-15);
  }
}

TEST(Gap, RaisingRelevantConfidenceNeverHurts) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 100; ++trial) {
    auto videos = random_instance(rng);
    const double before = accumulate_all(videos).gap();
    auto raise_one = [&] {
      for (auto& v : videos)
        for (auto& p : v.predictions)
          if (std::find(v.truth.begin(), v.truth.end(), p.label) != v.truth.end()) {
            p.confidence += u(rng);
            return;
          }
    };
    raise_one();
    EXPECT_GE(accumulate_all(videos).gap(), before - 1e-15);
  }
}

}  // namespace
}  // namespace circnet
