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
#include <numeric>
#include <random>

#include <gtest/gtest.h>

namespace circnet {
namespace {

using ag::Tape;
using ag::Tensor;

// Eval-mode batch norm with fresh statistics divides by this.
const double kFreshBn = std::sqrt(1.0 + 1e-3);

std::vector<double> normal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::span<double> find(Registry& reg, const std::string& name) {
  for (auto& s : reg.state)
    if (s.name == name) return s.data;
  ADD_FAILURE() << "no state entry " << name;
  return {};
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  EXPECT_EQ(a.size(), b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor frames_from(const std::vector<double>& v, std::size_t k) {
  return Tensor::constant({v.size() / k, k}, v);
}

std::vector<double> permute_rows(const std::vector<double>& v, std::size_t k,
                                 const std::vector<std::size_t>& order) {
  std::vector<double> out;
  for (auto r : order) out.insert(out.end(), v.begin() + r * k, v.begin() + (r + 1) * k);
  return out;
}

DBoFConfig dbof_config(Pooling pooling, std::size_t k = 4, std::size_t p = 16) {
  return {.feature_dim = k, .cluster_size = p, .pooling = pooling};
}

// relu(BN(x W)) for one frame with fresh statistics.
std::vector<double> project_frame(Registry& reg, std::span<const double> x, std::size_t p) {
  const auto w = find(reg, "d.proj.w");
  const std::size_t k = x.size();
  std::vector<double> out(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < k; ++i) out[j] += x[i] * w[i * p + j];
    out[j] = std::max(0.0, out[j] / kFreshBn);
  }
  return out;
}

TEST(DBoF, SingleFrameMaxEqualsProjection) {
  std::mt19937_64 rng(1);
  DBoF layer(dbof_config(Pooling::kMax), rng);
  Registry reg;
  layer.collect("d", reg);
  const auto x = normal(4, rng);
  Tape t;
  const std::vector<std::size_t> off{0, 1};
  const auto y = layer.forward(t, frames_from(x, 4), off, {}, false);
  EXPECT_LT(max_abs_diff(y.data(), project_frame(reg, x, 16)), 1e-12);
}

TEST(DBoF, MaxPoolingMatchesPerFrameOracle) {
  std::mt19937_64 rng(2);
  DBoF layer(dbof_config(Pooling::kMax), rng);
  Registry reg;
  layer.collect("d", reg);
  const auto x = normal(10 * 4, rng);
  std::vector<double> expected(16, 0.0);
  for (std::size_t f = 0; f < 10; ++f) {
    const auto y = project_frame(reg, std::span<const double>(x).subspan(f * 4, 4), 16);
    for (std::size_t j = 0; j < 16; ++j) expected[j] = std::max(expected[j], y[j]);
  }
  Tape t;
  const std::vector<std::size_t> off{0, 10};
  EXPECT_LT(max_abs_diff(layer.forward(t, frames_from(x, 4), off, {}, false).data(), expected),
            1e-12);
}

TEST(DBoF, WarnsButAcceptsSmallClusterSize) {
  std::mt19937_64 rng(3);
  EXPECT_NO_THROW(DBoF(dbof_config(Pooling::kMax, 8, 4), rng));
}

TEST(DBoF, EmptyFrameSetRejected) {
  std::mt19937_64 rng(4);
  for (auto pooling : {Pooling::kMax, Pooling::kAverage, Pooling::kRobust}) {
    DBoF layer(dbof_config(pooling), rng);
    Tape t;
    const std::vector<std::size_t> off{0, 0, 2};
    const std::vector<std::uint64_t> keys{1, 2};
    EXPECT_THROW(layer.forward(t, frames_from(normal(8, rng), 4), off, keys, false),
                 std::invalid_argument);
  }
}

TEST(DBoF, PermutationInvariance) {
  std::mt19937_64 rng(5);
  for (auto pooling : {Pooling::kMax, Pooling::kAverage, Pooling::kRobust}) {
    auto cfg = dbof_config(pooling);
    cfg.robust = {.samples = 4, .sample_size = 3};
    DBoF layer(cfg, rng);
    const auto x = normal(7 * 4, rng);
    std::vector<std::size_t> order(7);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::vector<std::size_t> off{0, 7};
    const std::vector<std::uint64_t> keys{99};
    Tape t;
    const auto a = layer.forward(t, frames_from(x, 4), off, keys, false);
    const auto b = layer.forward(t, frames_from(permute_rows(x, 4, order), 4), off, keys, false);
    EXPECT_LT(max_abs_diff(a.data(), b.data()), 1e-12) << to_string(pooling);
  }
}

TEST(RobustPool, ExhaustiveSingleSampleIsMax) {
  std::mt19937_64 rng(6);
  const auto x = normal(9 * 5, rng);
  const std::vector<std::size_t> off{0, 4, 9};
  const std::vector<std::uint64_t> keys{1, 2};
  Tape t;
  const auto robust = robust_pool(t, frames_from(x, 5), off, keys,
                                  {.samples = 1, .sample_size = 5, .exhaustive = true});
  const auto max = ag::reduce_max_over_set(t, frames_from(x, 5), off);
  EXPECT_EQ(values(robust), values(max));
}

TEST(RobustPool, IdenticalFramesReturnThatFrame) {
  std::mt19937_64 rng(7);
  const auto f = normal(6, rng);
  std::vector<double> x;
  for (int i = 0; i < 5; ++i) x.insert(x.end(), f.begin(), f.end());
  const std::vector<std::size_t> off{0, 5};
  for (std::size_t ns : {1u, 10u}) {
    for (std::size_t ks : {1u, 15u}) {
      Tape t;
      const std::vector<std::uint64_t> keys{ns * 31 + ks};
      EXPECT_LT(max_abs_diff(robust_pool(t, frames_from(x, 6), off, keys,
                                         {.samples = ns, .sample_size = ks}).data(),
                             f),
                1e-12);
    }
  }
}

TEST(RobustPool, SingleFrameSamplesAverageToMean) {
  std::mt19937_64 rng(8);
  const std::size_t frames = 12, p = 6, ns = 20000;
  const auto x = normal(frames * p, rng);
  const std::vector<std::size_t> off{0, frames};
  const std::vector<std::uint64_t> keys{2024};
  Tape t;
  const auto y = robust_pool(t, frames_from(x, p), off, keys, {.samples = ns, .sample_size = 1});
  for (std::size_t j = 0; j < p; ++j) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t f = 0; f < frames; ++f) mean += x[f * p + j];
    mean /= frames;
    for (std::size_t f = 0; f < frames; ++f) sq += std::pow(x[f * p + j] - mean, 2);
    const double sigma = std::sqrt(sq / frames / ns);
    EXPECT_LE(std::abs(y.at(j) - mean), 3.0 * sigma) << "coordinate " << j;
  }
}

TEST(RobustPool, DeterministicGivenKey) {
  std::mt19937_64 rng(9);
  const auto x = normal(8 * 3, rng);
  const std::vector<std::size_t> off{0, 8};
  Tape t;
  const RobustOptions opt{.samples = 3, .sample_size = 2};
  const std::vector<std::uint64_t> k1{5}, k2{6};
  EXPECT_EQ(values(robust_pool(t, frames_from(x, 3), off, k1, opt)),
            values(robust_pool(t, frames_from(x, 3), off, k1, opt)));
  EXPECT_NE(values(robust_pool(t, frames_from(x, 3), off, k1, opt)),
            values(robust_pool(t, frames_from(x, 3), off, k2, opt)));
}

TEST(RobustPool, InterpolatesBetweenAverageAndMax) {
  std::mt19937_64 rng(10);
  const auto x = normal(20 * 4, rng);
  const std::vector<std::size_t> off{0, 20};
  const std::vector<std::uint64_t> keys{3};
  Tape t;
  const auto avg = ag::segment_mean(t, frames_from(x, 4), off);
  const auto mx = ag::reduce_max_over_set(t, frames_from(x, 4), off);
  const auto rob = robust_pool(t, frames_from(x, 4), off, keys, {.samples = 10, .sample_size = 5});
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_LE(rob.at(j), mx.at(j));
    EXPECT_GE(rob.at(j), avg.at(j) - 0.5);
  }
}

// ---- NetVLAD / NetFV ------------------------------------------------------

struct ClusterParams {
  std::vector<double> w, centers, sigma;
};

ClusterParams read_params(Registry& reg, const std::string& prefix, bool fv) {
  ClusterParams p;
  auto w = find(reg, prefix + ".assign");
  auto c = find(reg, prefix + ".centers");
  p.w.assign(w.begin(), w.end());
  p.centers.assign(c.begin(), c.end());
  if (fv) {
    auto s = find(reg, prefix + ".sigma");
    p.sigma.assign(s.begin(), s.end());
  }
  return p;
}

void normalize(std::vector<double>& v, std::size_t begin, std::size_t len) {
  double n = 0.0;
  for (std::size_t i = begin; i < begin + len; ++i) n += v[i] * v[i];
  n = std::sqrt(n);
  if (n > 1e-12)
    for (std::size_t i = begin; i < begin + len; ++i) v[i] /= n;
}

// Direct per-frame summation for one video.
std::vector<double> cluster_oracle(const ClusterParams& p, const std::vector<double>& x,
                                   std::size_t k, std::size_t clusters, bool fv) {
  const std::size_t frames = x.size() / k;
  std::vector<double> first(clusters * k, 0.0), second(clusters * k, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    std::vector<double> logits(clusters, 0.0);
    for (std::size_t c = 0; c < clusters; ++c) {
      for (std::size_t i = 0; i < k; ++i) logits[c] += x[f * k + i] * p.w[i * clusters + c];
      logits[c] /= kFreshBn;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (auto& l : logits) z += (l = std::exp(l - top));
    for (std::size_t c = 0; c < clusters; ++c) {
      const double a = logits[c] / z;
      for (std::size_t i = 0; i < k; ++i) {
        const double r = x[f * k + i] - p.centers[c * k + i];
        first[c * k + i] += a * r;
        if (fv) {
          const double s = std::max(p.sigma[c * k + i], 1e-4);
          second[c * k + i] += a * (r * r - s * s);
        }
      }
    }
  }
  for (std::size_t c = 0; c < clusters; ++c) {
    normalize(first, c * k, k);
    if (fv) normalize(second, c * k, k);
  }
  if (fv) first.insert(first.end(), second.begin(), second.end());
  normalize(first, 0, first.size());
  return first;
}

TEST(NetVLAD, SingleClusterAtOriginNormalizesFrame) {
  std::mt19937_64 rng(11);
  NetVLAD layer({.feature_dim = 3, .clusters = 1}, rng);
  std::fill(layer.centers().mutable_data().begin(), layer.centers().mutable_data().end(), 0.0);
  Tape t;
  const std::vector<std::size_t> off{0, 1};
  const auto y = layer.forward(t, frames_from({3, 0, 4}, 3), off, false);
  EXPECT_LT(max_abs_diff(y.data(), std::vector<double>{0.6, 0.0, 0.8}), 1e-12);
}

TEST(NetVLAD, FrameAtSaturatedCenterGivesZeroBlock) {
  std::mt19937_64 rng(12);
  NetVLAD layer({.feature_dim = 2, .clusters = 2}, rng);
  auto c = layer.centers().mutable_data();
  c[0] = 1.0, c[1] = 0.0, c[2] = -1.0, c[3] = 2.0;
  auto w = layer.assignment().mutable_data();  // [k, K]
  w[0] = 100.0, w[1] = -100.0, w[2] = 0.0, w[3] = 0.0;
  Tape t;
  const std::vector<std::size_t> off{0, 1};
  const auto y = layer.forward(t, frames_from({1.0, 0.0}, 2), off, false);
  EXPECT_LT(std::abs(y.at(0)) + std::abs(y.at(1)), 1e-8);
}

TEST(NetVLAD, MatchesLoopOracle) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    NetVLAD layer({.feature_dim = 3, .clusters = 2}, rng);
    Registry reg;
    layer.collect("v", reg);
    const auto x = normal(5 * 3, rng);
    Tape t;
    const std::vector<std::size_t> off{0, 5};
    const auto y = layer.forward(t, frames_from(x, 3), off, false);
    EXPECT_EQ(y.size(), layer.output_dim());
    EXPECT_LT(max_abs_diff(y.data(), cluster_oracle(read_params(reg, "v", false), x, 3, 2, false)),
              1e-8);
  }
}

TEST(NetFV, FrameAtCenterWithUnitSigma) {
  std::mt19937_64 rng(14);
  NetFV layer({.feature_dim = 4, .clusters = 1}, rng);
  const std::vector<double> f{0.3, -0.2, 1.0, 0.5};
  std::copy(f.begin(), f.end(), layer.centers().mutable_data().begin());
  Tape t;
  const std::vector<std::size_t> off{0, 1};
  const auto y = layer.forward(t, frames_from(f, 4), off, false);
  ASSERT_EQ(y.size(), 8u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(y.at(i), 0.0, 1e-12);
    EXPECT_NEAR(y.at(4 + i), -0.5, 1e-12);
  }
}

TEST(NetFV, ZeroFramesRejected) {
  std::mt19937_64 rng(15);
  NetFV layer({.feature_dim = 2, .clusters = 2}, rng);
  Tape t;
  const std::vector<std::size_t> off{0, 0, 1};
  EXPECT_THROW(layer.forward(t, frames_from({1, 2}, 2), off, false), std::invalid_argument);
}

TEST(NetFV, MatchesLoopOracle) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 5; ++trial) {
    NetFV layer({.feature_dim = 3, .clusters = 2}, rng);
    for (auto& s : layer.sigma().mutable_data()) s = 0.5 + std::abs(normal(1, rng)[0]);
    Registry reg;
    layer.collect("f", reg);
    const auto x = normal(4 * 3, rng);
    Tape t;
    const std::vector<std::size_t> off{0, 4};
    const auto y = layer.forward(t, frames_from(x, 3), off, false);
    EXPECT_LT(max_abs_diff(y.data(), cluster_oracle(read_params(reg, "f", true), x, 3, 2, true)),
              1e-8);
  }
}

TEST(ClusterEmbeddings, PermutationInvariance) {
  std::mt19937_64 rng(17);
  NetVLAD vlad({.feature_dim = 3, .clusters = 3}, rng);
  NetFV fv({.feature_dim = 3, .clusters = 3}, rng);
  const auto x = normal(6 * 3, rng);
  const std::vector<std::size_t> order{4, 2, 5, 0, 1, 3};
  const auto xp = permute_rows(x, 3, order);
  const std::vector<std::size_t> off{0, 6};
  Tape t;
  EXPECT_LT(max_abs_diff(vlad.forward(t, frames_from(x, 3), off, false).data(),
                         vlad.forward(t, frames_from(xp, 3), off, false).data()),
            1e-12);
  EXPECT_LT(max_abs_diff(fv.forward(t, frames_from(x, 3), off, false).data(),
                         fv.forward(t, frames_from(xp, 3), off, false).data()),
            1e-12);
}

// ---- classifier head ------------------------------------------------------

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

TEST(MixtureOfExperts, DominantExpertGivesItsSigmoid) {
  std::mt19937_64 rng(18);
  MixtureOfExperts moe(2, 3, 1, {}, rng);
  Registry reg;
  moe.collect("m", reg);
  auto gate = find(reg, "m.gate.w");  // [2, 3 * 2]
  std::fill(gate.begin(), gate.end(), 0.0);
  for (std::size_t l = 0; l < 3; ++l) gate[l * 2 + 1] = -60.0;  // dummy column, row 0
  const std::vector<double> x{1.0, 0.4};
  Tape t;
  const auto y = moe.forward(t, Tensor::constant({1, 2}, x));
  const auto w = find(reg, "m.expert.w");
  const auto b = find(reg, "m.expert.b");
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_NEAR(y.at(l), sigmoid(x[0] * w[l] + x[1] * w[3 + l] + b[l]), 1e-15);
  }
}

TEST(MixtureOfExperts, SymmetricGatesAndZeroExperts) {
  std::mt19937_64 rng(19);
  for (std::size_t mixtures : {1u, 2u, 4u}) {
    MixtureOfExperts moe(3, 2, mixtures, {}, rng);
    Registry reg;
    moe.collect("m", reg);
    for (const char* name : {"m.gate.w", "m.expert.w", "m.expert.b"}) {
      auto v = find(reg, name);
      std::fill(v.begin(), v.end(), 0.0);
    }
    Tape t;
    const auto y = moe.forward(t, Tensor::constant({1, 3}, normal(3, rng)));
    const double dummy_share = 1.0 / double(mixtures + 1);
    for (std::size_t l = 0; l < 2; ++l) EXPECT_NEAR(y.at(l), 0.5 * (1.0 - dummy_share), 1e-15);
  }
}

TEST(MixtureOfExperts, MatchesFormula) {
  std::mt19937_64 rng(20);
  const std::size_t in = 5, labels = 3, e = 2;
  MixtureOfExperts moe(in, labels, e, {}, rng);
  Registry reg;
  moe.collect("m", reg);
  const auto gw = find(reg, "m.gate.w"), ew = find(reg, "m.expert.w"), eb = find(reg, "m.expert.b");
  const auto x = normal(2 * in, rng);
  Tape t;
  const auto y = moe.forward(t, Tensor::constant({2, in}, x));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t l = 0; l < labels; ++l) {
      std::vector<double> g(e + 1, 0.0), s(e, 0.0);
      for (std::size_t j = 0; j <= e; ++j)
        for (std::size_t i = 0; i < in; ++i)
          g[j] += x[n * in + i] * gw[i * labels * (e + 1) + l * (e + 1) + j];
      for (std::size_t j = 0; j < e; ++j) {
        double z = eb[l * e + j];
        for (std::size_t i = 0; i < in; ++i) z += x[n * in + i] * ew[i * labels * e + l * e + j];
        s[j] = sigmoid(z);
      }
      double denom = 0.0;
      for (double v : g) denom += std::exp(v);
      double p = 0.0;
      for (std::size_t j = 0; j < e; ++j) p += std::exp(g[j]) / denom * s[j];
      EXPECT_NEAR(y.at(n * labels + l), p, 1e-10);
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
  }
}

TEST(ContextGating, ZeroWeightsHalveInput) {
  std::mt19937_64 rng(21);
  ContextGating cg(4, false, {}, rng);
  Registry reg;
  cg.collect("c", reg);
  for (const char* name : {"c.w", "c.b"}) {
    auto v = find(reg, name);
    std::fill(v.begin(), v.end(), 0.0);
  }
  const std::vector<double> probs{0.1, 0.9, 0.5, 0.0};
  Tape t;
  const auto y = cg.forward(t, Tensor::constant({1, 4}, probs), false);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y.at(i), 0.5 * probs[i]);
}

TEST(ContextGating, SaturatedGatePassesInput) {
  std::mt19937_64 rng(22);
  ContextGating cg(3, false, {}, rng);
  Registry reg;
  cg.collect("c", reg);
  auto b = find(reg, "c.b");
  std::fill(b.begin(), b.end(), 60.0);
  const std::vector<double> probs{0.2, 0.7, 0.4};
  Tape t;
  const auto y = cg.forward(t, Tensor::constant({1, 3}, probs), false);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y.at(i), probs[i], 1e-15);
}

TEST(ContextGating, MatchesFormulaAndNeverIncreases) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ContextGating plain(6, false, {}, rng);
  ContextGating with_bn(6, true, {.structured = true, .factors = 2}, rng);
  Registry reg;
  plain.collect("c", reg);
  const auto w = find(reg, "c.w"), b = find(reg, "c.b");
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(3 * 6);
    for (auto& v : p) v = u(rng);
    Tape t;
    const auto y = plain.forward(t, Tensor::constant({3, 6}, p), false);
    const auto z = with_bn.forward(t, Tensor::constant({3, 6}, p), trial % 2 == 0);
    for (std::size_t n = 0; n < 3; ++n) {
      for (std::size_t i = 0; i < 6; ++i) {
        double g = b[i];
        for (std::size_t j = 0; j < 6; ++j) g += p[n * 6 + j] * w[j * 6 + i];
        EXPECT_NEAR(y.at(n * 6 + i), sigmoid(g) * p[n * 6 + i], 1e-10);
        EXPECT_LE(y.at(n * 6 + i), p[n * 6 + i]);
        EXPECT_LE(z.at(n * 6 + i), p[n * 6 + i]);
      }
    }
  }
}

TEST(Linear, StructuredAndMaterializedDenseAgree) {
  std::mt19937_64 rng(24);
  LinearSpec spec{.in_dim = 12, .out_dim = 32, .structured = true, .factors = 2, .bias = true};
  const auto numeric = StructuredLinear::random(spec, rng);
  Linear structured(numeric), dense(to_dense(numeric));
  const auto x = Tensor::constant({4, 12}, normal(48, rng));
  Tape t;
  EXPECT_LT(max_abs_diff(structured.forward(t, x).data(), dense.forward(t, x).data()), 1e-10);
  EXPECT_EQ(structured.export_numeric().chains.size(), numeric.chains.size());
}

TEST(Linear, FixedSignDiagonalsAreFrozen) {
  std::mt19937_64 rng(25);
  Linear layer({.in_dim = 8, .out_dim = 8, .structured = true, .factors = 2,
                .diag = DiagMode::kFixedSign},
               rng);
  Registry reg;
  layer.collect("l", reg);
  EXPECT_EQ(reg.trainable.size(), 2u);  // circulants only
  std::size_t frozen = 0;
  for (const auto& s : reg.state) frozen += s.frozen;
  EXPECT_EQ(frozen, 2u);
}

TEST(Pooling, ParseRoundTrip) {
  for (auto p : {Pooling::kMax, Pooling::kAverage, Pooling::kRobust})
    EXPECT_EQ(parse_pooling(to_string(p)), p);
  EXPECT_THROW(parse_pooling("median"), std::invalid_argument);
}

}  // namespace
}  // namespace circnet
