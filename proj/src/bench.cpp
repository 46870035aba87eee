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

#include "circnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include "circnet/fft.hpp"

namespace circnet {
namespace {

using Clock = std::chrono::steady_clock;

// Keeps results observable so the timed loops are not optimized away.
volatile double g_sink = 0.0;

template <typename F>
double median_ns(F&& call, const BenchOptions& o) {
  for (std::size_t i = 0; i < o.warmup; ++i) call();
  // Calibrate how many calls one repetition needs.
  std::size_t inner = 1;
  for (;;) {
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < inner; ++i) call();
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    if (s >= o.min_rep_seconds || inner >= (1u << 20)) break;
    inner *= 2;
  }
  std::vector<double> samples;
  for (std::size_t r = 0; r < o.repetitions; ++r) {
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < inner; ++i) call();
    const double ns =
        std::chrono::duration<double, std::nano>(Clock::now() - t0).count();
    samples.push_back(ns / double(inner));
  }
  std::nth_element(samples.begin(), samples.begin() + samples.size() / 2,
                   samples.end());
  return samples[samples.size() / 2];
}

}  // namespace

void dense_matvec(const std::vector<double>& a, const std::vector<double>& x,
                  std::vector<double>& y) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = a.data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

std::vector<BenchRow> bench_matvec(const BenchOptions& options) {
  if (options.repetitions == 0) throw std::invalid_argument("repetitions must be >= 1");
  std::vector<BenchRow> rows;
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t n : options.sizes) {
    if (!fft::is_power_of_two(n)) {
      throw std::invalid_argument("benchmark size " + std::to_string(n) +
                                  " is not a power of two");
    }
    std::vector<double> c(n), x(n);
    for (auto& v : c) v = normal(rng);
    for (auto& v : x) v = normal(rng);
    std::vector<double> dense(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) dense[i * n + j] = c[(i + n - j) % n];
    }
    fft::CirculantKernel kernel(c);
    std::vector<double> y_dense(n), y_circ(n);

    dense_matvec(dense, x, y_dense);
    kernel.apply(x, y_circ);
    double err = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      err = std::max(err, std::abs(y_dense[i] - y_circ[i]));
      scale = std::max(scale, std::abs(y_dense[i]));
    }
    BenchRow row;
    row.n = n;
    row.max_error = err / scale;
    if (row.max_error > 1e-9) {
      throw std::runtime_error("circulant and dense matvec disagree at n=" +
                               std::to_string(n));
    }
    row.dense_ns = median_ns(
        [&] {
          dense_matvec(dense, x, y_dense);
          g_sink = g_sink + y_dense[0];
        },
        options);
    row.circulant_ns = median_ns(
        [&] {
          kernel.apply(x, y_circ);
          g_sink = g_sink + y_circ[0];
        },
        options);
    row.ratio = row.dense_ns / row.circulant_ns;
    rows.push_back(row);
  }
  return rows;
}

FitTarget parse_fit_target(const std::string& text) {
  if (text == "random") return FitTarget::kRandom;
  if (text == "circulant") return FitTarget::kCirculant;
  if (text == "identity") return FitTarget::kIdentity;
  throw std::invalid_argument("unknown fit target '" + text + "'");
}

std::string to_string(FitTarget t) {
  switch (t) {
    case FitTarget::kRandom: return "random";
    case FitTarget::kCirculant: return "circulant";
    case FitTarget::kIdentity: return "identity";
  }
  return "?";
}

Matrix make_fit_target(FitTarget kind, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x7461726765ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (kind) {
    case FitTarget::kIdentity:
      return Matrix::identity(n);
    case FitTarget::kCirculant: {
      CirculantFactor f;
      f.c.resize(n);
      for (auto& v : f.c) v = normal(rng);
      return materialize(f);
    }
    case FitTarget::kRandom: {
      Matrix a(n, n);
      for (auto& v : a.data) v = normal(rng);
      return a;
    }
  }
  throw std::logic_error("unreachable fit target");
}

FitSummary fit_dc_experiment(std::size_t n, const std::vector<std::size_t>& m_list,
                             FitTarget target, const std::vector<std::uint64_t>& seeds,
                             const FitOptions& base) {
  if (n > 64) throw DimensionError("fit-dc is limited to n <= 64");
  if (seeds.empty()) throw std::invalid_argument("fit-dc needs at least one seed");
  FitSummary summary;
  for (std::size_t m : m_list) {
    double sum = 0.0;
    for (auto seed : seeds) {
      FitOptions o = base;
      o.factors = m;
      o.seed = seed;
      const FitResult r = fit_dc_decomposition(make_fit_target(target, n, seed), o);
      summary.runs.push_back({m, seed, r.final_error});
      sum += r.final_error;
    }
    summary.mean_by_m.emplace_back(m, sum / double(seeds.size()));
  }
  return summary;
}

}  // namespace circnet
