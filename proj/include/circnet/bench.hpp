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

// Dense versus FFT circulant matvec timing, and the DC fitting experiment.

#ifndef CIRCNET_BENCH_HPP_
#define CIRCNET_BENCH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "circnet/structured.hpp"

namespace circnet {

struct BenchOptions {
  std::vector<std::size_t> sizes{256, 512, 1024, 2048, 4096, 8192, 16384};
  std::size_t repetitions = 11;
  std::size_t warmup = 3;
  // Each timed repetition loops until at least this long has passed.
  double min_rep_seconds = 2e-4;
  std::uint64_t seed = 1;
};

struct BenchRow {
  std::size_t n = 0;
  double dense_ns = 0.0;      // median per matvec
  double circulant_ns = 0.0;  // median per matvec
  double ratio = 0.0;         // dense / circulant
  double max_error = 0.0;     // circulant vs dense result, relative max-norm
};

// The dense operand is the materialized circulant, so both products are
// cross-checked before timing. Needs 8 n^2 bytes for the largest n.
std::vector<BenchRow> bench_matvec(const BenchOptions& options);

// Dense row-major n x n times x.
void dense_matvec(const std::vector<double>& a, const std::vector<double>& x,
                  std::vector<double>& y);

enum class FitTarget { kRandom, kCirculant, kIdentity };
FitTarget parse_fit_target(const std::string& text);
std::string to_string(FitTarget t);

Matrix make_fit_target(FitTarget kind, std::size_t n, std::uint64_t seed);

struct FitRow {
  std::size_t m = 0;
  std::uint64_t seed = 0;
  double final_error = 0.0;
};

struct FitSummary {
  std::vector<FitRow> runs;
  std::vector<std::pair<std::size_t, double>> mean_by_m;
};

// Every (m, seed) pair fits a fresh target drawn from that seed.
FitSummary fit_dc_experiment(std::size_t n, const std::vector<std::size_t>& m_list,
                             FitTarget target, const std::vector<std::uint64_t>& seeds,
                             const FitOptions& base);

}  // namespace circnet

#endif  // CIRCNET_BENCH_HPP_
