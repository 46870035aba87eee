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

// Parameter arithmetic for a model configuration, without instantiating it.
//
// Per-layer rows count weight matrices only. Totals add expert biases (and
// the gate bias when context gating has no batch norm) and four stored
// values per batch-normalized feature (gamma, beta, running mean and
// variance).

#ifndef CIRCNET_PARAM_REPORT_HPP_
#define CIRCNET_PARAM_REPORT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "circnet/model.hpp"

namespace circnet {

struct ReportRow {
  std::string layer;
  std::string size;
  std::string activation;
  std::string weight_shape;
  std::uint64_t weights = 0;
  bool counted = true;  // false for rows without weights (Concat)
};

struct ParamReport {
  std::vector<ReportRow> rows;
  std::uint64_t weights = 0;
  std::uint64_t biases = 0;
  std::uint64_t batch_norm = 0;

  std::uint64_t total() const { return weights + biases + batch_norm; }
  const ReportRow* find(const std::string& layer) const;
};

ParamReport build_param_report(const ModelConfig& cfg);

// Fixed-width text table followed by the totals.
std::string format_report(const ParamReport& report);
std::string format_count(std::uint64_t n);  // 8388608 -> "8,388,608"

struct CompressionSummary {
  std::uint64_t dense_total = 0;
  std::uint64_t compact_total = 0;
  double rate = 0.0;            // exact percentage
  double rate_truncated = 0.0;  // one decimal, truncated like the tables
};

CompressionSummary compare_totals(const ParamReport& dense,
                                  const ParamReport& compact);

}  // namespace circnet

#endif  // CIRCNET_PARAM_REPORT_HPP_
