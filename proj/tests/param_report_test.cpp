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

#include "circnet/param_report.hpp"

#include <filesystem>

#include <gtest/gtest.h>

namespace circnet {
namespace {

ParamReport report_for(const std::string& name) {
  const auto path = std::filesystem::path(CIRCNET_SOURCE_DIR) / "configs" / (name + ".conf");
  return build_param_report(model_config_from(Config::load(path)));
}

TEST(ParamReport, BaseModelRows) {
  const auto r = report_for("table1");
  const std::vector<std::pair<std::string, std::uint64_t>> expected{
      {"Video DBoF", 8388608}, {"Audio DBoF", 524288},   {"Video FC", 4194304},
      {"Audio FC", 2097152},   {"MoE Gating", 19773440}, {"MoE Experts", 15818752},
      {"Context Gating", 14915044}};
  for (const auto& [layer, weights] : expected) {
    const auto* row = r.find(layer);
    ASSERT_NE(row, nullptr) << layer;
    EXPECT_EQ(row->weights, weights) << layer;
  }
  EXPECT_EQ(r.find("Video DBoF")->weight_shape, "(1024, 8192)");
  EXPECT_EQ(r.find("MoE Gating")->weight_shape, "(1024, 19310)");
  EXPECT_EQ(r.rows.front().layer, "Video DBoF");
  EXPECT_EQ(r.rows.back().layer, "Context Gating");
  EXPECT_FALSE(r.find("Concat")->counted);
  EXPECT_EQ(r.find("Nope"), nullptr);
}

TEST(ParamReport, VideoOnlyTotalsAndRates) {
  const auto dense = report_for("table2_dense");
  const auto fc = report_for("table2_compact_fc");
  const auto dbof = report_for("table2_compact_dbof");
  EXPECT_EQ(dense.total(), 45359764u);
  EXPECT_EQ(fc.total(), 41181844u);
  EXPECT_EQ(dbof.total(), 36987540u);
  EXPECT_DOUBLE_EQ(compare_totals(dense, fc).rate_truncated, 9.2);
  EXPECT_DOUBLE_EQ(compare_totals(dense, dbof).rate_truncated, 18.4);
  EXPECT_EQ(report_for("table2_compact_fc").find("Video FC")->weight_shape, "1 x DC(8192) m=1");
}

TEST(ParamReport, EmbeddingTotalsAndRates) {
  const std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t, double>> rows{
      {"dbof", 65795732, 59528852, 9.56},
      {"netvlad", 86333460, 50821140, 41.1},
      {"netfv", 122054676, 51030036, 58.1}};
  for (const auto& [emb, dense_total, compact_total, rate] : rows) {
    const auto dense = report_for("table4_" + emb + "_dense");
    const auto compact = report_for("table4_" + emb + "_compact");
    EXPECT_EQ(dense.total(), dense_total) << emb;
    EXPECT_EQ(compact.total(), compact_total) << emb;
    const auto summary = compare_totals(dense, compact);
    if (emb == "dbof") {
      EXPECT_NEAR(summary.rate, rate, 0.05) << emb;
    } else {
      EXPECT_DOUBLE_EQ(summary.rate_truncated, rate) << emb;
    }
  }
}

TEST(ParamReport, IdenticalConfigsCompressNothing) {
  const auto r = report_for("table1");
  const auto s = compare_totals(r, r);
  EXPECT_EQ(s.rate, 0.0);
  EXPECT_EQ(s.dense_total, s.compact_total);
}

TEST(ParamReport, CountFormatting) {
  EXPECT_EQ(format_count(8388608), "8,388,608");
  EXPECT_EQ(format_count(999), "999");
  EXPECT_EQ(format_count(1000), "1,000");
  EXPECT_EQ(format_count(0), "0");
  const auto text = format_report(report_for("table1"));
  EXPECT_NE(text.find("14,915,044"), std::string::npos);
  EXPECT_NE(text.find("65,795,732"), std::string::npos);
}

TEST(ParamReport, CompactMoEAtPaperScaleIsNotRepresentable) {
  auto cfg = model_config_from(Config::load(
      std::filesystem::path(CIRCNET_SOURCE_DIR) / "configs" / "table2_dense.conf"));
  cfg.moe.structured = true;
  EXPECT_THROW(build_param_report(cfg), DimensionError);
}

}  // namespace
}  // namespace circnet
