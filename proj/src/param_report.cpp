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

#include <algorithm>
#include <cctype>
#include <sstream>

namespace circnet {
namespace {

std::string shape2(std::size_t a, std::size_t b) {
  return "(" + std::to_string(a) + ", " + std::to_string(b) + ")";
}

std::string shape3(std::size_t a, std::size_t b) {
  return "(-1, " + std::to_string(a) + ", " + std::to_string(b) + ")";
}

std::string batch_shape(std::size_t a) { return "(-1, " + std::to_string(a) + ")"; }

LinearSpec spec_of(std::size_t in, std::size_t out, bool structured,
                   std::size_t factors, DiagMode diag) {
  LinearSpec s;
  s.in_dim = in;
  s.out_dim = out;
  s.structured = structured;
  s.factors = factors;
  s.diag = diag;
  return s;
}

std::string weight_text(const LinearSpec& s) {
  if (!s.structured) return shape2(s.in_dim, s.out_dim);
  const AdapterPlan plan = plan_adapter(s.in_dim, s.out_dim);
  std::string text = std::to_string(plan.num_chains) + " x DC(" +
                     std::to_string(plan.chain_dim) + ") m=" +
                     std::to_string(s.factors);
  if (s.diag == DiagMode::kFixedSign) text += " fixed-sign";
  return text;
}

std::string capitalized(const std::string& s) {
  std::string out = s;
  if (!out.empty()) out[0] = char(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::string embedding_label(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::kDBoF: return "DBoF";
    case EmbeddingKind::kNetVLAD: return "NetVLAD";
    case EmbeddingKind::kNetFV: return "NetFV";
  }
  return "?";
}

}  // namespace

const ReportRow* ParamReport::find(const std::string& layer) const {
  for (const auto& r : rows) {
    if (r.layer == layer) return &r;
  }
  return nullptr;
}

ParamReport build_param_report(const ModelConfig& cfg) {
  cfg.validate();
  ParamReport report;
  auto add = [&](ReportRow row) {
    if (row.counted) report.weights += row.weights;
    report.rows.push_back(std::move(row));
  };
  const std::size_t frames = cfg.frames_sampled;

  // All embeddings first, then the FCs, as in the layer tables.
  for (const auto* m : {&cfg.video, &cfg.audio}) {
    if (!m->enabled) continue;
    const std::string modality = capitalized(m == &cfg.video ? "video" : "audio");
    const bool several = m->embeddings.size() > 1;
    for (std::size_t i = 0; i < m->embeddings.size(); ++i) {
      const auto kind = m->embeddings[i];
      const std::string suffix = several ? " " + std::to_string(i + 1) : "";
      ReportRow row;
      row.layer = modality + " " + embedding_label(kind) + suffix;
      row.activation = shape3(frames, m->feature_dim);
      const std::size_t k = m->feature_dim;
      switch (kind) {
        case EmbeddingKind::kDBoF: {
          const LinearSpec s = spec_of(k, m->dbof.cluster_size, m->dbof.structured,
                                       m->dbof.factors, m->dbof.diag);
          row.size = std::to_string(m->dbof.cluster_size);
          row.weight_shape = weight_text(s);
          row.weights = param_count(s);
          report.batch_norm += 4 * m->dbof.cluster_size;
          break;
        }
        case EmbeddingKind::kNetVLAD: {
          const std::size_t kc = m->netvlad_clusters;
          row.size = std::to_string(kc);
          row.weight_shape = shape2(k, kc) + " + " + shape2(kc, k);
          row.weights = 2 * k * kc;
          report.batch_norm += 4 * kc;
          break;
        }
        case EmbeddingKind::kNetFV: {
          const std::size_t kc = m->netfv_clusters;
          row.size = std::to_string(kc);
          row.weight_shape = shape2(k, kc) + " + 2 x " + shape2(kc, k);
          row.weights = 3 * k * kc;
          report.batch_norm += 4 * kc;
          break;
        }
      }
      add(row);
    }
  }
  for (const auto* m : {&cfg.video, &cfg.audio}) {
    if (!m->enabled) continue;
    const std::string modality = capitalized(m == &cfg.video ? "video" : "audio");
    const bool several = m->embeddings.size() > 1;
    for (std::size_t i = 0; i < m->embeddings.size(); ++i) {
      const std::size_t in = cfg.embedding_dim(*m, m->embeddings[i]);
      const LinearSpec s =
          spec_of(in, m->fc_width, m->fc.structured, m->fc.factors, m->fc.diag);
      ReportRow row;
      row.layer = modality + " FC" + (several ? " " + std::to_string(i + 1) : "");
      row.size = std::to_string(m->fc_width);
      row.activation = batch_shape(in);
      row.weight_shape = weight_text(s);
      row.weights = param_count(s);
      report.batch_norm += 4 * m->fc_width;
      add(row);
    }
  }

  const std::size_t width = cfg.classifier_input();
  const std::size_t labels = cfg.num_labels;
  add({"Concat", "-", batch_shape(width), "-", 0, false});

  const LinearSpec gate = spec_of(width, labels * (cfg.mixtures + 1),
                                  cfg.moe.structured, cfg.moe.factors, cfg.moe.diag);
  add({"MoE Gating", std::to_string(cfg.mixtures), batch_shape(width),
       weight_text(gate), param_count(gate), true});
  const LinearSpec experts = spec_of(width, labels * cfg.mixtures,
                                     cfg.moe.structured, cfg.moe.factors,
                                     cfg.moe.diag);
  add({"MoE Experts", std::to_string(cfg.mixtures), batch_shape(width),
       weight_text(experts), param_count(experts), true});
  report.biases += labels * cfg.mixtures;

  if (cfg.context_gating) {
    const LinearSpec cg = spec_of(labels, labels, cfg.context.structured,
                                  cfg.context.factors, cfg.context.diag);
    add({"Context Gating", "-", batch_shape(labels), weight_text(cg),
         param_count(cg), true});
    if (cfg.context_gating_bn) {
      report.batch_norm += 4 * labels;
    } else {
      report.biases += labels;
    }
  }
  return report;
}

std::string format_count(std::uint64_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i != 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string format_report(const ParamReport& report) {
  const std::vector<std::string> header{"Layer", "Size", "Activation shape",
                                        "Weight matrix shape", "#Weights"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : report.rows) {
    cells.push_back({r.layer, r.size, r.activation, r.weight_shape,
                     r.counted ? format_count(r.weights) : "-"});
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c + 1 == row.size()) {
        out << std::string(width[c] - row[c].size(), ' ') << row[c];
      } else {
        out << row[c] << std::string(width[c] - row[c].size() + 2, ' ');
      }
    }
    out << "\n";
  };
  line(header);
  for (const auto& row : cells) line(row);
  out << "\nweights     " << format_count(report.weights) << "\n"
      << "biases      " << format_count(report.biases) << "\n"
      << "batch norm  " << format_count(report.batch_norm) << "\n"
      << "total       " << format_count(report.total()) << "\n";
  return out.str();
}

CompressionSummary compare_totals(const ParamReport& dense,
                                  const ParamReport& compact) {
  CompressionSummary s;
  s.dense_total = dense.total();
  s.compact_total = compact.total();
  s.rate = compression_rate(s.dense_total, s.compact_total);
  s.rate_truncated = truncate_decimals(s.rate, 1);
  return s;
}

}  // namespace circnet
