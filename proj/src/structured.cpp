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

#include "circnet/structured.hpp"

#include <algorithm>
#include <cmath>

#include "circnet/fft.hpp"

namespace circnet {

std::string to_string(DiagMode mode) {
  return mode == DiagMode::kLearned ? "learned" : "fixed_sign";
}

DiagMode parse_diag_mode(const std::string& text) {
  if (text == "learned") return DiagMode::kLearned;
  if (text == "fixed_sign") return DiagMode::kFixedSign;
  throw std::invalid_argument("unknown diagonal mode '" + text + "'");
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kNone:
      return "none";
    case Activation::kRelu:
      return "relu";
    case Activation::kSigmoid:
      return "sigmoid";
  }
  return "none";
}

Activation parse_activation(const std::string& text) {
  if (text == "none") return Activation::kNone;
  if (text == "relu") return Activation::kRelu;
  if (text == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation '" + text + "'");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw DimensionError("matrix product shape mismatch");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  }
  return out;
}

DCChain::DCChain(std::vector<DCPair> factors) : factors_(std::move(factors)) {
  if (factors_.empty()) throw DimensionError("DC chain needs at least one pair");
  dim_ = factors_.front().circulant.dim();
  for (const auto& pair : factors_) {
    if (pair.circulant.dim() != dim_ || pair.diagonal.dim() != dim_) {
      throw DimensionError("all DC factors must share one dimension");
    }
  }
  if (dim_ == 0) throw DimensionError("DC chain dimension must be positive");
}

DCChain DCChain::random(std::size_t n, std::size_t m, DiagMode mode,
                        std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(n)));
  std::bernoulli_distribution coin(0.5);
  std::vector<DCPair> pairs(m);
  for (auto& pair : pairs) {
    pair.diagonal.mode = mode;
    pair.diagonal.d.resize(n);
    for (auto& v : pair.diagonal.d) {
      v = mode == DiagMode::kLearned ? 1.0 : (coin(rng) ? 1.0 : -1.0);
    }
    pair.circulant.c.resize(n);
    for (auto& v : pair.circulant.c) v = normal(rng);
  }
  return DCChain(std::move(pairs));
}

DCChain DCChain::identity(std::size_t n, std::size_t m) {
  std::vector<DCPair> pairs(m);
  for (auto& pair : pairs) {
    pair.diagonal.d.assign(n, 1.0);
    pair.circulant.c.assign(n, 0.0);
    pair.circulant.c[0] = 1.0;
  }
  return DCChain(std::move(pairs));
}

std::size_t DCChain::param_count() const {
  std::size_t total = 0;
  for (const auto& pair : factors_) {
    total += pair.diagonal.param_count() + pair.circulant.param_count();
  }
  return total;
}

AdapterPlan plan_adapter(std::size_t in_dim, std::size_t out_dim) {
  if (in_dim == 0 || out_dim == 0) {
    throw DimensionError("layer dimensions must be positive");
  }
  AdapterPlan plan;
  plan.chain_dim = fft::next_power_of_two(in_dim);
  plan.out_dim = out_dim;
  if (out_dim > plan.chain_dim) {
    if (out_dim % plan.chain_dim != 0) {
      throw DimensionError(
          "structured layer " + std::to_string(in_dim) + "->" +
          std::to_string(out_dim) + " needs out_dim to be a multiple of " +
          std::to_string(plan.chain_dim));
    }
    plan.num_chains = out_dim / plan.chain_dim;
  } else {
    plan.num_chains = 1;
  }
  return plan;
}

std::size_t param_count(const LinearSpec& spec) {
  if (!spec.structured) return spec.in_dim * spec.out_dim;
  const AdapterPlan plan = plan_adapter(spec.in_dim, spec.out_dim);
  const std::size_t per_pair =
      plan.chain_dim + (spec.diag == DiagMode::kLearned ? plan.chain_dim : 0);
  return plan.num_chains * spec.factors * per_pair;
}

std::size_t param_count(const DCChain& chain) { return chain.param_count(); }

std::size_t param_count(const StructuredLinear& layer) {
  if (!layer.spec.structured) return layer.dense.data.size();
  std::size_t total = 0;
  for (const auto& chain : layer.chains) total += chain.param_count();
  return total;
}

StructuredLinear StructuredLinear::random(const LinearSpec& spec,
                                          std::mt19937_64& rng) {
  StructuredLinear layer;
  layer.spec = spec;
  if (spec.structured) {
    const AdapterPlan plan = plan_adapter(spec.in_dim, spec.out_dim);
    if (spec.factors == 0) throw DimensionError("factor count must be >= 1");
    for (std::size_t k = 0; k < plan.num_chains; ++k) {
      layer.chains.push_back(
          DCChain::random(plan.chain_dim, spec.factors, spec.diag, rng));
    }
  } else {
    layer.dense = Matrix(spec.in_dim, spec.out_dim);
    // Glorot-uniform.
    const double limit = std::sqrt(6.0 / double(spec.in_dim + spec.out_dim));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (auto& v : layer.dense.data) v = uniform(rng);
  }
  if (spec.bias) layer.bias.assign(spec.out_dim, 0.0);
  layer.validate();
  return layer;
}

void StructuredLinear::validate() const {
  if (spec.bias && bias.size() != spec.out_dim) {
    throw DimensionError("bias length must equal out_dim");
  }
  if (!spec.structured) {
    if (dense.rows != spec.in_dim || dense.cols != spec.out_dim) {
      throw DimensionError("dense weights must be in_dim x out_dim");
    }
    return;
  }
  const AdapterPlan plan = plan_adapter(spec.in_dim, spec.out_dim);
  if (chains.size() != plan.num_chains) {
    throw DimensionError("structured layer has wrong number of chains");
  }
  for (const auto& chain : chains) {
    if (chain.dim() != plan.chain_dim) {
      throw DimensionError("chain dimension does not match adapter plan");
    }
  }
}

std::vector<double> circ_matvec(const CirculantFactor& f,
                                std::span<const double> x) {
  if (x.size() != f.dim()) {
    throw DimensionError("circ_matvec: vector length " +
                         std::to_string(x.size()) + " != " +
                         std::to_string(f.dim()));
  }
  return fft::circular_convolve(f.c, x);
}

std::vector<double> chain_apply(const DCChain& chain,
                                std::span<const double> x) {
  if (chain.num_factors() == 0) throw DimensionError("empty DC chain");
  if (x.size() != chain.dim()) {
    throw DimensionError("chain_apply: vector length " +
                         std::to_string(x.size()) + " != " +
                         std::to_string(chain.dim()));
  }
  std::vector<double> y(x.begin(), x.end());
  std::vector<double> tmp(y.size());
  const auto& factors = chain.factors();
  for (auto it = factors.rbegin(); it != factors.rend(); ++it) {
    fft::CirculantKernel kernel(it->circulant.c);
    kernel.apply(y, tmp);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = it->diagonal.d[i] * tmp[i];
  }
  return y;
}

namespace {

double activate(Activation act, double v) {
  switch (act) {
    case Activation::kRelu:
      return v > 0.0 ? v : 0.0;
    case Activation::kSigmoid:
      return 1.0 / (1.0 + std::exp(-v));
    case Activation::kNone:
      break;
  }
  return v;
}

}  // namespace

Matrix layer_apply(const StructuredLinear& layer, const Matrix& x) {
  const LinearSpec& spec = layer.spec;
  if (x.cols != spec.in_dim) {
    throw DimensionError("layer_apply: input width " + std::to_string(x.cols) +
                         " != in_dim " + std::to_string(spec.in_dim));
  }
  Matrix out(x.rows, spec.out_dim);
  if (!spec.structured) {
    out = multiply(x, layer.dense);
  } else {
    const AdapterPlan plan = plan_adapter(spec.in_dim, spec.out_dim);
    std::vector<double> padded(plan.chain_dim, 0.0);
    for (std::size_t r = 0; r < x.rows; ++r) {
      std::copy(x.row(r).begin(), x.row(r).end(), padded.begin());
      std::size_t col = 0;
      for (const auto& chain : layer.chains) {
        const auto y = chain_apply(chain, padded);
        for (std::size_t i = 0; i < y.size() && col < spec.out_dim; ++i) {
          out(r, col++) = y[i];
        }
      }
    }
  }
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t j = 0; j < out.cols; ++j) {
      double v = out(r, j);
      if (spec.bias) v += layer.bias[j];
      out(r, j) = activate(spec.activation, v);
    }
  }
  return out;
}

Matrix materialize(const CirculantFactor& f) {
  const std::size_t n = f.dim();
  if (n > kMaterializeLimit) throw DimensionError("materialize: n too large");
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m(i, j) = f.c[(i + n - j) % n];
  }
  return m;
}

Matrix materialize(const DCChain& chain) {
  const std::size_t n = chain.dim();
  if (n > kMaterializeLimit) {
    throw DimensionError("materialize: n = " + std::to_string(n) +
                         " exceeds limit " + std::to_string(kMaterializeLimit));
  }
  if (chain.num_factors() == 0) throw DimensionError("empty DC chain");
  // Accumulate from the right: M <- D(i) C(i) M.
  Matrix product = Matrix::identity(n);
  const auto& factors = chain.factors();
  for (auto it = factors.rbegin(); it != factors.rend(); ++it) {
    Matrix next(n, n);
    const auto& c = it->circulant.c;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double cik = c[(i + n - k) % n];
        if (cik == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) next(i, j) += cik * product(k, j);
      }
      const double di = it->diagonal.d[i];
      for (std::size_t j = 0; j < n; ++j) next(i, j) *= di;
    }
    product = std::move(next);
  }
  return product;
}

Matrix materialize_weights(const StructuredLinear& layer) {
  layer.validate();
  if (!layer.spec.structured) return layer.dense;
  const LinearSpec& spec = layer.spec;
  const AdapterPlan plan = plan_adapter(spec.in_dim, spec.out_dim);
  Matrix w(spec.in_dim, spec.out_dim);
  for (std::size_t k = 0; k < layer.chains.size(); ++k) {
    const Matrix m = materialize(layer.chains[k]);
    for (std::size_t r = 0; r < plan.chain_dim; ++r) {
      const std::size_t j = k * plan.chain_dim + r;
      if (j >= spec.out_dim) break;
      for (std::size_t i = 0; i < spec.in_dim; ++i) w(i, j) = m(r, i);
    }
  }
  return w;
}

StructuredLinear to_dense(const StructuredLinear& layer) {
  StructuredLinear out;
  out.spec = layer.spec;
  out.spec.structured = false;
  out.dense = materialize_weights(layer);
  out.bias = layer.bias;
  return out;
}

double compression_rate(std::uint64_t dense_total,
                        std::uint64_t compact_total) {
  if (dense_total == 0) throw std::invalid_argument("dense total is zero");
  return 100.0 * (double(dense_total) - double(compact_total)) /
         double(dense_total);
}

double truncate_decimals(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // Nudge by a relative epsilon so exact decimal inputs survive the scaling.
  return std::trunc(value * scale * (1.0 + 1e-12)) / scale;
}

}  // namespace circnet
