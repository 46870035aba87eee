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

// Diagonal and circulant factors, DC chains, and rectangular linear layers
// built from them.
//
// A DC chain of m pairs represents the square operator
//
//   A = D(1) C(1) D(2) C(2) ... D(m) C(m)
//
// and is applied right to left: C(m) touches x first, D(1) last. Rectangular
// layers are obtained by concatenating several chains (out > in) or slicing
// the first out coordinates of one chain (out <= in).

#ifndef CIRCNET_STRUCTURED_HPP_
#define CIRCNET_STRUCTURED_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace circnet {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DiagMode { kLearned, kFixedSign };
enum class Activation { kNone, kRelu, kSigmoid };

std::string to_string(DiagMode mode);
DiagMode parse_diag_mode(const std::string& text);
std::string to_string(Activation act);
Activation parse_activation(const std::string& text);

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * cols + j];
  }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
};

Matrix multiply(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

struct CirculantFactor {
  std::vector<double> c;  // first column

  std::size_t dim() const { return c.size(); }
  std::size_t param_count() const { return c.size(); }
};

struct DiagonalFactor {
  std::vector<double> d;
  DiagMode mode = DiagMode::kLearned;

  std::size_t dim() const { return d.size(); }
  std::size_t param_count() const {
    return mode == DiagMode::kLearned ? d.size() : 0;
  }
};

struct DCPair {
  DiagonalFactor diagonal;
  CirculantFactor circulant;
};

class DCChain {
 public:
  DCChain() = default;
  explicit DCChain(std::vector<DCPair> factors);

  // c ~ Normal(0, 1/n); learned diagonals start at 1, fixed-sign diagonals
  // are drawn uniformly from {-1, +1}.
  static DCChain random(std::size_t n, std::size_t m, DiagMode mode,
                        std::mt19937_64& rng);
  static DCChain identity(std::size_t n, std::size_t m = 1);

  std::size_t dim() const { return dim_; }
  std::size_t num_factors() const { return factors_.size(); }
  const std::vector<DCPair>& factors() const { return factors_; }
  std::vector<DCPair>& mutable_factors() { return factors_; }

  std::size_t param_count() const;

 private:
  std::vector<DCPair> factors_;
  std::size_t dim_ = 0;
};

// Layer-level configuration shared by the numeric layer here and the
// trainable layer in the model code.
struct LinearSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  bool structured = false;
  std::size_t factors = 1;
  DiagMode diag = DiagMode::kLearned;
  bool bias = false;
  Activation activation = Activation::kNone;
};

// How a structured layer maps in_dim onto square chains of size chain_dim.
struct AdapterPlan {
  std::size_t chain_dim = 0;   // next power of two >= in_dim
  std::size_t num_chains = 0;  // outputs concatenated, then sliced
  std::size_t out_dim = 0;
};

AdapterPlan plan_adapter(std::size_t in_dim, std::size_t out_dim);

// Weight-matrix parameters only (no bias, no batch norm).
std::size_t param_count(const LinearSpec& spec);
std::size_t param_count(const DCChain& chain);

struct StructuredLinear {
  LinearSpec spec;
  Matrix dense;                // in_dim x out_dim, used when !spec.structured
  std::vector<DCChain> chains;  // used when spec.structured
  std::vector<double> bias;    // out_dim entries, empty when !spec.bias

  static StructuredLinear random(const LinearSpec& spec, std::mt19937_64& rng);
  void validate() const;
};

std::size_t param_count(const StructuredLinear& layer);

std::vector<double> circ_matvec(const CirculantFactor& f,
                                std::span<const double> x);
std::vector<double> chain_apply(const DCChain& chain, std::span<const double> x);

// Rows of X are inputs; returns rows of length out_dim.
Matrix layer_apply(const StructuredLinear& layer, const Matrix& x);

inline constexpr std::size_t kMaterializeLimit = 4096;

// Dense n x n operator equal to the chain product.
Matrix materialize(const DCChain& chain);
Matrix materialize(const CirculantFactor& f);
// Dense in_dim x out_dim weight W with layer(x) = x W (+ bias).
Matrix materialize_weights(const StructuredLinear& layer);
// Same layer with Dense backing holding materialize_weights.
StructuredLinear to_dense(const StructuredLinear& layer);

// 100 * (dense - compact) / dense.
double compression_rate(std::uint64_t dense_total, std::uint64_t compact_total);
// Truncates toward zero at the given number of decimals, which is how the
// published tables report rates (18.457 prints as 18.4).
double truncate_decimals(double value, int decimals);

enum class FitMethod {
  kAdam,                // first-order, uses learning_rate / final_lr_ratio
  kLevenbergMarquardt,  // damped Gauss-Newton on the residual matrix
};

struct FitOptions {
  FitMethod method = FitMethod::kAdam;
  std::size_t factors = 1;
  std::size_t steps = 3000;
  double learning_rate = 0.02;
  // Learning rate decays geometrically to learning_rate * final_lr_ratio.
  double final_lr_ratio = 1e-3;
  // When positive, each circulant starts at e_0 + Normal(0, (scale^2)/n)
  // instead of the layer initialization, so deep chains start near identity.
  double near_identity_scale = 0.0;
  std::uint64_t seed = 1;
};

struct FitResult {
  DCChain chain;
  std::vector<double> error_trace;  // relative Frobenius error per step
  double final_error = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Gradient fit of a learned DC chain to the square target A, minimizing
// ||materialize(chain) - A||_F / ||A||_F. `steps` counts optimizer
// iterations for either method; the trace holds the error before each one.
FitResult fit_dc_decomposition(const Matrix& target, const FitOptions& options);

}  // namespace circnet

#endif  // CIRCNET_STRUCTURED_HPP_
