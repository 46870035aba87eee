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

// Tape-based reverse-mode differentiation over small dense tensors.
//
// Tensors are shared handles to a value buffer plus an optional gradient.
// Every op takes the Tape it records onto as its first argument. An op is
// recorded only if one of its inputs requires a gradient; Tape::backward
// replays the recorded closures in exact reverse order.
//
// Most ops treat a tensor as a [rows, cols] matrix where cols is the last
// dimension; rank-1 tensors are a single row.

#ifndef CIRCNET_AUTOGRAD_HPP_
#define CIRCNET_AUTOGRAD_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace circnet::ag {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  const void* tape = nullptr;  // tape that produced this node, if any

  void accumulate(std::size_t i, double g) {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    grad[i] += g;
  }
  std::span<double> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v) { return constant({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t cols() const { return node_->shape.back(); }
  std::size_t rows() const { return size() / cols(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }
  double item() const;
  double at(std::size_t i) const { return node_->value[i]; }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
  friend class Tape;
};

class Tape {
 public:
  // Receives the finished output node (value and gradient).
  using Backward = std::function<void(const Node& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Creates an op output. `backward` is kept only if an input requires a
  // gradient; it must accumulate into the inputs it captured.
  Tensor record(Shape shape, std::vector<double> value,
                std::initializer_list<const Tensor*> inputs, Backward backward);
  Tensor record(Shape shape, std::vector<double> value,
                const std::vector<Tensor>& inputs, Backward backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  void backward(const Tensor& loss);

  // Vector-Jacobian product: seeds `output` with `seed` (same size) and
  // propagates. Gradients on recorded intermediates are cleared first, so
  // the same tape can be replayed with different seeds; leaf gradients keep
  // accumulating.
  void backward(const Tensor& output, std::span<const double> seed);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::shared_ptr<Node> output;
    Backward backward;
  };
  std::vector<Entry> entries_;
};

// ---- linear algebra -------------------------------------------------------

// [N,K] x [K,M] -> [N,M]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// Each row r of x[N,n] becomes circ(c) x_r. c has n entries.
Tensor circ_matvec_batched(Tape& tape, const Tensor& x, const Tensor& c);
// x[N,n] * d[n], broadcast over rows.
Tensor diag_scale(Tape& tape, const Tensor& x, const Tensor& d);
// x[N,M] + b[M], broadcast over rows.
Tensor bias_add(Tape& tape, const Tensor& x, const Tensor& b);

// ---- elementwise ----------------------------------------------------------

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor square(Tape& tape, const Tensor& x);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double s);

// ---- structural -----------------------------------------------------------

// Row-wise softmax over the last dimension.
Tensor softmax(Tape& tape, const Tensor& x);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
// Concatenates along the last dimension; all inputs share the row count.
Tensor concat(Tape& tape, const std::vector<Tensor>& parts);
// Columns [begin, end) of every row.
Tensor slice(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end);
// Appends zero columns up to `cols`.
Tensor pad_cols(Tape& tape, const Tensor& x, std::size_t cols);
// Output row i is input row indices[i].
Tensor gather_rows(Tape& tape, const Tensor& x,
                   std::span<const std::size_t> indices);

// ---- reductions -----------------------------------------------------------

// Segment s covers rows [offsets[s], offsets[s+1]). Element-wise max with
// ties going to the lowest row index.
Tensor reduce_max_over_set(Tape& tape, const Tensor& x,
                           std::span<const std::size_t> offsets);
Tensor segment_mean(Tape& tape, const Tensor& x,
                    std::span<const std::size_t> offsets);
// Row sums: [N,M] -> [N,1].
Tensor row_sum(Tape& tape, const Tensor& x);
Tensor reduce_sum(Tape& tape, const Tensor& x);
Tensor reduce_mean(Tape& tape, const Tensor& x);

// ---- normalization --------------------------------------------------------

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.99;
  double epsilon = 1e-3;

  explicit BatchNormState(std::size_t features = 0)
      : running_mean(features, 0.0), running_var(features, 1.0) {}
};

// Per-feature normalization over rows. In training mode batch statistics are
// used and the running statistics are updated; in eval mode the running
// statistics are used and the op is an affine map.
Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma,
                  const Tensor& beta, BatchNormState& state, bool training);

// L2-normalizes each contiguous block of `block` columns in every row.
Tensor l2_normalize_blocks(Tape& tape, const Tensor& x, std::size_t block,
                           double epsilon = 1e-12);

// ---- learnable pooling ----------------------------------------------------

// x: [R,k] frames, assign: [R,K] soft assignments, centers: [K,k].
// Output [S, K*k]: out_s[c,j] = sum_{r in s} assign[r,c] (x[r,j] - centers[c,j]).
Tensor vlad_aggregate(Tape& tape, const Tensor& x, const Tensor& assign,
                      const Tensor& centers,
                      std::span<const std::size_t> offsets);

inline constexpr double kSigmaFloor = 1e-4;

// Second-order block: out_s[c,j] = sum_r assign[r,c] ((x[r,j]-mu[c,j])^2 -
// sigma[c,j]^2) with sigma clamped at kSigmaFloor. Output [S, K*k].
Tensor fisher_second_order(Tape& tape, const Tensor& x, const Tensor& assign,
                           const Tensor& centers, const Tensor& sigma,
                           std::span<const std::size_t> offsets);

// ---- loss -----------------------------------------------------------------

inline constexpr double kProbEpsilon = 1e-8;

// Mean over rows of the per-row sum of label-wise binary cross-entropies.
// Predictions are clamped to [eps, 1-eps]; targets are constants.
Tensor binary_cross_entropy_multilabel(Tape& tape, const Tensor& probs,
                                       const Tensor& targets);

}  // namespace circnet::ag

#endif  // CIRCNET_AUTOGRAD_HPP_
