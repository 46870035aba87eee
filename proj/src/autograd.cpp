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

#include "circnet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "circnet/fft.hpp"

namespace circnet::ag {

using NodePtr = std::shared_ptr<Node>;

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

namespace {

NodePtr make_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  }
  if (shape_size(shape) != values.size()) {
    throw ShapeError("shape " + shape_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

bool wants(const NodePtr& n) { return n->requires_grad; }

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

Shape matrix_shape(std::size_t rows, std::size_t cols) { return {rows, cols}; }

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values), true));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0),
                          requires_grad));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on a non-scalar tensor");
  return node_->value[0];
}

Tensor Tape::record(Shape shape, std::vector<double> value,
                    std::initializer_list<const Tensor*> inputs,
                    Backward backward) {
  bool any = false;
  for (const Tensor* t : inputs) any = any || t->requires_grad();
  auto node = make_node(std::move(shape), std::move(value), any);
  if (any) {
    node->tape = this;
    entries_.push_back({node, std::move(backward)});
  }
  return Tensor(std::move(node));
}

Tensor Tape::record(Shape shape, std::vector<double> value,
                    const std::vector<Tensor>& inputs, Backward backward) {
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  auto node = make_node(std::move(shape), std::move(value), any);
  if (any) {
    node->tape = this;
    entries_.push_back({node, std::move(backward)});
  }
  return Tensor(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (loss.defined() && loss.size() != 1) {
    throw GraphError("backward needs a scalar loss");
  }
  const double one = 1.0;
  backward(loss, std::span<const double>(&one, 1));
}

void Tape::backward(const Tensor& output, std::span<const double> seed) {
  if (!output.defined() || !output.requires_grad() ||
      output.node()->tape != this) {
    throw GraphError("backward on a tensor that is not recorded on this tape");
  }
  if (entries_.empty()) throw GraphError("backward on an empty tape");
  if (seed.size() != output.size()) {
    throw GraphError("backward seed does not match output size");
  }
  for (auto& e : entries_) e.output->grad.clear();
  output.node()->grad.assign(seed.begin(), seed.end());
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(*it->output);
  }
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(b.shape().size() == 2, "matmul: right operand must be rank 2");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  require(b.shape()[0] == k, "matmul: inner dimensions " + std::to_string(k) +
                                 " and " + std::to_string(b.shape()[0]));
  std::vector<double> out(n * m, 0.0);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += aip * brow[j];
    }
  }
  NodePtr an = a.node(), bn = b.node();
  return tape.record(matrix_shape(n, m), std::move(out), {&a, &b},
                     [an, bn, n, k, m](const Node& o) {
                       const auto& g = o.grad;
                       if (wants(an)) {
                         auto da = an->grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             const double* brow = bn->value.data() + p * m;
                             const double* grow = g.data() + i * m;
                             double s = 0.0;
                             for (std::size_t j = 0; j < m; ++j) {
                               s += grow[j] * brow[j];
                             }
                             da[i * k + p] += s;
                           }
                         }
                       }
                       if (wants(bn)) {
                         auto db = bn->grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           const double* grow = g.data() + i * m;
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = an->value[i * k + p];
                             if (aip == 0.0) continue;
                             double* drow = db.data() + p * m;
                             for (std::size_t j = 0; j < m; ++j) {
                               drow[j] += aip * grow[j];
                             }
                           }
                         }
                       }
                     });
}

namespace {

// Splits the transform Z of (a + i b), a and b real, into the transforms of
// a and b at bin k.
inline void split_spectrum(const fft::ComplexVec& z, std::size_t k,
                           fft::Complex& fa, fft::Complex& fb) {
  const std::size_t n = z.size();
  const fft::Complex zk = z[k];
  const fft::Complex zc = std::conj(z[(n - k) % n]);
  fa = 0.5 * (zk + zc);
  fb = fft::Complex(0.0, -0.5) * (zk - zc);
}

void spectra_of_rows(std::span<const double> data, std::size_t rows,
                     std::size_t n, std::vector<fft::ComplexVec>& out) {
  out.assign(rows, fft::ComplexVec(n));
  fft::ComplexVec z(n);
  for (std::size_t r = 0; r < rows; r += 2) {
    const bool pair = r + 1 < rows;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = fft::Complex(data[r * n + i], pair ? data[(r + 1) * n + i] : 0.0);
    }
    fft::transform_inplace(z, false);
    if (!pair) {
      out[r] = z;
      continue;
    }
    for (std::size_t k = 0; k < n; ++k) {
      split_spectrum(z, k, out[r][k], out[r + 1][k]);
    }
  }
}

}  // namespace

Tensor circ_matvec_batched(Tape& tape, const Tensor& x, const Tensor& c) {
  const std::size_t n = c.size();
  require(x.cols() == n, "circ_matvec_batched: row length " +
                             std::to_string(x.cols()) + " != kernel length " +
                             std::to_string(n));
  if (!fft::is_power_of_two(n)) {
    throw fft::SizeError("circulant size must be a power of two");
  }
  const std::size_t rows = x.rows();
  fft::CirculantKernel kernel(c.data());
  std::vector<double> out(rows * n);
  const auto xv = x.data();
  for (std::size_t r = 0; r < rows; r += 2) {
    const bool pair = r + 1 < rows;
    kernel.apply_pair(xv.subspan(r * n, n),
                      pair ? xv.subspan((r + 1) * n, n) : std::span<const double>{},
                      std::span<double>(out).subspan(r * n, n),
                      pair ? std::span<double>(out).subspan((r + 1) * n, n)
                           : std::span<double>{},
                      false);
  }
  NodePtr xn = x.node(), cn = c.node();
  return tape.record(
      x.shape(), std::move(out), {&x, &c}, [xn, cn, rows, n](const Node& o) {
        const std::span<const double> g = o.grad;
        if (wants(xn)) {
          fft::CirculantKernel kern(cn->value);
          auto dx = xn->grad_buffer();
          std::vector<double> ta(n), tb(n);
          for (std::size_t r = 0; r < rows; r += 2) {
            const bool pair = r + 1 < rows;
            kern.apply_pair(g.subspan(r * n, n),
                            pair ? g.subspan((r + 1) * n, n)
                                 : std::span<const double>{},
                            ta, pair ? std::span<double>(tb) : std::span<double>{},
                            true);
            for (std::size_t i = 0; i < n; ++i) dx[r * n + i] += ta[i];
            if (pair) {
              for (std::size_t i = 0; i < n; ++i) dx[(r + 1) * n + i] += tb[i];
            }
          }
        }
        if (wants(cn)) {
          // dL/dc = sum_r corr(x_r, g_r) = ifft(sum_r conj(X_r) G_r).
          std::vector<fft::ComplexVec> xs, gs;
          spectra_of_rows(xn->value, rows, n, xs);
          spectra_of_rows(g, rows, n, gs);
          fft::ComplexVec acc(n, fft::Complex(0.0, 0.0));
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t k = 0; k < n; ++k) {
              acc[k] += std::conj(xs[r][k]) * gs[r][k];
            }
          }
          fft::transform_inplace(acc, true);
          auto dc = cn->grad_buffer();
          for (std::size_t k = 0; k < n; ++k) dc[k] += acc[k].real();
        }
      });
}

Tensor diag_scale(Tape& tape, const Tensor& x, const Tensor& d) {
  const std::size_t n = d.size();
  require(x.cols() == n, "diag_scale: width mismatch");
  const std::size_t rows = x.rows();
  std::vector<double> out(x.size());
  const auto xv = x.data();
  const auto dv = d.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = xv[r * n + i] * dv[i];
  }
  NodePtr xn = x.node(), dn = d.node();
  return tape.record(x.shape(), std::move(out), {&x, &d},
                     [xn, dn, rows, n](const Node& o) {
                       if (wants(xn)) {
                         auto dx = xn->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t i = 0; i < n; ++i) {
                             dx[r * n + i] += o.grad[r * n + i] * dn->value[i];
                           }
                         }
                       }
                       if (wants(dn)) {
                         auto dd = dn->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t i = 0; i < n; ++i) {
                             dd[i] += o.grad[r * n + i] * xn->value[r * n + i];
                           }
                         }
                       }
                     });
}

Tensor bias_add(Tape& tape, const Tensor& x, const Tensor& b) {
  const std::size_t m = b.size();
  require(x.cols() == m, "bias_add: width mismatch");
  const std::size_t rows = x.rows();
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] += b.at(j);
  }
  NodePtr xn = x.node(), bn = b.node();
  return tape.record(x.shape(), std::move(out), {&x, &b},
                     [xn, bn, rows, m](const Node& o) {
                       if (wants(xn)) {
                         auto dx = xn->grad_buffer();
                         for (std::size_t i = 0; i < o.grad.size(); ++i) {
                           dx[i] += o.grad[i];
                         }
                       }
                       if (wants(bn)) {
                         auto db = bn->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < m; ++j) {
                             db[j] += o.grad[r * m + j];
                           }
                         }
                       }
                     });
}

// ---- elementwise ----------------------------------------------------------

Tensor relu(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  NodePtr xn = x.node();
  return tape.record(x.shape(), std::move(out), {&x}, [xn](const Node& o) {
    auto dx = xn->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xn->value[i] > 0.0) dx[i] += o.grad[i];
    }
  });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    // Split by sign so exp never overflows.
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  NodePtr xn = x.node();
  return tape.record(x.shape(), std::move(out), {&x}, [xn](const Node& o) {
    auto dx = xn->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double y = o.value[i];
      dx[i] += o.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor square(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * x.at(i);
  NodePtr xn = x.node();
  return tape.record(x.shape(), std::move(out), {&x}, [xn](const Node& o) {
    auto dx = xn->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += 2.0 * xn->value[i] * o.grad[i];
    }
  });
}

namespace {

Tensor linear_combine(Tape& tape, const Tensor& a, const Tensor& b, double sb) {
  require(a.shape() == b.shape(), "elementwise op: shape " +
                                      shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + sb * b.at(i);
  NodePtr an = a.node(), bn = b.node();
  return tape.record(a.shape(), std::move(out), {&a, &b},
                     [an, bn, sb](const Node& o) {
                       if (wants(an)) {
                         auto da = an->grad_buffer();
                         for (std::size_t i = 0; i < da.size(); ++i) {
                           da[i] += o.grad[i];
                         }
                       }
                       if (wants(bn)) {
                         auto db = bn->grad_buffer();
                         for (std::size_t i = 0; i < db.size(); ++i) {
                           db[i] += sb * o.grad[i];
                         }
                       }
                     });
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return linear_combine(tape, a, b, 1.0);
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return linear_combine(tape, a, b, -1.0);
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  NodePtr an = a.node(), bn = b.node();
  return tape.record(a.shape(), std::move(out), {&a, &b},
                     [an, bn](const Node& o) {
                       if (wants(an)) {
                         auto da = an->grad_buffer();
                         for (std::size_t i = 0; i < da.size(); ++i) {
                           da[i] += o.grad[i] * bn->value[i];
                         }
                       }
                       if (wants(bn)) {
                         auto db = bn->grad_buffer();
                         for (std::size_t i = 0; i < db.size(); ++i) {
                           db[i] += o.grad[i] * an->value[i];
                         }
                       }
                     });
}

Tensor scale(Tape& tape, const Tensor& x, double s) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * x.at(i);
  NodePtr xn = x.node();
  return tape.record(x.shape(), std::move(out), {&x}, [xn, s](const Node& o) {
    auto dx = xn->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += s * o.grad[i];
  });
}

// ---- structural -----------------------------------------------------------

Tensor softmax(Tape& tape, const Tensor& x) {
  const std::size_t rows = x.rows(), m = x.cols();
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * m;
    double* y = out.data() + r * m;
    const double mx = *std::max_element(in, in + m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      y[j] = std::exp(in[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < m; ++j) y[j] /= total;
  }
  NodePtr xn = x.node();
  return tape.record(x.shape(), std::move(out), {&x},
                     [xn, rows, m](const Node& o) {
                       auto dx = xn->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = o.value.data() + r * m;
                         const double* g = o.grad.data() + r * m;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < m; ++j) dot += g[j] * y[j];
                         for (std::size_t j = 0; j < m; ++j) {
                           dx[r * m + j] += y[j] * (g[j] - dot);
                         }
                       }
                     });
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  require(shape_size(shape) == x.size(),
          "reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  NodePtr xn = x.node();
  return tape.record(std::move(shape), std::move(out), {&x},
                     [xn](const Node& o) {
                       auto dx = xn->grad_buffer();
                       for (std::size_t i = 0; i < dx.size(); ++i) {
                         dx[i] += o.grad[i];
                       }
                     });
}

Tensor concat(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat: row count mismatch");
    total += p.cols();
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.data().data() + r * w, w, out.data() + r * total + offset);
    }
    offset += w;
  }
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return tape.record(matrix_shape(rows, total), std::move(out), parts,
                     [nodes, rows, total](const Node& o) {
                       std::size_t off = 0;
                       for (const auto& n : nodes) {
                         const std::size_t w = n->shape.back();
                         if (wants(n)) {
                           auto d = n->grad_buffer();
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t j = 0; j < w; ++j) {
                               d[r * w + j] += o.grad[r * total + off + j];
                             }
                           }
                         }
                         off += w;
                       }
                     });
}

Tensor slice(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t rows = x.rows(), m = x.cols();
  require(begin < end && end <= m, "slice: bad column range");
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data().data() + r * m + begin, w, out.data() + r * w);
  }
  NodePtr xn = x.node();
  return tape.record(matrix_shape(rows, w), std::move(out), {&x},
                     [xn, rows, m, w, begin](const Node& o) {
                       auto dx = xn->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < w; ++j) {
                           dx[r * m + begin + j] += o.grad[r * w + j];
                         }
                       }
                     });
}

Tensor pad_cols(Tape& tape, const Tensor& x, std::size_t cols) {
  const std::size_t rows = x.rows(), m = x.cols();
  require(cols >= m, "pad_cols: target narrower than input");
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data().data() + r * m, m, out.data() + r * cols);
  }
  NodePtr xn = x.node();
  return tape.record(matrix_shape(rows, cols), std::move(out), {&x},
                     [xn, rows, m, cols](const Node& o) {
                       auto dx = xn->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < m; ++j) {
                           dx[r * m + j] += o.grad[r * cols + j];
                         }
                       }
                     });
}

Tensor gather_rows(Tape& tape, const Tensor& x,
                   std::span<const std::size_t> indices) {
  const std::size_t rows = x.rows(), m = x.cols();
  require(!indices.empty(), "gather_rows: no indices");
  std::vector<double> out(indices.size() * m);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < rows, "gather_rows: index out of range");
    std::copy_n(x.data().data() + indices[i] * m, m, out.data() + i * m);
  }
  NodePtr xn = x.node();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return tape.record(matrix_shape(indices.size(), m), std::move(out), {&x},
                     [xn, idx = std::move(idx), m](const Node& o) {
                       auto dx = xn->grad_buffer();
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         for (std::size_t j = 0; j < m; ++j) {
                           dx[idx[i] * m + j] += o.grad[i * m + j];
                         }
                       }
                     });
}

// ---- reductions -----------------------------------------------------------

namespace {

void check_offsets(std::span<const std::size_t> offsets, std::size_t rows) {
  require(offsets.size() >= 2, "segment op: need at least one segment");
  require(offsets.front() == 0 && offsets.back() == rows,
          "segment op: offsets must span all rows");
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    require(offsets[s] < offsets[s + 1], "segment op: empty segment");
  }
}

}  // namespace

Tensor reduce_max_over_set(Tape& tape, const Tensor& x,
                           std::span<const std::size_t> offsets) {
  const std::size_t rows = x.rows(), m = x.cols();
  check_offsets(offsets, rows);
  const std::size_t segments = offsets.size() - 1;
  std::vector<double> out(segments * m);
  std::vector<std::size_t> argmax(segments * m);
  const auto xv = x.data();
  for (std::size_t s = 0; s < segments; ++s) {
    for (std::size_t j = 0; j < m; ++j) {
      std::size_t best = offsets[s];
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
        if (xv[r * m + j] > xv[best * m + j]) best = r;
      }
      argmax[s * m + j] = best;
      out[s * m + j] = xv[best * m + j];
    }
  }
  NodePtr xn = x.node();
  return tape.record(matrix_shape(segments, m), std::move(out), {&x},
                     [xn, argmax = std::move(argmax), m](const Node& o) {
                       auto dx = xn->grad_buffer();
                       for (std::size_t i = 0; i < argmax.size(); ++i) {
                         dx[argmax[i] * m + i % m] += o.grad[i];
                       }
                     });
}

Tensor segment_mean(Tape& tape, const Tensor& x,
                    std::span<const std::size_t> offsets) {
  const std::size_t rows = x.rows(), m = x.cols();
  check_offsets(offsets, rows);
  const std::size_t segments = offsets.size() - 1;
  std::vector<double> out(segments * m, 0.0);
  for (std::size_t s = 0; s < segments; ++s) {
    const double inv = 1.0 / double(offsets[s + 1] - offsets[s]);
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      for (std::size_t j = 0; j < m; ++j) out[s * m + j] += x.at(r * m + j) * inv;
    }
  }
  NodePtr xn = x.node();
  std::vector<std::size_t> offs(offsets.begin(), offsets.end());
  return tape.record(matrix_shape(segments, m), std::move(out), {&x},
                     [xn, offs = std::move(offs), m](const Node& o) {
                       auto dx = xn->grad_buffer();
                       for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
                         const double inv = 1.0 / double(offs[s + 1] - offs[s]);
                         for (std::size_t r = offs[s]; r < offs[s + 1]; ++r) {
                           for (std::size_t j = 0; j < m; ++j) {
                             dx[r * m + j] += o.grad[s * m + j] * inv;
                           }
                         }
                       }
                     });
}

Tensor row_sum(Tape& tape, const Tensor& x) {
  const std::size_t rows = x.rows(), m = x.cols();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) out[r] += x.at(r * m + j);
  }
  NodePtr xn = x.node();
  return tape.record(matrix_shape(rows, 1), std::move(out), {&x},
                     [xn, m](const Node& o) {
                       auto dx = xn->grad_buffer();
                       for (std::size_t i = 0; i < dx.size(); ++i) {
                         dx[i] += o.grad[i / m];
                       }
                     });
}

Tensor reduce_sum(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  NodePtr xn = x.node();
  return tape.record({1}, {total}, {&x}, [xn](const Node& o) {
    auto dx = xn->grad_buffer();
    for (auto& v : dx) v += o.grad[0];
  });
}

Tensor reduce_mean(Tape& tape, const Tensor& x) {
  return scale(tape, reduce_sum(tape, x), 1.0 / double(x.size()));
}

// ---- normalization --------------------------------------------------------

Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma,
                  const Tensor& beta, BatchNormState& state, bool training) {
  const std::size_t rows = x.rows(), m = x.cols();
  require(gamma.size() == m && beta.size() == m,
          "batch_norm: parameter width mismatch");
  require(state.running_mean.size() == m && state.running_var.size() == m,
          "batch_norm: state width mismatch");
  const auto xv = x.data();
  std::vector<double> mean(m, 0.0), inv_std(m, 0.0);
  if (training) {
    std::vector<double> var(m, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < m; ++j) mean[j] += xv[r * m + j];
    }
    for (auto& v : mean) v /= double(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < m; ++j) {
        const double d = xv[r * m + j] - mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      var[j] /= double(rows);
      inv_std[j] = 1.0 / std::sqrt(var[j] + state.epsilon);
      state.running_mean[j] =
          state.momentum * state.running_mean[j] + (1.0 - state.momentum) * mean[j];
      state.running_var[j] =
          state.momentum * state.running_var[j] + (1.0 - state.momentum) * var[j];
    }
  } else {
    for (std::size_t j = 0; j < m; ++j) {
      mean[j] = state.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + state.epsilon);
    }
  }
  std::vector<double> xhat(x.size()), out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t i = r * m + j;
      xhat[i] = (xv[i] - mean[j]) * inv_std[j];
      out[i] = gamma.at(j) * xhat[i] + beta.at(j);
    }
  }
  NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
  return tape.record(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, m,
       training](const Node& o) {
        const auto& g = o.grad;
        if (wants(gn) || wants(bn)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < m; ++j) {
              if (wants(gn)) gn->accumulate(j, g[r * m + j] * xhat[r * m + j]);
              if (wants(bn)) bn->accumulate(j, g[r * m + j]);
            }
          }
        }
        if (!wants(xn)) return;
        auto dx = xn->grad_buffer();
        if (!training) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < m; ++j) {
              dx[r * m + j] += g[r * m + j] * gn->value[j] * inv_std[j];
            }
          }
          return;
        }
        std::vector<double> sum_d(m, 0.0), sum_dx(m, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < m; ++j) {
            const double d = g[r * m + j] * gn->value[j];
            sum_d[j] += d;
            sum_dx[j] += d * xhat[r * m + j];
          }
        }
        const double inv_n = 1.0 / double(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < m; ++j) {
            const std::size_t i = r * m + j;
            const double d = g[i] * gn->value[j];
            dx[i] += inv_std[j] * (d - inv_n * sum_d[j] -
                                   xhat[i] * inv_n * sum_dx[j]);
          }
        }
      });
}

Tensor l2_normalize_blocks(Tape& tape, const Tensor& x, std::size_t block,
                           double epsilon) {
  const std::size_t m = x.cols();
  require(block > 0 && m % block == 0, "l2_normalize_blocks: bad block size");
  const std::size_t blocks = x.size() / block;
  std::vector<double> out(x.size()), norms(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    double ss = 0.0;
    for (std::size_t j = 0; j < block; ++j) {
      const double v = x.at(b * block + j);
      ss += v * v;
    }
    norms[b] = std::sqrt(ss + epsilon);
    for (std::size_t j = 0; j < block; ++j) {
      out[b * block + j] = x.at(b * block + j) / norms[b];
    }
  }
  NodePtr xn = x.node();
  return tape.record(x.shape(), std::move(out), {&x},
                     [xn, norms = std::move(norms), block](const Node& o) {
                       auto dx = xn->grad_buffer();
                       for (std::size_t b = 0; b < norms.size(); ++b) {
                         const double* y = o.value.data() + b * block;
                         const double* g = o.grad.data() + b * block;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < block; ++j) dot += g[j] * y[j];
                         for (std::size_t j = 0; j < block; ++j) {
                           dx[b * block + j] += (g[j] - y[j] * dot) / norms[b];
                         }
                       }
                     });
}

// ---- learnable pooling ----------------------------------------------------

Tensor vlad_aggregate(Tape& tape, const Tensor& x, const Tensor& assign,
                      const Tensor& centers,
                      std::span<const std::size_t> offsets) {
  const std::size_t rows = x.rows(), k = x.cols();
  const std::size_t clusters = assign.cols();
  require(assign.rows() == rows, "vlad_aggregate: assignment rows mismatch");
  require(centers.size() == clusters * k,
          "vlad_aggregate: centers must be clusters x feature_dim");
  check_offsets(offsets, rows);
  const std::size_t segments = offsets.size() - 1;
  const std::size_t width = clusters * k;
  std::vector<double> out(segments * width, 0.0);
  const auto xv = x.data(), av = assign.data(), mu = centers.data();
  for (std::size_t s = 0; s < segments; ++s) {
    double* os = out.data() + s * width;
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      for (std::size_t c = 0; c < clusters; ++c) {
        const double a = av[r * clusters + c];
        for (std::size_t j = 0; j < k; ++j) {
          os[c * k + j] += a * (xv[r * k + j] - mu[c * k + j]);
        }
      }
    }
  }
  NodePtr xn = x.node(), an = assign.node(), cn = centers.node();
  std::vector<std::size_t> offs(offsets.begin(), offsets.end());
  return tape.record(
      matrix_shape(segments, width), std::move(out), {&x, &assign, &centers},
      [xn, an, cn, offs = std::move(offs), clusters, k, width](const Node& o) {
        for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
          const double* g = o.grad.data() + s * width;
          for (std::size_t r = offs[s]; r < offs[s + 1]; ++r) {
            for (std::size_t c = 0; c < clusters; ++c) {
              const double a = an->value[r * clusters + c];
              double da = 0.0;
              for (std::size_t j = 0; j < k; ++j) {
                const double gij = g[c * k + j];
                if (wants(xn)) xn->accumulate(r * k + j, a * gij);
                if (wants(cn)) cn->accumulate(c * k + j, -a * gij);
                da += gij * (xn->value[r * k + j] - cn->value[c * k + j]);
              }
              if (wants(an)) an->accumulate(r * clusters + c, da);
            }
          }
        }
      });
}

Tensor fisher_second_order(Tape& tape, const Tensor& x, const Tensor& assign,
                           const Tensor& centers, const Tensor& sigma,
                           std::span<const std::size_t> offsets) {
  const std::size_t rows = x.rows(), k = x.cols();
  const std::size_t clusters = assign.cols();
  require(assign.rows() == rows, "fisher_second_order: assignment rows");
  require(centers.size() == clusters * k && sigma.size() == clusters * k,
          "fisher_second_order: centers/sigma must be clusters x feature_dim");
  check_offsets(offsets, rows);
  const std::size_t segments = offsets.size() - 1;
  const std::size_t width = clusters * k;
  std::vector<double> out(segments * width, 0.0);
  const auto xv = x.data(), av = assign.data(), mu = centers.data();
  const auto sv = sigma.data();
  for (std::size_t s = 0; s < segments; ++s) {
    double* os = out.data() + s * width;
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      for (std::size_t c = 0; c < clusters; ++c) {
        const double a = av[r * clusters + c];
        for (std::size_t j = 0; j < k; ++j) {
          const double sd = std::max(sv[c * k + j], kSigmaFloor);
          const double d = xv[r * k + j] - mu[c * k + j];
          os[c * k + j] += a * (d * d - sd * sd);
        }
      }
    }
  }
  NodePtr xn = x.node(), an = assign.node(), cn = centers.node(),
          sn = sigma.node();
  std::vector<std::size_t> offs(offsets.begin(), offsets.end());
  return tape.record(
      matrix_shape(segments, width), std::move(out),
      {&x, &assign, &centers, &sigma},
      [xn, an, cn, sn, offs = std::move(offs), clusters, k,
       width](const Node& o) {
        for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
          const double* g = o.grad.data() + s * width;
          for (std::size_t r = offs[s]; r < offs[s + 1]; ++r) {
            for (std::size_t c = 0; c < clusters; ++c) {
              const double a = an->value[r * clusters + c];
              double da = 0.0;
              for (std::size_t j = 0; j < k; ++j) {
                const double gij = g[c * k + j];
                const double raw = sn->value[c * k + j];
                const double sd = std::max(raw, kSigmaFloor);
                const double d = xn->value[r * k + j] - cn->value[c * k + j];
                if (wants(xn)) xn->accumulate(r * k + j, 2.0 * a * d * gij);
                if (wants(cn)) cn->accumulate(c * k + j, -2.0 * a * d * gij);
                if (wants(sn) && raw > kSigmaFloor) {
                  sn->accumulate(c * k + j, -2.0 * a * sd * gij);
                }
                da += gij * (d * d - sd * sd);
              }
              if (wants(an)) an->accumulate(r * clusters + c, da);
            }
          }
        }
      });
}

// ---- loss -----------------------------------------------------------------

Tensor binary_cross_entropy_multilabel(Tape& tape, const Tensor& probs,
                                       const Tensor& targets) {
  require(probs.size() == targets.size(), "bce: prediction/target mismatch");
  const std::size_t rows = probs.rows();
  const double inv_rows = 1.0 / double(rows);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs.at(i), kProbEpsilon, 1.0 - kProbEpsilon);
    const double t = targets.at(i);
    total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  NodePtr pn = probs.node(), tn = targets.node();
  return tape.record({1}, {total * inv_rows}, {&probs},
                     [pn, tn, inv_rows](const Node& o) {
                       auto dp = pn->grad_buffer();
                       const double g = o.grad[0] * inv_rows;
                       for (std::size_t i = 0; i < dp.size(); ++i) {
                         const double p = pn->value[i];
                         if (p < kProbEpsilon || p > 1.0 - kProbEpsilon) continue;
                         const double t = tn->value[i];
                         dp[i] += g * (-t / p + (1.0 - t) / (1.0 - p));
                       }
                     });
}

}  // namespace circnet::ag
