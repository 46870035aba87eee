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

#include <cmath>
#include <optional>
#include <random>

#include "circnet/autograd.hpp"
#include "circnet/fft.hpp"
#include "circnet/optimizer.hpp"
#include "circnet/structured.hpp"

namespace circnet {
namespace {

struct ChainParams {
  std::vector<ag::Tensor> diagonals;
  std::vector<ag::Tensor> circulants;
  std::vector<NamedParameter> named;

  std::size_t size() const {
    std::size_t total = 0;
    for (const auto& p : named) total += p.tensor.size();
    return total;
  }
  std::vector<double> flatten() const {
    std::vector<double> out;
    for (const auto& p : named) {
      out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
    }
    return out;
  }
  void assign(std::span<const double> flat) {
    std::size_t k = 0;
    for (auto& p : named) {
      for (auto& v : p.tensor.mutable_data()) v = flat[k++];
    }
  }
  void zero_grad() {
    for (auto& p : named) p.tensor.zero_grad();
  }
};

// Rows of the result are (chain e_j)^T, so the tensor holds the transpose of
// the materialized chain.
ag::Tensor chain_transpose(ag::Tape& tape, const ChainParams& p,
                           const ag::Tensor& identity) {
  ag::Tensor x = identity;
  for (std::size_t i = p.circulants.size(); i-- > 0;) {
    x = ag::circ_matvec_batched(tape, x, p.circulants[i]);
    x = ag::diag_scale(tape, x, p.diagonals[i]);
  }
  return x;
}

// Solves (A) x = b in place for symmetric positive definite A (row-major).
bool cholesky_solve(std::vector<double> a, std::vector<double>& b,
                    std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * n + k] * a[j * n + k];
    if (!(diag > 0.0)) return false;
    diag = std::sqrt(diag);
    a[j * n + j] = diag;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = v / diag;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= a[i * n + k] * b[k];
    b[i] = v / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double v = b[i];
    for (std::size_t k = i + 1; k < n; ++k) v -= a[k * n + i] * b[k];
    b[i] = v / a[i * n + i];
  }
  return true;
}

class Fitter {
 public:
  Fitter(const Matrix& target, const FitOptions& options)
      : options_(options), n_(target.rows) {
    std::mt19937_64 rng(options.seed);
    DCChain init = DCChain::random(n_, options.factors, DiagMode::kLearned, rng);
    if (options.near_identity_scale > 0.0) {
      std::normal_distribution<double> noise(
          0.0, options.near_identity_scale / std::sqrt(double(n_)));
      for (auto& pair : init.mutable_factors()) {
        for (auto& v : pair.circulant.c) v = noise(rng);
        pair.circulant.c[0] += 1.0;
      }
    }
    for (std::size_t i = 0; i < init.num_factors(); ++i) {
      const auto& pair = init.factors()[i];
      params_.diagonals.push_back(ag::Tensor::parameter({n_}, pair.diagonal.d));
      params_.circulants.push_back(ag::Tensor::parameter({n_}, pair.circulant.c));
      params_.named.push_back({"d" + std::to_string(i), params_.diagonals.back()});
      params_.named.push_back(
          {"c" + std::to_string(i), params_.circulants.back()});
    }
    for (double v : target.data) target_sq_ += v * v;
    if (target_sq_ == 0.0) throw DimensionError("fit target must be nonzero");
    target_t_ = ag::Tensor::constant({n_, n_}, transpose(target).data);
    identity_ = ag::Tensor::constant({n_, n_}, Matrix::identity(n_).data);
  }

  double relative_error(double sq) const { return std::sqrt(sq / target_sq_); }

  FitResult run() {
    FitResult result;
    result.error_trace.reserve(options_.steps);
    if (options_.method == FitMethod::kAdam) {
      run_adam(result.error_trace);
    } else {
      run_lm(result.error_trace);
    }
    std::vector<DCPair> pairs(options_.factors);
    for (std::size_t i = 0; i < options_.factors; ++i) {
      const auto d = params_.diagonals[i].data();
      const auto c = params_.circulants[i].data();
      pairs[i].diagonal.d.assign(d.begin(), d.end());
      pairs[i].circulant.c.assign(c.begin(), c.end());
    }
    result.chain = DCChain(std::move(pairs));
    return result;
  }

 private:
  void check(double err, std::size_t step) const {
    if (!std::isfinite(err)) {
      throw DivergenceError("DC fit diverged at step " + std::to_string(step),
                            step);
    }
  }

  // Residual sum of squares at the current parameters, without gradients.
  double current_sq() {
    ag::Tape tape;
    const ag::Tensor r =
        ag::sub(tape, chain_transpose(tape, params_, identity_), target_t_);
    double sq = 0.0;
    for (double v : r.data()) sq += v * v;
    return sq;
  }

  void run_adam(std::vector<double>& trace) {
    AdamOptions adam_options;
    adam_options.learning_rate = options_.learning_rate;
    adam_options.decay_rate = options_.final_lr_ratio;
    adam_options.decay_every = double(std::max<std::size_t>(options_.steps, 1));
    adam_options.clip_norm = 0.0;
    Adam adam(adam_options);
    for (std::size_t step = 0; step < options_.steps; ++step) {
      ag::Tape tape;
      const ag::Tensor residual =
          ag::sub(tape, chain_transpose(tape, params_, identity_), target_t_);
      const ag::Tensor loss = ag::reduce_sum(tape, ag::square(tape, residual));
      const double err = relative_error(loss.item());
      check(err, step);
      trace.push_back(err);
      params_.zero_grad();
      tape.backward(loss);
      try {
        adam.apply(params_.named, 1);
      } catch (const NonFiniteGradient&) {
        throw DivergenceError(
            "DC fit gradient became non-finite at step " + std::to_string(step),
            step);
      }
    }
  }

  void run_lm(std::vector<double>& trace) {
    const std::size_t p = params_.size();
    const std::size_t m = n_ * n_;
    double lambda = -1.0;
    for (std::size_t step = 0; step < options_.steps; ++step) {
      ag::Tape tape;
      const ag::Tensor residual =
          ag::sub(tape, chain_transpose(tape, params_, identity_), target_t_);
      const std::vector<double> r(residual.data().begin(), residual.data().end());
      double sq = 0.0;
      for (double v : r) sq += v * v;
      const double err = relative_error(sq);
      check(err, step);
      trace.push_back(err);
      if (err < 1e-13) break;

      // Jacobian rows by one vector-Jacobian product per residual.
      std::vector<double> jac(m * p), seed(m, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        params_.zero_grad();
        seed[i] = 1.0;
        tape.backward(residual, seed);
        seed[i] = 0.0;
        std::size_t col = 0;
        for (const auto& np : params_.named) {
          const auto g = np.tensor.grad();
          for (std::size_t k = 0; k < np.tensor.size(); ++k) {
            jac[i * p + col + k] = g.empty() ? 0.0 : g[k];
          }
          col += np.tensor.size();
        }
      }
      std::vector<double> jtj(p * p, 0.0), jtr(p, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = jac.data() + i * p;
        for (std::size_t a = 0; a < p; ++a) {
          if (row[a] == 0.0) continue;
          jtr[a] += row[a] * r[i];
          for (std::size_t b = 0; b < p; ++b) jtj[a * p + b] += row[a] * row[b];
        }
      }
      if (lambda < 0.0) {
        double max_diag = 0.0;
        for (std::size_t a = 0; a < p; ++a) {
          max_diag = std::max(max_diag, jtj[a * p + a]);
        }
        lambda = 1e-3 * std::max(max_diag, 1e-12);
      }
      const std::vector<double> base = params_.flatten();
      bool accepted = false;
      for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
        std::vector<double> system = jtj;
        for (std::size_t a = 0; a < p; ++a) system[a * p + a] += lambda;
        std::vector<double> delta(jtr);
        if (cholesky_solve(std::move(system), delta, p)) {
          std::vector<double> trial(base);
          for (std::size_t a = 0; a < p; ++a) trial[a] -= delta[a];
          params_.assign(trial);
          const double trial_sq = current_sq();
          if (std::isfinite(trial_sq) && trial_sq < sq) {
            accepted = true;
            lambda = std::max(lambda / 3.0, 1e-15);
            break;
          }
        }
        lambda *= 4.0;
      }
      if (!accepted) params_.assign(base);
    }
  }

  FitOptions options_;
  std::size_t n_;
  ChainParams params_;
  double target_sq_ = 0.0;
  ag::Tensor target_t_;
  ag::Tensor identity_;
};

}  // namespace

FitResult fit_dc_decomposition(const Matrix& target, const FitOptions& options) {
  if (target.cols != target.rows) throw DimensionError("fit target must be square");
  if (!fft::is_power_of_two(target.rows)) {
    throw DimensionError("fit target size must be a power of two");
  }
  if (options.factors == 0) throw DimensionError("factor count must be >= 1");

  Fitter fitter(target, options);
  FitResult result = fitter.run();

  const Matrix fitted = materialize(result.chain);
  double sq = 0.0;
  for (std::size_t i = 0; i < fitted.data.size(); ++i) {
    const double d = fitted.data[i] - target.data[i];
    sq += d * d;
  }
  result.final_error = fitter.relative_error(sq);
  if (!std::isfinite(result.final_error)) {
    throw DivergenceError("DC fit ended non-finite", options.steps);
  }
  return result;
}

}  // namespace circnet
