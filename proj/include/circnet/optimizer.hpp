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

#ifndef CIRCNET_OPTIMIZER_HPP_
#define CIRCNET_OPTIMIZER_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "circnet/autograd.hpp"

namespace circnet {

struct NamedParameter {
  std::string name;
  ag::Tensor tensor;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamOptions {
  double learning_rate = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_rate = 0.8;
  double decay_every = 4'000'000.0;  // examples
  double clip_norm = 1.0;           // <= 0 disables clipping
};

// Adam with a continuous exponential learning-rate decay keyed on examples
// seen: lr = lr0 * decay_rate^(examples_seen / decay_every).
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  const AdamOptions& options() const { return options_; }
  std::uint64_t step() const { return step_; }
  std::uint64_t examples_seen() const { return examples_seen_; }
  double effective_lr() const;

  // Clips the global gradient norm, applies one update to every parameter
  // holding a gradient, then advances step and examples_seen. Throws
  // NonFiniteGradient (leaving parameters untouched) if any gradient is not
  // finite. Returns the pre-clipping global norm.
  double apply(std::vector<NamedParameter>& params, std::uint64_t batch_examples);

  // Moment buffers by parameter name, for checkpoints.
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };
  const std::vector<std::pair<std::string, Moments>>& moments() const {
    return moments_;
  }
  void restore(std::uint64_t step, std::uint64_t examples_seen,
               std::vector<std::pair<std::string, Moments>> moments);

 private:
  Moments& moments_for(const std::string& name, std::size_t size);

  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::uint64_t examples_seen_ = 0;
  std::vector<std::pair<std::string, Moments>> moments_;
};

}  // namespace circnet

#endif  // CIRCNET_OPTIMIZER_HPP_
