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

#include "circnet/optimizer.hpp"

#include <cmath>

namespace circnet {

double Adam::effective_lr() const {
  return options_.learning_rate *
         std::pow(options_.decay_rate,
                  double(examples_seen_) / options_.decay_every);
}

Adam::Moments& Adam::moments_for(const std::string& name, std::size_t size) {
  for (auto& [key, m] : moments_) {
    if (key == name) return m;
  }
  moments_.push_back({name, Moments{std::vector<double>(size, 0.0),
                                    std::vector<double>(size, 0.0)}});
  return moments_.back().second;
}

double Adam::apply(std::vector<NamedParameter>& params,
                   std::uint64_t batch_examples) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradient("non-finite gradient in '" + p.name +
                                "' at step " + std::to_string(step_));
      }
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double clip =
      (options_.clip_norm > 0.0 && norm > options_.clip_norm)
          ? options_.clip_norm / norm
          : 1.0;

  const double lr = effective_lr();
  const std::uint64_t t = step_ + 1;
  const double bc1 = 1.0 - std::pow(options_.beta1, double(t));
  const double bc2 = 1.0 - std::pow(options_.beta2, double(t));
  for (auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    auto value = p.tensor.mutable_data();
    const auto grad = p.tensor.grad();
    Moments& m = moments_for(p.name, value.size());
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] * clip;
      m.first[i] = options_.beta1 * m.first[i] + (1.0 - options_.beta1) * g;
      m.second[i] = options_.beta2 * m.second[i] + (1.0 - options_.beta2) * g * g;
      const double mhat = m.first[i] / bc1;
      const double vhat = m.second[i] / bc2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
  }
  step_ = t;
  examples_seen_ += batch_examples;
  return norm;
}

void Adam::restore(std::uint64_t step, std::uint64_t examples_seen,
                   std::vector<std::pair<std::string, Moments>> moments) {
  step_ = step;
  examples_seen_ = examples_seen;
  moments_ = std::move(moments);
}

}  // namespace circnet
