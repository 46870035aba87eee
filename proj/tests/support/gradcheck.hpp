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

// Central finite-difference checks shared by the unit tests and the
// acceptance binary.

#ifndef CIRCNET_TESTS_GRADCHECK_HPP_
#define CIRCNET_TESTS_GRADCHECK_HPP_

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "circnet/autograd.hpp"

namespace circnet::testing {

struct GradInstance {
  std::vector<ag::Tensor> inputs;  // leaves whose gradients are checked
  std::function<ag::Tensor(ag::Tape&)> build;
};

struct GradCase {
  std::string name;
  std::function<GradInstance(std::mt19937_64&)> make;
};

// One entry per differentiable op, plus layer-level composites.
const std::vector<GradCase>& gradient_cases();

// Loss is a fixed random projection of the output. Returns
// max over inputs of |analytic - numeric|_inf / max(|analytic|_inf,
// |numeric|_inf, kGradFloor).
inline constexpr double kGradFloor = 1e-3;
double gradient_error(const GradInstance& instance, std::mt19937_64& rng,
                      double h = 1e-5);

}  // namespace circnet::testing

#endif  // CIRCNET_TESTS_GRADCHECK_HPP_
