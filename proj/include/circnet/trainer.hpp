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

#ifndef CIRCNET_TRAINER_HPP_
#define CIRCNET_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "circnet/config.hpp"
#include "circnet/dataset.hpp"
#include "circnet/model.hpp"
#include "circnet/optimizer.hpp"

namespace circnet {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  AdamOptions adam;
  std::uint64_t seed = 1;
  bool augment = false;        // split every training video into two halves
  std::size_t eval_every = 0;  // steps; 0 evaluates at the end of each epoch
  std::size_t top_k = 20;
  std::size_t max_steps = 0;   // stop after this many steps; 0 = no limit
  bool verbose = false;        // per-step log lines on stderr
  // Empty disables all file output.
  std::filesystem::path out_dir;
};

// Reads `train.*` keys plus the top-level seed.
TrainOptions train_options_from(const Config& cfg);

struct MetricRow {
  std::uint64_t step = 0;
  std::string split;  // "train" or "validation"
  double gap = 0.0;
  double loss = 0.0;
  std::uint64_t examples_seen = 0;
};

struct EvalResult {
  double gap = 0.0;
  double loss = 0.0;
  std::size_t examples = 0;
};

struct TrainResult {
  std::vector<double> step_losses;  // index = step - 1 (absolute)
  std::vector<MetricRow> metrics;
  double final_validation_gap = 0.0;
  double final_train_loss = 0.0;  // mean over the last epoch's steps
  double examples_per_sec = 0.0;
  std::uint64_t steps = 0;
};

EvalResult evaluate(Model& model, const std::vector<VideoExample>& examples,
                    std::size_t batch_size, std::size_t top_k);

// Trains in place. When `resume` names a checkpoint, model and optimizer
// state are loaded and training continues at the stored step. With an
// out_dir, writes metrics.csv, train_log.csv and checkpoint.bin there.
TrainResult train(Model& model, const std::vector<VideoExample>& train_set,
                  const std::vector<VideoExample>& validation_set,
                  const TrainOptions& options,
                  const std::optional<std::filesystem::path>& resume = {});

}  // namespace circnet

#endif  // CIRCNET_TRAINER_HPP_
