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

#include "circnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

#include <fmt/format.h>

#include "circnet/checkpoint.hpp"
#include "circnet/gap.hpp"

namespace circnet {
namespace {

void add_to_gap(GapAccumulator& acc, const ag::Tensor& probs, const Batch& batch) {
  const std::size_t labels = probs.cols();
  const auto data = probs.data();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<std::uint32_t> truth(batch.labels[i].begin(), batch.labels[i].end());
    acc.accumulate_dense(data.subspan(i * labels, labels), truth);
  }
}

ag::Tensor targets_of(const Batch& batch) {
  return ag::Tensor::constant({batch.targets.rows, batch.targets.cols},
                              batch.targets.data);
}

class CsvFile {
 public:
  CsvFile(const std::filesystem::path& path, const char* header, bool append) {
    if (path.empty()) return;
    const bool exists = std::filesystem::exists(path);
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    if (!append || !exists) out_ << header << "\n";
  }
  void line(const std::string& text) {
    if (out_.is_open()) out_ << text << "\n" << std::flush;
  }

 private:
  std::ofstream out_;
};

}  // namespace

TrainOptions train_options_from(const Config& cfg) {
  TrainOptions o;
  o.seed = cfg.get_u64("seed", 1);
  o.epochs = cfg.get_size("train.epochs", o.epochs);
  o.batch_size = cfg.get_size("train.batch_size", o.batch_size);
  o.augment = cfg.get_bool("train.augment", o.augment);
  o.eval_every = cfg.get_size("train.eval_every", o.eval_every);
  o.top_k = cfg.get_size("train.top_k", o.top_k);
  o.max_steps = cfg.get_size("train.max_steps", o.max_steps);
  o.adam.learning_rate = cfg.get_double("train.learning_rate", 0.005);
  o.adam.decay_rate = cfg.get_double("train.decay_rate", o.adam.decay_rate);
  o.adam.decay_every = cfg.get_double("train.decay_every", 20000.0);
  o.adam.clip_norm = cfg.get_double("train.clip_norm", o.adam.clip_norm);
  o.adam.beta1 = cfg.get_double("train.beta1", o.adam.beta1);
  o.adam.beta2 = cfg.get_double("train.beta2", o.adam.beta2);
  o.adam.epsilon = cfg.get_double("train.epsilon", o.adam.epsilon);
  if (o.epochs == 0 || o.batch_size == 0) {
    throw ConfigError("train.epochs and train.batch_size must be >= 1");
  }
  if (!(o.adam.learning_rate > 0.0) || !(o.adam.decay_every > 0.0)) {
    throw ConfigError("learning rate and decay_every must be positive");
  }
  return o;
}

EvalResult evaluate(Model& model, const std::vector<VideoExample>& examples,
                    std::size_t batch_size, std::size_t top_k) {
  if (examples.empty()) throw std::invalid_argument("nothing to evaluate");
  const auto& cfg = model.config();
  BatchIterator it(examples, batch_size, cfg.frames_sampled, cfg.num_labels, 0,
                   /*shuffle=*/false);
  GapAccumulator acc(top_k);
  double loss_sum = 0.0;
  for (const Batch& batch : it.epoch(0)) {
    ag::Tape tape;
    const ag::Tensor probs = model.forward(tape, batch, /*training=*/false);
    const ag::Tensor loss =
        ag::binary_cross_entropy_multilabel(tape, probs, targets_of(batch));
    loss_sum += loss.item() * double(batch.size());
    add_to_gap(acc, probs, batch);
  }
  return {acc.gap(), loss_sum / double(examples.size()), examples.size()};
}

TrainResult train(Model& model, const std::vector<VideoExample>& train_set,
                  const std::vector<VideoExample>& validation_set,
                  const TrainOptions& options,
                  const std::optional<std::filesystem::path>& resume) {
  const auto& cfg = model.config();
  const std::vector<VideoExample> augmented =
      options.augment ? augment_split_halves(train_set) : std::vector<VideoExample>{};
  const auto& examples = options.augment ? augmented : train_set;
  BatchIterator it(examples, options.batch_size, cfg.frames_sampled,
                   cfg.num_labels, options.seed);
  const std::size_t per_epoch = it.batches_per_epoch();
  const std::uint64_t total_steps = per_epoch * options.epochs;

  Adam adam(options.adam);
  if (resume) load_checkpoint(*resume, model, &adam);
  const std::uint64_t start = adam.step();
  if (start > total_steps) {
    throw TrainingError("checkpoint step " + std::to_string(start) +
                        " is past the configured schedule");
  }

  const bool files = !options.out_dir.empty();
  if (files) std::filesystem::create_directories(options.out_dir);
  CsvFile metrics(files ? options.out_dir / "metrics.csv" : "",
                  "step,split,gap,loss,examples_seen", resume.has_value());
  CsvFile log(files ? options.out_dir / "train_log.csv" : "",
              "step,loss,lr,examples_per_sec", resume.has_value());

  TrainResult result;
  result.step_losses.assign(start, std::nan(""));
  std::uint64_t step = start;
  double window_loss = 0.0;
  std::size_t window_steps = 0, window_examples = 0;
  GapAccumulator window_gap(options.top_k);
  double epoch_loss = 0.0;
  std::size_t epoch_steps = 0;
  double train_seconds = 0.0;
  std::uint64_t trained_examples = 0;

  auto emit_eval = [&]() {
    if (window_steps > 0) {
      MetricRow row{step, "train", window_gap.gap(), window_loss / double(window_steps),
                    adam.examples_seen()};
      metrics.line(fmt::format("{},{},{:.6f},{:.6f},{}", row.step, row.split, row.gap,
                               row.loss, row.examples_seen));
      result.metrics.push_back(row);
    }
    if (!validation_set.empty()) {
      const EvalResult ev = evaluate(model, validation_set, options.batch_size,
                                     options.top_k);
      MetricRow row{step, "validation", ev.gap, ev.loss, adam.examples_seen()};
      metrics.line(fmt::format("{},{},{:.6f},{:.6f},{}", row.step, row.split, row.gap,
                               row.loss, row.examples_seen));
      result.metrics.push_back(row);
      result.final_validation_gap = ev.gap;
    }
    window_loss = 0.0;
    window_steps = window_examples = 0;
    window_gap = GapAccumulator(options.top_k);
  };

  bool stopped = false;
  for (std::uint64_t epoch = start / per_epoch; epoch < options.epochs && !stopped;
       ++epoch) {
    const auto batches = it.epoch(epoch);
    epoch_loss = 0.0;
    epoch_steps = 0;
    for (std::size_t b = step - epoch * per_epoch; b < batches.size(); ++b) {
      if (options.max_steps && step >= options.max_steps) {
        stopped = true;
        break;
      }
      const Batch& batch = batches[b];
      const auto t0 = std::chrono::steady_clock::now();
      ag::Tape tape;
      const ag::Tensor probs = model.forward(tape, batch, /*training=*/true);
      const ag::Tensor loss =
          ag::binary_cross_entropy_multilabel(tape, probs, targets_of(batch));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingError(fmt::format(
            "non-finite loss at step {} (epoch {}, first video id {})", step + 1,
            epoch, batch.ids.front()));
      }
      for (auto& p : model.parameters()) p.tensor.zero_grad();
      tape.backward(loss);
      const double lr = adam.effective_lr();
      try {
        adam.apply(model.parameters(), batch.size());
      } catch (const NonFiniteGradient& e) {
        throw TrainingError(std::string(e.what()));
      }
      const double dt =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      train_seconds += dt;
      trained_examples += batch.size();
      ++step;

      result.step_losses.push_back(value);
      window_loss += value;
      ++window_steps;
      window_examples += batch.size();
      add_to_gap(window_gap, probs, batch);
      epoch_loss += value;
      ++epoch_steps;
      const double eps = dt > 0 ? double(batch.size()) / dt : 0.0;
      log.line(fmt::format("{},{:.8f},{:.8g},{:.1f}", step, value, lr, eps));
      if (options.verbose) {
        std::cerr << fmt::format("step {} loss {:.6f} lr {:.3g} ex/s {:.0f}\n", step,
                                 value, lr, eps);
      }
      if (options.eval_every && step % options.eval_every == 0) emit_eval();
    }
    if (!stopped && !options.eval_every) emit_eval();
  }
  if (options.eval_every && window_steps > 0) emit_eval();
  if (stopped && !options.eval_every && window_steps > 0) emit_eval();

  // Resuming a finished run trains nothing; still report the model.
  if (step == start && !validation_set.empty()) {
    result.final_validation_gap =
        evaluate(model, validation_set, options.batch_size, options.top_k).gap;
  }
  result.steps = step;
  result.final_train_loss = epoch_steps ? epoch_loss / double(epoch_steps) : 0.0;
  result.examples_per_sec =
      train_seconds > 0 ? double(trained_examples) / train_seconds : 0.0;
  if (files) save_checkpoint(options.out_dir / "checkpoint.bin", model, &adam);
  return result;
}

}  // namespace circnet
