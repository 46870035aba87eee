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

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <gtest/gtest.h>

namespace circnet {
namespace {

namespace fs = std::filesystem;

ModelConfig small_model() {
  ModelConfig c;
  c.num_labels = 8;
  c.video.feature_dim = 16;
  c.video.dbof.cluster_size = 32;
  c.video.fc_width = 16;
  c.audio.feature_dim = 4;
  c.audio.dbof.cluster_size = 8;
  c.audio.fc_width = 8;
  c.mixtures = 2;
  return c;
}

SplitData small_data() {
  DatasetSpec spec;
  spec.num_labels = 8;
  spec.min_frames = 4;
  spec.max_frames = 12;
  spec.train_videos = 64;
  spec.validation_videos = 16;
  spec.seed = 5;
  return generate(spec);
}

TrainOptions small_options(std::size_t epochs) {
  TrainOptions o;
  o.epochs = epochs;
  o.batch_size = 16;
  o.adam.learning_rate = 0.01;
  o.adam.decay_every = 1000;
  o.seed = 3;
  return o;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("circnet_trainer_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string first_line(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  return line;
}

TEST(Trainer, SameSeedGivesIdenticalLosses) {
  const auto data = small_data();
  Model a(small_model(), 7), b(small_model(), 7);
  const auto ra = train(a, data.train, data.validation, small_options(2));
  const auto rb = train(b, data.train, data.validation, small_options(2));
  ASSERT_EQ(ra.step_losses.size(), 8u);
  EXPECT_EQ(ra.step_losses, rb.step_losses);
  EXPECT_EQ(ra.final_validation_gap, rb.final_validation_gap);
}

TEST(Trainer, LossDecreasesOnToyData) {
  const auto data = small_data();
  Model m(small_model(), 1);
  const auto r = train(m, data.train, data.validation, small_options(6));
  double first = 0, last = 0;
  for (int i = 0; i < 4; ++i) first += r.step_losses[i];
  for (std::size_t i = r.step_losses.size() - 4; i < r.step_losses.size(); ++i) {
    last += r.step_losses[i];
  }
  EXPECT_LT(last, first);
}

TEST(Trainer, WritesCsvFilesAndValidationRows) {
  const auto data = small_data();
  const auto dir = scratch("csv");
  auto opts = small_options(1);
  opts.out_dir = dir;
  Model m(small_model(), 2);
  const auto r = train(m, data.train, data.validation, opts);
  EXPECT_EQ(first_line(dir / "metrics.csv"), "step,split,gap,loss,examples_seen");
  EXPECT_EQ(first_line(dir / "train_log.csv"), "step,loss,lr,examples_per_sec");
  EXPECT_TRUE(fs::exists(dir / "checkpoint.bin"));
  std::size_t validation_rows = 0;
  for (const auto& row : r.metrics) {
    if (row.split == "validation") {
      ++validation_rows;
      EXPECT_GE(row.gap, 0.0);
      EXPECT_LE(row.gap, 1.0);
      EXPECT_EQ(row.examples_seen, 64u);
    }
  }
  EXPECT_GE(validation_rows, 1u);

  std::ifstream log(dir / "train_log.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) ++lines;
  EXPECT_EQ(lines, 1 + 4u);
  fs::remove_all(dir);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const auto data = small_data();
  Model full(small_model(), 4);
  const auto r_full = train(full, data.train, data.validation, small_options(3));

  const auto dir = scratch("resume");
  auto first = small_options(3);
  first.max_steps = 5;  // stops mid-epoch
  first.out_dir = dir;
  Model part(small_model(), 4);
  train(part, data.train, data.validation, first);

  Model resumed(small_model(), 99);  // different init, overwritten by the load
  const auto r_rest = train(resumed, data.train, data.validation, small_options(3),
                            dir / "checkpoint.bin");
  ASSERT_EQ(r_rest.step_losses.size(), r_full.step_losses.size());
  for (std::size_t i = 5; i < r_full.step_losses.size(); ++i) {
    EXPECT_NEAR(r_rest.step_losses[i], r_full.step_losses[i], 1e-6) << "step " << i + 1;
  }
  EXPECT_NEAR(r_rest.final_validation_gap, r_full.final_validation_gap, 1e-6);
  fs::remove_all(dir);
}

TEST(Trainer, ResumePastScheduleIsRejected) {
  const auto data = small_data();
  const auto dir = scratch("past");
  auto opts = small_options(2);
  opts.out_dir = dir;
  Model m(small_model(), 4);
  train(m, data.train, {}, opts);
  Model again(small_model(), 4);
  EXPECT_THROW(train(again, data.train, {}, small_options(1), dir / "checkpoint.bin"),
               TrainingError);
  fs::remove_all(dir);
}

TEST(Trainer, NonFiniteLossRaises) {
  auto data = small_data();
  for (auto& ex : data.train) ex.video[0] = std::numeric_limits<float>::quiet_NaN();
  Model m(small_model(), 1);
  EXPECT_THROW(train(m, data.train, {}, small_options(1)), TrainingError);
}

TEST(Trainer, EvaluateIsPure) {
  const auto data = small_data();
  Model m(small_model(), 1);
  const auto a = evaluate(m, data.validation, 5, 20);
  const auto b = evaluate(m, data.validation, 16, 20);
  EXPECT_EQ(a.examples, 16u);
  EXPECT_NEAR(a.gap, b.gap, 1e-12);
  EXPECT_NEAR(a.loss, b.loss, 1e-9);
}

}  // namespace
}  // namespace circnet
