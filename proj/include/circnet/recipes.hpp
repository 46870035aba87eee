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

// Grouped training runs that share data and seeds:
//
//   pooling            max / average / robust DBoF pooling (outlier frames)
//   dc_vs_cd           compact FC with learned or fixed-sign diagonals
//   layer_compactness  dense / compact DBoF / compact FC / compact MoE, video only
//   embedding_sweep    DBoF, NetVLAD, NetFV each with a dense or compact FC

#ifndef CIRCNET_RECIPES_HPP_
#define CIRCNET_RECIPES_HPP_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "circnet/config.hpp"
#include "circnet/trainer.hpp"

namespace circnet {

struct RecipeVariant {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct Recipe {
  std::string name;
  std::vector<RecipeVariant> variants;
  // Applied only when the base config leaves the key unset.
  std::vector<std::pair<std::string, std::string>> defaults;
};

const std::vector<std::string>& recipe_names();
Recipe find_recipe(const std::string& name);  // throws ConfigError

struct RecipeRun {
  std::string variant;
  std::uint64_t seed = 0;
  std::uint64_t parameters = 0;
  double final_gap = 0.0;
  double final_train_loss = 0.0;
  double examples_per_sec = 0.0;
  std::vector<MetricRow> metrics;
};

struct RecipeOptions {
  Config base;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path out_dir;  // empty: no files
  // Train on these instead of generating data per seed.
  const std::vector<VideoExample>* train_set = nullptr;
  const std::vector<VideoExample>* validation_set = nullptr;
  bool verbose = false;
};

// Config of one member run.
Config recipe_config(const Recipe& recipe, const RecipeVariant& variant,
                     const Config& base, std::uint64_t seed);

// With an out_dir, writes <recipe>_curves.csv and <recipe>_summary.csv.
std::vector<RecipeRun> run_recipe(const std::string& name,
                                  const RecipeOptions& options);

// Median of `final_gap` (or `final_train_loss`) over the seeds of a variant.
double median_metric(const std::vector<RecipeRun>& runs, const std::string& variant,
                     bool use_loss);

}  // namespace circnet

#endif  // CIRCNET_RECIPES_HPP_
