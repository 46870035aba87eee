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

#include "circnet/recipes.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include <fmt/format.h>

#include "circnet/param_report.hpp"

namespace circnet {
namespace {

std::vector<Recipe> all_recipes() {
  std::vector<Recipe> out;
  out.push_back({"pooling",
                 {{"max", {{"model.video.dbof.pooling", "max"},
                           {"model.audio.dbof.pooling", "max"}}},
                  {"average", {{"model.video.dbof.pooling", "average"},
                               {"model.audio.dbof.pooling", "average"}}},
                  {"robust", {{"model.video.dbof.pooling", "robust"},
                              {"model.video.dbof.robust_samples", "10"},
                              {"model.video.dbof.robust_sample_size", "15"},
                              {"model.audio.dbof.pooling", "robust"},
                              {"model.audio.dbof.robust_samples", "10"},
                              {"model.audio.dbof.robust_sample_size", "15"}}}},
                 {{"data.outlier_rate", "0.1"}}});
  // Two factors: with batch norm right after the FC, a single output-side
  // diagonal is cancelled per feature, so only an inner diagonal can differ.
  const std::vector<std::pair<std::string, std::string>> compact_fc{
      {"model.video.fc.structured", "true"}, {"model.audio.fc.structured", "true"},
      {"model.video.fc.factors", "2"},       {"model.audio.fc.factors", "2"}};
  auto with = [](std::vector<std::pair<std::string, std::string>> a,
                 std::vector<std::pair<std::string, std::string>> b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  out.push_back(
      {"dc_vs_cd",
       {{"dc", with(compact_fc, {{"model.video.fc.diag", "learned"},
                                 {"model.audio.fc.diag", "learned"}})},
        {"cd", with(compact_fc, {{"model.video.fc.diag", "fixed_sign"},
                                 {"model.audio.fc.diag", "fixed_sign"}})}},
       {}});
  out.push_back({"layer_compactness",
                 {{"dense", {}},
                  {"compact_dbof", {{"model.video.dbof.structured", "true"}}},
                  {"compact_fc", {{"model.video.fc.structured", "true"}}},
                  {"compact_moe", {{"model.moe.structured", "true"}}}},
                 {{"model.audio.enabled", "false"}}});
  Recipe sweep{"embedding_sweep", {}, {}};
  for (const char* emb : {"dbof", "netvlad", "netfv"}) {
    for (bool compact : {false, true}) {
      sweep.variants.push_back(
          {std::string(emb) + (compact ? "_compact_fc" : "_dense_fc"),
           {{"model.video.embeddings", emb},
            {"model.audio.embeddings", emb},
            {"model.video.fc.structured", compact ? "true" : "false"},
            {"model.audio.fc.structured", compact ? "true" : "false"}}});
    }
  }
  out.push_back(sweep);
  return out;
}

}  // namespace

const std::vector<std::string>& recipe_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& r : all_recipes()) n.push_back(r.name);
    return n;
  }();
  return names;
}

Recipe find_recipe(const std::string& name) {
  for (auto& r : all_recipes()) {
    if (r.name == name) return r;
  }
  std::string known;
  for (const auto& n : recipe_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown recipe '" + name + "' (known: " + known + ")");
}

Config recipe_config(const Recipe& recipe, const RecipeVariant& variant,
                     const Config& base, std::uint64_t seed) {
  Config cfg = base;
  for (const auto& [k, v] : recipe.defaults) {
    if (!cfg.has(k)) cfg.set(k, v);
  }
  for (const auto& [k, v] : variant.overrides) cfg.set(k, v);
  cfg.set("seed", std::to_string(seed));
  return cfg;
}

std::vector<RecipeRun> run_recipe(const std::string& name,
                                  const RecipeOptions& options) {
  const Recipe recipe = find_recipe(name);
  if (options.seeds.empty()) throw ConfigError("compare needs at least one seed");
  std::ofstream curves, summary;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    curves.open(options.out_dir / (name + "_curves.csv"));
    summary.open(options.out_dir / (name + "_summary.csv"));
    if (!curves || !summary) throw std::runtime_error("cannot write recipe CSVs");
    curves << "variant,seed,step,split,gap,loss,examples_seen\n";
    summary << "variant,seed,parameters,final_gap,final_train_loss,examples_per_sec\n";
  }

  std::vector<RecipeRun> runs;
  for (auto seed : options.seeds) {
    // Data depends on the seed only, so every variant sees the same videos.
    SplitData data;
    const bool own_data = options.train_set == nullptr;
    if (own_data) {
      const Config data_cfg =
          recipe_config(recipe, recipe.variants.front(), options.base, seed);
      data = generate(dataset_spec_from(data_cfg));
    }
    const auto& train_set = own_data ? data.train : *options.train_set;
    const auto& validation_set =
        own_data ? data.validation
                 : (options.validation_set ? *options.validation_set
                                           : std::vector<VideoExample>{});
    for (const auto& variant : recipe.variants) {
      const Config cfg = recipe_config(recipe, variant, options.base, seed);
      const ModelConfig mc = model_config_from(cfg);
      TrainOptions to = train_options_from(cfg);
      to.verbose = options.verbose;
      Model model(mc, seed);
      const TrainResult tr = train(model, train_set, validation_set, to);
      RecipeRun run{variant.name, seed, build_param_report(mc).total(),
                    tr.final_validation_gap, tr.final_train_loss,
                    tr.examples_per_sec, tr.metrics};
      if (options.verbose) {
        std::cerr << fmt::format("{} seed {}: gap {:.4f} train loss {:.4f}\n",
                                 variant.name, seed, run.final_gap,
                                 run.final_train_loss);
      }
      if (curves.is_open()) {
        for (const auto& m : run.metrics) {
          curves << fmt::format("{},{},{},{},{:.6f},{:.6f},{}\n", run.variant, seed,
                                m.step, m.split, m.gap, m.loss, m.examples_seen);
        }
        summary << fmt::format("{},{},{},{:.6f},{:.6f},{:.1f}\n", run.variant, seed,
                               run.parameters, run.final_gap, run.final_train_loss,
                               run.examples_per_sec);
      }
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

double median_metric(const std::vector<RecipeRun>& runs, const std::string& variant,
                     bool use_loss) {
  std::vector<double> v;
  for (const auto& r : runs) {
    if (r.variant == variant) v.push_back(use_loss ? r.final_train_loss : r.final_gap);
  }
  if (v.empty()) throw std::invalid_argument("no runs for variant '" + variant + "'");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace circnet
