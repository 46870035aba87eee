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

// circnet command-line driver. Exit codes: 0 success, 1 usage error,
// 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "circnet/bench.hpp"
#include "circnet/checkpoint.hpp"
#include "circnet/config.hpp"
#include "circnet/fft.hpp"
#include "circnet/dataset.hpp"
#include "circnet/model.hpp"
#include "circnet/param_report.hpp"
#include "circnet/recipes.hpp"
#include "circnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace circnet;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

// Thrown for bad invocations that CLI11 itself cannot see.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigArgs {
  std::string path;
  std::vector<std::string> sets;

  void add_to(CLI::App* app, bool required = false) {
    auto* opt = app->add_option("-c,--config", path, "key = value config file");
    if (required) opt->required();
    app->add_option("--set", sets, "override, key=value (repeatable)");
  }

  Config load() const {
    Config cfg = path.empty() ? Config{} : Config::load(path);
    for (const auto& s : sets) cfg.set_override(s);
    cfg.apply_env();
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void prepare_out(const std::string& out) {
  if (out.empty()) throw UsageError("--out DIR is required");
  fs::create_directories(out);
}

// One config file usually serves several commands, so only keys under the
// prefixes a command owns are worth a warning.
void warn_unused(const Config& cfg, std::initializer_list<const char*> prefixes) {
  for (const auto& key : cfg.unused_keys()) {
    for (const char* p : prefixes) {
      if (key.rfind(p, 0) == 0) {
        std::cerr << "warning: config key '" << key << "' was not used\n";
        break;
      }
    }
  }
}

std::uint64_t fnv1a(const fs::path& path) {
  const auto bytes = read_file(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    out.push_back(std::stoull(item, &used));
    if (used != item.size()) throw UsageError("bad seed list '" + text + "'");
  }
  if (out.empty()) throw UsageError("empty seed list");
  return out;
}

struct DataDir {
  std::vector<VideoExample> train;
  std::vector<VideoExample> validation;
};

DataDir load_data(const std::string& dir, bool need_validation) {
  if (dir.empty()) throw UsageError("--data DIR is required");
  DataDir d;
  d.train = read_records(fs::path(dir) / "train.rec");
  const fs::path val = fs::path(dir) / "validation.rec";
  if (need_validation || fs::exists(val)) d.validation = read_records(val);
  return d;
}

int cmd_generate(const ConfigArgs& args, const std::string& out) {
  Config cfg = args.load();
  const DatasetSpec spec = dataset_spec_from(cfg);
  prepare_out(out);
  const SplitData data = generate(spec);
  write_records(fs::path(out) / "train.rec", data.train);
  write_records(fs::path(out) / "validation.rec", data.validation);
  write_text(fs::path(out) / "resolved.conf", cfg.resolved_snapshot());
  std::size_t frames = 0, labels = 0;
  for (const auto* split : {&data.train, &data.validation}) {
    for (const auto& ex : *split) {
      frames += ex.frames();
      labels += ex.labels.size();
    }
  }
  const std::size_t videos = data.train.size() + data.validation.size();
  std::cout << fmt::format(
      "train       {} videos  checksum {:016x}\n"
      "validation  {} videos  checksum {:016x}\n"
      "labels {}  k_v {}  k_a {}  mean frames {:.1f}  mean labels/video {:.2f}\n",
      data.train.size(), fnv1a(fs::path(out) / "train.rec"), data.validation.size(),
      fnv1a(fs::path(out) / "validation.rec"), spec.num_labels, spec.k_v, spec.k_a,
      videos ? double(frames) / double(videos) : 0.0,
      videos ? double(labels) / double(videos) : 0.0);
  warn_unused(cfg, {"data."});
  return 0;
}

int cmd_train(const ConfigArgs& args, const std::string& data_dir,
              const std::string& out, const std::string& resume, bool verbose) {
  Config cfg = args.load();
  const ModelConfig mc = model_config_from(cfg);
  TrainOptions to = train_options_from(cfg);
  to.verbose = verbose;
  prepare_out(out);
  to.out_dir = out;
  const DataDir data = load_data(data_dir, false);
  write_text(fs::path(out) / "resolved.conf", cfg.resolved_snapshot());
  Model model(mc, to.seed);
  std::optional<fs::path> from;
  if (!resume.empty()) from = fs::path(resume);
  const TrainResult r = train(model, data.train, data.validation, to, from);
  std::cout << fmt::format(
      "steps {}  final train loss {:.6f}  validation GAP@{} {:.4f}  "
      "examples/sec {:.0f}\nparameters {}\n",
      r.steps, r.final_train_loss, to.top_k, r.final_validation_gap,
      r.examples_per_sec, format_count(model.stored_parameter_count()));
  warn_unused(cfg, {"model.", "train."});
  return 0;
}

int cmd_eval(const ConfigArgs& args, const std::string& data_dir,
             const std::string& checkpoint, const std::string& split) {
  if (checkpoint.empty()) throw UsageError("--checkpoint FILE is required");
  if (split != "train" && split != "validation") {
    throw UsageError("--split must be train or validation");
  }
  Config cfg = args.load();
  const ModelConfig mc = model_config_from(cfg);
  const TrainOptions to = train_options_from(cfg);
  if (!fs::exists(checkpoint)) {
    throw std::runtime_error("checkpoint not found: " + checkpoint);
  }
  const DataDir data = load_data(data_dir, split == "validation");
  Model model(mc, to.seed);
  load_checkpoint(checkpoint, model, nullptr);
  const auto& set = split == "train" ? data.train : data.validation;
  const EvalResult r = evaluate(model, set, to.batch_size, to.top_k);
  std::cout << fmt::format("split {}  examples {}  GAP@{} {:.6f}  loss {:.6f}\n",
                           split, r.examples, to.top_k, r.gap, r.loss);
  return 0;
}

int cmd_param_report(const ConfigArgs& args, const std::string& compare_path,
                     const std::string& out) {
  Config cfg = args.load();
  const ParamReport report = build_param_report(model_config_from(cfg));
  std::string text = format_report(report);
  if (!compare_path.empty()) {
    Config other = Config::load(compare_path);
    for (const auto& s : args.sets) other.set_override(s);
    const ParamReport compact = build_param_report(model_config_from(other));
    const CompressionSummary s = compare_totals(report, compact);
    text += fmt::format(
        "\ncompared with {}\ndense total    {}\ncompact total  {}\n"
        "compression    {:.2f}% (table style {:.1f})\n",
        compare_path, format_count(s.dense_total), format_count(s.compact_total),
        s.rate, s.rate_truncated);
  }
  std::cout << text;
  if (!out.empty()) {
    prepare_out(out);
    write_text(fs::path(out) / "param_report.txt", text);
    std::ofstream csv(fs::path(out) / "param_report.csv");
    csv << "layer,size,activation,weight_shape,weights\n";
    for (const auto& r : report.rows) {
      csv << fmt::format("{},{},\"{}\",\"{}\",{}\n", r.layer, r.size, r.activation,
                         r.weight_shape, r.counted ? std::to_string(r.weights) : "");
    }
  }
  return 0;
}

int cmd_bench(const std::vector<std::size_t>& sizes, std::size_t reps,
              std::uint64_t seed, const std::string& out) {
  BenchOptions o;
  if (!sizes.empty()) o.sizes = sizes;
  o.repetitions = reps;
  o.seed = seed;
  if (reps < 1) throw UsageError("--repetitions must be >= 1");
  const auto rows = bench_matvec(o);
  std::string csv = "n,dense_ns,circulant_ns,ratio\n";
  for (const auto& r : rows) {
    csv += fmt::format("{},{:.1f},{:.1f},{:.3f}\n", r.n, r.dense_ns, r.circulant_ns,
                       r.ratio);
  }
  std::cout << csv;
  if (!out.empty()) {
    prepare_out(out);
    write_text(fs::path(out) / "bench_matvec.csv", csv);
  }
  return 0;
}

int cmd_fit_dc(std::size_t n, const std::vector<std::size_t>& m_list,
               const std::string& target, std::size_t steps, const std::string& seeds,
               const std::string& method, const std::string& out) {
  FitOptions o;
  o.steps = steps;
  if (method == "lm") {
    o.method = FitMethod::kLevenbergMarquardt;
  } else if (method == "adam") {
    o.method = FitMethod::kAdam;
  } else {
    throw UsageError("--method must be lm or adam");
  }
  if (!fft::is_power_of_two(n) || n > 64) {
    throw UsageError("--n must be a power of two <= 64");
  }
  const FitSummary s =
      fit_dc_experiment(n, m_list, parse_fit_target(target), parse_seeds(seeds), o);
  std::string csv = "m,final_rel_error\n";
  for (const auto& [m, err] : s.mean_by_m) csv += fmt::format("{},{:.6e}\n", m, err);
  std::cout << csv;
  if (!out.empty()) {
    prepare_out(out);
    write_text(fs::path(out) / "fit_dc.csv", csv);
    std::string runs = "m,seed,final_rel_error\n";
    for (const auto& r : s.runs) {
      runs += fmt::format("{},{},{:.6e}\n", r.m, r.seed, r.final_error);
    }
    write_text(fs::path(out) / "fit_dc_runs.csv", runs);
  }
  return 0;
}

int cmd_compare(const ConfigArgs& args, const std::string& recipe,
                const std::string& seeds, const std::string& data_dir,
                const std::string& out, bool verbose) {
  prepare_out(out);
  RecipeOptions o;
  o.base = args.load();
  o.seeds = parse_seeds(seeds);
  o.out_dir = out;
  o.verbose = verbose;
  DataDir data;
  if (!data_dir.empty()) {
    data = load_data(data_dir, true);
    o.train_set = &data.train;
    o.validation_set = &data.validation;
  }
  const auto runs = run_recipe(recipe, o);
  std::cout << "variant,seed,parameters,final_gap,final_train_loss\n";
  for (const auto& r : runs) {
    std::cout << fmt::format("{},{},{},{:.4f},{:.4f}\n", r.variant, r.seed,
                             r.parameters, r.final_gap, r.final_train_loss);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"circnet: compact diagonal-circulant video classifiers"};
  app.require_subcommand(1);

  ConfigArgs gen_args, train_args, eval_args, report_args, compare_args;
  std::string out, data_dir, resume, checkpoint, split = "validation";
  std::string compare_path, target = "random", seeds = "1,2,3,4,5", method = "lm";
  std::string recipe, compare_seeds = "1,2,3";
  std::vector<std::size_t> sizes, m_list{1, 2, 4, 8, 16};
  std::size_t reps = 11, n = 8, steps = 300;
  std::uint64_t bench_seed = 1;
  bool verbose = false;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  gen_args.add_to(gen);
  gen->add_option("-o,--out", out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a model on a generated dataset");
  train_args.add_to(tr);
  tr->add_option("-d,--data", data_dir, "dataset directory")->required();
  tr->add_option("-o,--out", out, "output directory")->required();
  tr->add_option("--resume", resume, "checkpoint to continue from");
  tr->add_flag("-v,--verbose", verbose, "log every step");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_args.add_to(ev);
  ev->add_option("-d,--data", data_dir, "dataset directory")->required();
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--split", split, "train or validation");

  auto* rep = app.add_subcommand("param-report", "layer table and totals");
  report_args.add_to(rep, true);
  rep->add_option("--compare", compare_path, "compact config to compare against");
  rep->add_option("-o,--out", out, "output directory");

  auto* bench = app.add_subcommand("bench-matvec", "dense vs circulant timing");
  bench->add_option("--sizes", sizes, "powers of two")->delimiter(',');
  bench->add_option("--repetitions", reps, "timed repetitions (median)");
  bench->add_option("--seed", bench_seed, "data seed");
  bench->add_option("-o,--out", out, "output directory");

  auto* fit = app.add_subcommand("fit-dc", "fit DC chains to a target matrix");
  fit->add_option("--n", n, "matrix size");
  fit->add_option("--m", m_list, "factor counts")->delimiter(',');
  fit->add_option("--target", target, "random, circulant or identity");
  fit->add_option("--steps", steps, "optimizer iterations");
  fit->add_option("--seeds", seeds, "comma separated seeds");
  fit->add_option("--method", method, "lm or adam");
  fit->add_option("-o,--out", out, "output directory");

  auto* cmp = app.add_subcommand("compare", "grouped runs of one recipe");
  compare_args.add_to(cmp);
  cmp->add_option("--recipe", recipe,
                  "pooling, dc_vs_cd, layer_compactness or embedding_sweep")
      ->required();
  cmp->add_option("--seeds", compare_seeds, "comma separated seeds");
  cmp->add_option("-d,--data", data_dir, "dataset directory (default: generate)");
  cmp->add_option("-o,--out", out, "output directory")->required();
  cmp->add_flag("-v,--verbose", verbose, "progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*gen) return cmd_generate(gen_args, out);
    if (*tr) return cmd_train(train_args, data_dir, out, resume, verbose);
    if (*ev) return cmd_eval(eval_args, data_dir, checkpoint, split);
    if (*rep) return cmd_param_report(report_args, compare_path, out);
    if (*bench) return cmd_bench(sizes, reps, bench_seed, out);
    if (*fit) return cmd_fit_dc(n, m_list, target, steps, seeds, method, out);
    if (*cmp) {
      return cmd_compare(compare_args, recipe, compare_seeds, data_dir, out, verbose);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
