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

// Synthetic multi-label frame-feature videos, their on-disk record format,
// and the batch iterator used for training and evaluation.
//
// Record file layout (little-endian):
//   "C1RC" | u32 version
//   per record: u64 id | u16 m | u16 k_v | u16 k_a | u16 label_count |
//               u16 labels[label_count] | f32 video[m*k_v] | f32 audio[m*k_a]
//   u64 record count

#ifndef CIRCNET_DATASET_HPP_
#define CIRCNET_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "circnet/config.hpp"
#include "circnet/structured.hpp"

namespace circnet {

inline constexpr std::uint32_t kRecordVersion = 1;

class RecordError : public std::runtime_error {
 public:
  RecordError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

struct VideoExample {
  std::uint64_t id = 0;
  std::size_t k_v = 0;
  std::size_t k_a = 0;
  std::vector<float> video;  // frames x k_v, row-major
  std::vector<float> audio;  // frames x k_a
  std::vector<std::uint16_t> labels;

  std::size_t frames() const { return k_v ? video.size() / k_v : 0; }
  void validate(std::size_t num_labels) const;
  bool operator==(const VideoExample&) const = default;
};

struct DatasetSpec {
  std::size_t num_labels = 64;
  std::size_t k_v = 16;
  std::size_t k_a = 4;
  std::size_t min_frames = 20;
  std::size_t max_frames = 60;
  std::size_t train_videos = 2000;
  std::size_t validation_videos = 500;
  // P(label count = i + 1).
  std::vector<double> label_cardinality{0.5, 0.3, 0.2};
  double noise = 0.35;         // per-coordinate std of frame noise
  double outlier_rate = 0.0;   // chance a frame is replaced by pure noise
  double outlier_scale = 3.0;  // expected norm of an outlier frame
  std::uint64_t seed = 1;

  void validate() const;
};

// Reads `data.*` keys; data.seed falls back to the top-level seed.
DatasetSpec dataset_spec_from(const Config& cfg);

struct SplitData {
  std::vector<VideoExample> train;
  std::vector<VideoExample> validation;
};

// Deterministic in (spec, seed). Train ids are 0..train-1 and validation ids
// follow, so the splits are disjoint.
SplitData generate(const DatasetSpec& spec);

// Unit-norm per-label centers used by generate(), label-major.
std::vector<double> label_centers(const DatasetSpec& spec, std::size_t dim,
                                  std::uint64_t salt);

void write_records(const std::filesystem::path& path,
                   const std::vector<VideoExample>& examples);
std::vector<VideoExample> read_records(const std::filesystem::path& path);

// First ceil(m/2) frames and the rest, with ids 2*id and 2*id+1. A one-frame
// video comes back unsplit.
std::vector<VideoExample> augment_split_halves(const VideoExample& example);
std::vector<VideoExample> augment_split_halves(
    const std::vector<VideoExample>& examples);

// Frame indices used when a video of m frames is resampled to `target`
// frames: cyclic repetition when short, uniform stride when long. A target of
// zero keeps every frame.
std::vector<std::size_t> sample_frame_indices(std::size_t m, std::size_t target);

struct Batch {
  std::vector<std::uint64_t> ids;
  std::uint64_t epoch = 0;
  std::vector<std::size_t> offsets;  // videos + 1 entries into the frame rows
  Matrix video;                      // total_frames x k_v
  Matrix audio;                      // total_frames x k_a
  Matrix targets;                    // videos x num_labels, 0/1
  std::vector<std::vector<std::uint16_t>> labels;

  std::size_t size() const { return ids.size(); }
};

Batch make_batch(const std::vector<const VideoExample*>& examples,
                 std::size_t num_labels, std::size_t frames_sampled,
                 std::uint64_t epoch);

class BatchIterator {
 public:
  BatchIterator(const std::vector<VideoExample>& examples, std::size_t batch_size,
                std::size_t frames_sampled, std::size_t num_labels,
                std::uint64_t seed, bool shuffle = true);

  // Batches of one epoch, in order. The shuffle depends on (seed, epoch) only.
  std::vector<Batch> epoch(std::uint64_t epoch) const;
  std::size_t batches_per_epoch() const;

 private:
  const std::vector<VideoExample>& examples_;
  std::size_t batch_size_;
  std::size_t frames_sampled_;
  std::size_t num_labels_;
  std::uint64_t seed_;
  bool shuffle_;
};

}  // namespace circnet

#endif  // CIRCNET_DATASET_HPP_
