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

#include "circnet/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "circnet/layers.hpp"

namespace circnet {
namespace {

constexpr char kMagic[4] = {'C', '1', 'R', 'C'};

class Writer {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<char>& data() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(char((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}
  std::uint64_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::uint16_t u16() { return std::uint16_t(get(2)); }
  std::uint32_t u32() { return std::uint32_t(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw RecordError(std::string("truncated record: ") + what, pos_);
    }
  }
  bool match(const char* bytes, std::size_t n) {
    need(n, "magic");
    const bool ok = std::equal(bytes, bytes + n, data_.begin() + pos_,
                               [](char a, unsigned char b) { return (unsigned char)a == b; });
    pos_ += n;
    return ok;
  }

 private:
  std::uint64_t get(int n) {
    need(std::size_t(n), "field");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(data_[pos_ + i]) << (8 * i);
    pos_ += std::size_t(n);
    return v;
  }
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

std::vector<double> unit_vectors(std::size_t count, std::size_t dim,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(count * dim);
  for (std::size_t i = 0; i < count; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      out[i * dim + j] = normal(rng);
      sq += out[i * dim + j] * out[i * dim + j];
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] *= inv;
  }
  return out;
}

VideoExample make_example(const DatasetSpec& spec, std::uint64_t id,
                          const std::vector<double>& video_centers,
                          const std::vector<double>& audio_centers) {
  std::mt19937_64 rng(sampling_key(id, spec.seed, 0x67656e));
  std::uniform_int_distribution<std::size_t> frames(spec.min_frames,
                                                    spec.max_frames);
  std::discrete_distribution<std::size_t> cardinality(
      spec.label_cardinality.begin(), spec.label_cardinality.end());
  std::uniform_int_distribution<std::size_t> label(0, spec.num_labels - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  VideoExample ex;
  ex.id = id;
  ex.k_v = spec.k_v;
  ex.k_a = spec.k_a;
  const std::size_t m = frames(rng);
  const std::size_t count = std::min(cardinality(rng) + 1, spec.num_labels);
  while (ex.labels.size() < count) {
    const auto l = std::uint16_t(label(rng));
    if (std::find(ex.labels.begin(), ex.labels.end(), l) == ex.labels.end()) {
      ex.labels.push_back(l);
    }
  }
  std::sort(ex.labels.begin(), ex.labels.end());

  auto mean_center = [&](const std::vector<double>& centers, std::size_t k) {
    std::vector<double> mean(k, 0.0);
    for (auto l : ex.labels) {
      for (std::size_t j = 0; j < k; ++j) mean[j] += centers[l * k + j];
    }
    for (auto& v : mean) v /= double(ex.labels.size());
    return mean;
  };
  const auto video_mean = mean_center(video_centers, spec.k_v);
  const auto audio_mean = mean_center(audio_centers, spec.k_a);

  ex.video.resize(m * spec.k_v);
  ex.audio.resize(m * spec.k_a);
  for (std::size_t f = 0; f < m; ++f) {
    const bool outlier = spec.outlier_rate > 0.0 && unit(rng) < spec.outlier_rate;
    auto fill = [&](std::vector<float>& dst, const std::vector<double>& mean,
                    std::size_t k) {
      const double outlier_std = spec.outlier_scale / std::sqrt(double(k));
      for (std::size_t j = 0; j < k; ++j) {
        double v;
        if (outlier) {
          v = outlier_std * normal(rng);
        } else {
          v = mean[j];
          if (spec.noise > 0.0) v += spec.noise * normal(rng);
        }
        dst[f * k + j] = float(v);
      }
    };
    fill(ex.video, video_mean, spec.k_v);
    fill(ex.audio, audio_mean, spec.k_a);
  }
  return ex;
}

}  // namespace

void VideoExample::validate(std::size_t num_labels) const {
  if (k_v == 0 || video.size() % k_v != 0) {
    throw std::invalid_argument("video frames do not match k_v");
  }
  const std::size_t m = frames();
  if (m == 0) throw std::invalid_argument("video has no frames");
  if (audio.size() != m * k_a) {
    throw std::invalid_argument("audio frame count differs from video");
  }
  if (labels.empty()) throw std::invalid_argument("video has no labels");
  for (auto l : labels) {
    if (num_labels != 0 && l >= num_labels) {
      throw std::invalid_argument("label " + std::to_string(l) + " out of range");
    }
  }
}

void DatasetSpec::validate() const {
  if (num_labels == 0) throw std::invalid_argument("num_labels must be >= 1");
  if (num_labels > 65535) throw std::invalid_argument("num_labels must fit u16");
  if (k_v == 0 || k_v > 65535 || k_a > 65535) {
    throw std::invalid_argument("feature dims must be in [1, 65535]");
  }
  if (min_frames == 0 || min_frames > max_frames || max_frames > 65535) {
    throw std::invalid_argument("frame range must satisfy 1 <= min <= max");
  }
  if (label_cardinality.empty()) {
    throw std::invalid_argument("label cardinality distribution is empty");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < label_cardinality.size(); ++i) {
    const double p = label_cardinality[i];
    if (!(p >= 0.0)) throw std::invalid_argument("negative cardinality weight");
    if (p > 0.0 && i + 1 > num_labels) {
      throw std::invalid_argument("label cardinality exceeds the number of labels");
    }
    total += p;
  }
  if (!(total > 0.0)) throw std::invalid_argument("cardinality weights sum to 0");
  if (noise < 0.0 || outlier_rate < 0.0 || outlier_rate > 1.0 ||
      outlier_scale < 0.0) {
    throw std::invalid_argument("noise, outlier rate or scale out of range");
  }
}

DatasetSpec dataset_spec_from(const Config& cfg) {
  DatasetSpec s;
  s.num_labels = cfg.get_size("data.num_labels", s.num_labels);
  s.k_v = cfg.get_size("data.k_v", s.k_v);
  s.k_a = cfg.get_size("data.k_a", s.k_a);
  s.min_frames = cfg.get_size("data.min_frames", s.min_frames);
  s.max_frames = cfg.get_size("data.max_frames", s.max_frames);
  s.train_videos = cfg.get_size("data.train_videos", s.train_videos);
  s.validation_videos = cfg.get_size("data.validation_videos", s.validation_videos);
  s.label_cardinality = cfg.get_doubles("data.label_cardinality", s.label_cardinality);
  s.noise = cfg.get_double("data.noise", s.noise);
  s.outlier_rate = cfg.get_double("data.outlier_rate", s.outlier_rate);
  s.outlier_scale = cfg.get_double("data.outlier_scale", s.outlier_scale);
  s.seed = cfg.get_u64("data.seed", cfg.get_u64("seed", s.seed));
  s.validate();
  return s;
}

std::vector<double> label_centers(const DatasetSpec& spec, std::size_t dim,
                                  std::uint64_t salt) {
  return unit_vectors(spec.num_labels, dim, sampling_key(spec.seed, salt, 0x63));
}

SplitData generate(const DatasetSpec& spec) {
  spec.validate();
  const auto video_centers = label_centers(spec, spec.k_v, 1);
  const auto audio_centers =
      spec.k_a ? label_centers(spec, spec.k_a, 2) : std::vector<double>{};
  SplitData out;
  out.train.reserve(spec.train_videos);
  out.validation.reserve(spec.validation_videos);
  for (std::size_t i = 0; i < spec.train_videos; ++i) {
    out.train.push_back(make_example(spec, i, video_centers, audio_centers));
  }
  for (std::size_t i = 0; i < spec.validation_videos; ++i) {
    out.validation.push_back(make_example(spec, spec.train_videos + i,
                                          video_centers, audio_centers));
  }
  return out;
}

void write_records(const std::filesystem::path& path,
                   const std::vector<VideoExample>& examples) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kRecordVersion);
  for (const auto& ex : examples) {
    ex.validate(0);
    const std::size_t m = ex.frames();
    if (m > 65535 || ex.labels.size() > 65535) {
      throw std::invalid_argument("record fields exceed u16 range");
    }
    w.u64(ex.id);
    w.u16(std::uint16_t(m));
    w.u16(std::uint16_t(ex.k_v));
    w.u16(std::uint16_t(ex.k_a));
    w.u16(std::uint16_t(ex.labels.size()));
    for (auto l : ex.labels) w.u16(l);
    for (float v : ex.video) w.f32(v);
    for (float v : ex.audio) w.f32(v);
  }
  w.u64(examples.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(w.data().data(), std::streamsize(w.data().size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<VideoExample> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));
  if (!r.match(kMagic, 4)) throw RecordError("bad magic in " + path.string(), 0);
  const std::uint32_t version = r.u32();
  if (version != kRecordVersion) {
    throw RecordError("unsupported record version " + std::to_string(version), 4);
  }
  std::vector<VideoExample> out;
  while (r.remaining() > 8) {
    const std::uint64_t start = r.offset();
    VideoExample ex;
    r.need(16, "header");
    ex.id = r.u64();
    const std::size_t m = r.u16();
    ex.k_v = r.u16();
    ex.k_a = r.u16();
    const std::size_t labels = r.u16();
    r.need(2 * labels + 4 * m * (ex.k_v + ex.k_a), "payload");
    for (std::size_t i = 0; i < labels; ++i) ex.labels.push_back(r.u16());
    ex.video.resize(m * ex.k_v);
    for (auto& v : ex.video) v = r.f32();
    ex.audio.resize(m * ex.k_a);
    for (auto& v : ex.audio) v = r.f32();
    try {
      ex.validate(0);
    } catch (const std::invalid_argument& e) {
      throw RecordError(std::string("malformed record: ") + e.what(), start);
    }
    out.push_back(std::move(ex));
  }
  if (r.remaining() != 8) throw RecordError("missing record count footer", r.offset());
  const std::uint64_t footer_at = r.offset();
  const std::uint64_t count = r.u64();
  if (count != out.size()) {
    throw RecordError("footer count " + std::to_string(count) + " != " +
                          std::to_string(out.size()) + " records",
                      footer_at);
  }
  return out;
}

std::vector<VideoExample> augment_split_halves(const VideoExample& example) {
  const std::size_t m = example.frames();
  if (m < 2) return {example};
  const std::size_t first = (m + 1) / 2;
  auto part = [&](std::size_t begin, std::size_t end, std::uint64_t id) {
    VideoExample half;
    half.id = id;
    half.k_v = example.k_v;
    half.k_a = example.k_a;
    half.labels = example.labels;
    half.video.assign(example.video.begin() + begin * example.k_v,
                      example.video.begin() + end * example.k_v);
    half.audio.assign(example.audio.begin() + begin * example.k_a,
                      example.audio.begin() + end * example.k_a);
    return half;
  };
  return {part(0, first, example.id * 2), part(first, m, example.id * 2 + 1)};
}

std::vector<VideoExample> augment_split_halves(
    const std::vector<VideoExample>& examples) {
  std::vector<VideoExample> out;
  out.reserve(examples.size() * 2);
  for (const auto& ex : examples) {
    for (auto& half : augment_split_halves(ex)) out.push_back(std::move(half));
  }
  return out;
}

std::vector<std::size_t> sample_frame_indices(std::size_t m, std::size_t target) {
  if (m == 0) throw std::invalid_argument("cannot sample frames of an empty video");
  if (target == 0) target = m;
  std::vector<std::size_t> idx(target);
  for (std::size_t i = 0; i < target; ++i) {
    idx[i] = target <= m ? (i * m) / target : i % m;
  }
  return idx;
}

Batch make_batch(const std::vector<const VideoExample*>& examples,
                 std::size_t num_labels, std::size_t frames_sampled,
                 std::uint64_t epoch) {
  if (examples.empty()) throw std::invalid_argument("empty batch");
  const std::size_t k_v = examples.front()->k_v;
  const std::size_t k_a = examples.front()->k_a;
  Batch b;
  b.epoch = epoch;
  b.offsets.push_back(0);
  std::vector<std::vector<std::size_t>> picks;
  for (const auto* ex : examples) {
    if (ex->k_v != k_v || ex->k_a != k_a) {
      throw std::invalid_argument("batch mixes feature dimensions");
    }
    picks.push_back(sample_frame_indices(ex->frames(), frames_sampled));
    b.offsets.push_back(b.offsets.back() + picks.back().size());
  }
  const std::size_t rows = b.offsets.back();
  b.video = Matrix(rows, k_v);
  b.audio = Matrix(rows, k_a);
  b.targets = Matrix(examples.size(), num_labels);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto* ex = examples[i];
    b.ids.push_back(ex->id);
    b.labels.push_back(ex->labels);
    for (auto l : ex->labels) {
      if (l >= num_labels) throw std::invalid_argument("label out of range");
      b.targets(i, l) = 1.0;
    }
    for (std::size_t j = 0; j < picks[i].size(); ++j) {
      const std::size_t row = b.offsets[i] + j, f = picks[i][j];
      for (std::size_t c = 0; c < k_v; ++c) b.video(row, c) = ex->video[f * k_v + c];
      for (std::size_t c = 0; c < k_a; ++c) b.audio(row, c) = ex->audio[f * k_a + c];
    }
  }
  return b;
}

BatchIterator::BatchIterator(const std::vector<VideoExample>& examples,
                             std::size_t batch_size, std::size_t frames_sampled,
                             std::size_t num_labels, std::uint64_t seed,
                             bool shuffle)
    : examples_(examples),
      batch_size_(batch_size),
      frames_sampled_(frames_sampled),
      num_labels_(num_labels),
      seed_(seed),
      shuffle_(shuffle) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (examples.empty()) throw std::invalid_argument("no examples to iterate");
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (examples_.size() + batch_size_ - 1) / batch_size_;
}

std::vector<Batch> BatchIterator::epoch(std::uint64_t epoch) const {
  std::vector<std::size_t> order(examples_.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_) {
    std::mt19937_64 rng(sampling_key(seed_, epoch, 0x73687566));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    std::vector<const VideoExample*> members;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size_); ++i) {
      members.push_back(&examples_[order[i]]);
    }
    out.push_back(make_batch(members, num_labels_, frames_sampled_, epoch));
  }
  return out;
}

}  // namespace circnet
