// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tempocoh/taxonomy.hpp"
#include "tempocoh/tc_ops.hpp"
#include "tempocoh/tensor.hpp"

namespace tempocoh {

struct VideoRecord {
  std::string video_id;
  Tensor video_feats;  // T x Dv
  Tensor audio_feats;  // T x Da
  std::vector<int64_t> scene_starts;
  LabelSet truth;
};

struct SynthConfig {
  int64_t num_videos = 64;
  int64_t min_frames = 8;
  int64_t max_frames = 16;
  int64_t min_scenes = 1;
  int64_t max_scenes = 3;
  int64_t video_dim = 16;
  int64_t audio_dim = 4;
  double sigma = 0.05;              // frame noise around class centroids
  double audio_correlation = 1.0;   // 1 = audio mirrors the class, 0 = pure noise
  uint64_t seed = 1;

  void validate() const;
};

struct DatasetHeader {
  static constexpr char kMagic[4] = {'T', 'C', 'D', '1'};
  uint32_t version = 1;
  int64_t video_dim = 0;
  int64_t audio_dim = 0;
  int64_t num_labels = 0;
  int64_t num_records = 0;
  uint64_t taxonomy_checksum = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<VideoRecord> records;
};

// Scene-structured sampling: every scene picks a leaf class uniformly and
// emits centroid + N(0, sigma) frames; truth is the ancestor closure of
// all scene leaves. Record i draws from an independent stream keyed by
// (seed, i), so generation order does not matter.
Dataset generate_synthetic(const SynthConfig& cfg, const Taxonomy& tax, uint64_t taxonomy_checksum);

// Zero-pads to exactly max_frames or truncates the tail; scene starts at
// or past the new length are dropped.
VideoRecord pad_or_truncate(const VideoRecord& rec, int64_t max_frames);

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

// Incremental reader: one record in memory at a time.
class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path);
  const DatasetHeader& header() const { return header_; }
  bool next(VideoRecord& out);  // false once all records were read

 private:
  std::ifstream in_;
  std::string path_;
  DatasetHeader header_;
  int64_t read_ = 0;
};

struct SplitIndices {
  std::vector<int64_t> train, val, test;
};

// Deterministic shuffle of [0, n) by seed, cut at the cumulative
// fractions. Parts are disjoint and cover every index.
SplitIndices split(int64_t n, double train_frac, double val_frac, double test_frac, uint64_t seed);

// Per-frame concatenation of the two modalities: T x (Dv + Da).
Tensor fuse(const VideoRecord& rec);
FrameSequence to_sequence(const VideoRecord& rec);

}  // namespace tempocoh
