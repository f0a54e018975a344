// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>

#include "tempocoh/error.hpp"
#include "tempocoh/rng.hpp"
#include "tempocoh/threading.hpp"

namespace tempocoh {

void SynthConfig::validate() const {
  if (num_videos < 1) throw ConfigError("num_videos must be >= 1, got " + std::to_string(num_videos));
  if (min_frames < 1 || max_frames < min_frames) {
    throw ConfigError("frames range [" + std::to_string(min_frames) + ", " + std::to_string(max_frames) +
                      "] is empty or non-positive");
  }
  if (min_scenes < 1 || max_scenes < min_scenes) {
    throw ConfigError("scenes range [" + std::to_string(min_scenes) + ", " + std::to_string(max_scenes) +
                      "] is empty or non-positive");
  }
  if (video_dim < 1 || audio_dim < 1) throw ConfigError("feature dims must be >= 1");
  if (sigma < 0.0) throw ConfigError("sigma must be >= 0, got " + std::to_string(sigma));
  if (audio_correlation < 0.0 || audio_correlation > 1.0) {
    throw ConfigError("audio_correlation must lie in [0,1], got " + std::to_string(audio_correlation));
  }
}

namespace {

VideoRecord make_record(const SynthConfig& cfg, const Taxonomy& tax, const std::vector<int64_t>& leaves,
                        const Tensor& video_centroids, const Tensor& audio_centroids, int64_t index) {
  Rng rng(Rng::mix(cfg.seed, static_cast<uint64_t>(index)));
  int64_t t_len = rng.uniform_int(cfg.min_frames, cfg.max_frames);
  int64_t scenes = std::min(rng.uniform_int(cfg.min_scenes, cfg.max_scenes), t_len);

  // Scene boundaries: scenes-1 distinct cuts in [1, T).
  std::set<int64_t> cuts;
  while (static_cast<int64_t>(cuts.size()) < scenes - 1) cuts.insert(rng.uniform_int(1, t_len - 1));
  std::vector<int64_t> starts{0};
  starts.insert(starts.end(), cuts.begin(), cuts.end());

  std::vector<int64_t> scene_leaves;
  for (int64_t s = 0; s < scenes; ++s) {
    scene_leaves.push_back(leaves[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(leaves.size()) - 1))]);
  }

  Tensor video(Shape{t_len, cfg.video_dim});
  Tensor audio(Shape{t_len, cfg.audio_dim});
  double rho = cfg.audio_correlation;
  for (int64_t t = 0; t < t_len; ++t) {
    size_t seg = 0;
    while (seg + 1 < starts.size() && starts[seg + 1] <= t) ++seg;
    int64_t leaf = scene_leaves[seg];
    for (int64_t d = 0; d < cfg.video_dim; ++d) {
      video.at(t, d) = video_centroids.at(leaf, d) + cfg.sigma * rng.normal();
    }
    for (int64_t d = 0; d < cfg.audio_dim; ++d) {
      audio.at(t, d) = rho * audio_centroids.at(leaf, d) + (1.0 - rho) * rng.normal() + cfg.sigma * rng.normal();
    }
  }

  VideoRecord rec;
  char id[16];
  std::snprintf(id, sizeof id, "v%06lld", static_cast<long long>(index));
  rec.video_id = id;
  rec.video_feats = std::move(video);
  rec.audio_feats = std::move(audio);
  rec.scene_starts = std::move(starts);
  rec.truth = ancestor_closure(tax, scene_leaves);
  return rec;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg, const Taxonomy& tax, uint64_t taxonomy_checksum) {
  cfg.validate();
  std::vector<int64_t> leaves = tax.leaves();
  if (leaves.size() < 2) throw ContractError("synthetic generation needs a taxonomy with >= 2 leaves");

  // Class centroids come from a dedicated stream (index UINT64_MAX, which
  // no record index can collide with).
  Rng cen(Rng::mix(cfg.seed, ~0ull));
  Tensor video_centroids(Shape{tax.size(), cfg.video_dim});
  Tensor audio_centroids(Shape{tax.size(), cfg.audio_dim});
  for (int64_t leaf : leaves) {
    for (int64_t d = 0; d < cfg.video_dim; ++d) video_centroids.at(leaf, d) = cen.normal();
    for (int64_t d = 0; d < cfg.audio_dim; ++d) audio_centroids.at(leaf, d) = cen.normal();
  }

  Dataset ds;
  ds.header.video_dim = cfg.video_dim;
  ds.header.audio_dim = cfg.audio_dim;
  ds.header.num_labels = tax.size();
  ds.header.num_records = cfg.num_videos;
  ds.header.taxonomy_checksum = taxonomy_checksum;
  ds.records.resize(static_cast<size_t>(cfg.num_videos));
  parallel_for(cfg.num_videos, [&](int64_t i) {
    ds.records[static_cast<size_t>(i)] = make_record(cfg, tax, leaves, video_centroids, audio_centroids, i);
  });
  return ds;
}

VideoRecord pad_or_truncate(const VideoRecord& rec, int64_t max_frames) {
  if (max_frames < 1) throw ConfigError("max_frames must be >= 1, got " + std::to_string(max_frames));
  int64_t t_old = rec.video_feats.dim(0);
  if (t_old == max_frames) return rec;
  VideoRecord out;
  out.video_id = rec.video_id;
  out.truth = rec.truth;
  out.video_feats = Tensor(Shape{max_frames, rec.video_feats.dim(1)});
  out.audio_feats = Tensor(Shape{max_frames, rec.audio_feats.dim(1)});
  int64_t keep = std::min(t_old, max_frames);
  for (int64_t t = 0; t < keep; ++t) {
    for (int64_t d = 0; d < rec.video_feats.dim(1); ++d) out.video_feats.at(t, d) = rec.video_feats.at(t, d);
    for (int64_t d = 0; d < rec.audio_feats.dim(1); ++d) out.audio_feats.at(t, d) = rec.audio_feats.at(t, d);
  }
  for (int64_t s : rec.scene_starts) {
    if (s < max_frames) out.scene_starts.push_back(s);
  }
  return out;
}

// ---- binary container ------------------------------------------------------

namespace {

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::string& buf, float v) { put_u32(buf, std::bit_cast<uint32_t>(v)); }

// Cursor over a byte range with offset-aware truncation errors.
struct Cursor {
  const unsigned char* data;
  size_t len;
  size_t pos = 0;
  size_t base = 0;  // file offset of data[0]

  void need(size_t n, const char* what) {
    if (pos + n > len) {
      throw IoError(std::string("truncated ") + what + " at byte offset " + std::to_string(base + pos));
    }
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
};

std::string encode_record(const VideoRecord& rec) {
  std::string body;
  put_u32(body, static_cast<uint32_t>(rec.video_id.size()));
  body.append(rec.video_id);
  for (const Tensor* feats : {&rec.video_feats, &rec.audio_feats}) {
    put_u32(body, static_cast<uint32_t>(feats->dim(0)));
    put_u32(body, static_cast<uint32_t>(feats->dim(1)));
    for (int64_t t = 0; t < feats->dim(0); ++t)
      for (int64_t d = 0; d < feats->dim(1); ++d)
        put_f32(body, static_cast<float>(feats->at(t, d)));
  }
  put_u32(body, static_cast<uint32_t>(rec.scene_starts.size()));
  for (int64_t s : rec.scene_starts) put_u64(body, static_cast<uint64_t>(s));
  int64_t k_total = rec.truth.size();
  uint32_t bytes = static_cast<uint32_t>((k_total + 7) / 8);
  put_u32(body, bytes);
  for (uint32_t b = 0; b < bytes; ++b) {
    unsigned char packed = 0;
    for (int bit = 0; bit < 8; ++bit) {
      int64_t id = static_cast<int64_t>(b) * 8 + bit;
      if (id < k_total && rec.truth.test(id)) packed |= static_cast<unsigned char>(1u << bit);
    }
    body.push_back(static_cast<char>(packed));
  }
  std::string out;
  put_u64(out, body.size());
  out += body;
  return out;
}

VideoRecord decode_record(Cursor& c, int64_t num_labels) {
  VideoRecord rec;
  uint32_t id_len = c.u32("record id length");
  c.need(id_len, "record id");
  rec.video_id.assign(reinterpret_cast<const char*>(c.data + c.pos), id_len);
  c.pos += id_len;
  for (Tensor* feats : {&rec.video_feats, &rec.audio_feats}) {
    uint32_t t_len = c.u32("feature rows");
    uint32_t dim = c.u32("feature cols");
    Tensor m(Shape{static_cast<int64_t>(t_len), static_cast<int64_t>(dim)});
    for (uint32_t t = 0; t < t_len; ++t)
      for (uint32_t d = 0; d < dim; ++d)
        m.at(t, d) = static_cast<double>(c.f32("feature value"));
    *feats = std::move(m);
  }
  uint32_t scenes = c.u32("scene count");
  for (uint32_t s = 0; s < scenes; ++s) rec.scene_starts.push_back(static_cast<int64_t>(c.u64("scene start")));
  uint32_t bitmap_len = c.u32("truth bitmap length");
  c.need(bitmap_len, "truth bitmap");
  rec.truth = LabelSet(num_labels);
  for (int64_t id = 0; id < num_labels; ++id) {
    size_t byte = static_cast<size_t>(id / 8);
    if (byte < bitmap_len && (c.data[c.pos + byte] >> (id % 8)) & 1u) rec.truth.set(id);
  }
  c.pos += bitmap_len;
  return rec;
}

constexpr size_t kHeaderBytes = 4 + 4 + 4 + 4 + 4 + 8 + 8;

std::string encode_header(const DatasetHeader& h) {
  std::string out;
  out.append(DatasetHeader::kMagic, 4);
  put_u32(out, h.version);
  put_u32(out, static_cast<uint32_t>(h.video_dim));
  put_u32(out, static_cast<uint32_t>(h.audio_dim));
  put_u32(out, static_cast<uint32_t>(h.num_labels));
  put_u64(out, static_cast<uint64_t>(h.num_records));
  put_u64(out, h.taxonomy_checksum);
  return out;
}

DatasetHeader decode_header(const unsigned char* data, size_t len, const std::string& path) {
  Cursor c{data, len, 0, 0};
  c.need(4, "magic");
  if (std::memcmp(data, DatasetHeader::kMagic, 4) != 0) {
    throw IoError("bad dataset magic at byte offset 0 in " + path + " (want TCD1)");
  }
  c.pos = 4;
  DatasetHeader h;
  h.version = c.u32("version");
  if (h.version != 1) {
    throw IoError("unsupported dataset version " + std::to_string(h.version) + " at byte offset 4 in " + path);
  }
  h.video_dim = c.u32("video dim");
  h.audio_dim = c.u32("audio dim");
  h.num_labels = c.u32("label count");
  h.num_records = static_cast<int64_t>(c.u64("record count"));
  h.taxonomy_checksum = c.u64("taxonomy checksum");
  return h;
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  std::string header = encode_header(ds.header);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& rec : ds.records) {
    if (rec.video_feats.dim(1) != ds.header.video_dim || rec.audio_feats.dim(1) != ds.header.audio_dim ||
        rec.truth.size() != ds.header.num_labels) {
      throw MismatchError("record " + rec.video_id + " does not match the dataset header dims");
    }
    std::string block = encode_record(rec);
    out.write(block.data(), static_cast<std::streamsize>(block.size()));
  }
  if (!out) throw IoError("write failed for " + path);
}

DatasetReader::DatasetReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw IoError("cannot open " + path + " for reading");
  unsigned char raw[kHeaderBytes];
  in_.read(reinterpret_cast<char*>(raw), kHeaderBytes);
  if (static_cast<size_t>(in_.gcount()) != kHeaderBytes) {
    throw IoError("truncated header at byte offset " + std::to_string(in_.gcount()) + " in " + path);
  }
  header_ = decode_header(raw, kHeaderBytes, path);
}

bool DatasetReader::next(VideoRecord& out) {
  if (read_ >= header_.num_records) return false;
  size_t offset = static_cast<size_t>(in_.tellg());
  unsigned char len_raw[8];
  in_.read(reinterpret_cast<char*>(len_raw), 8);
  if (in_.gcount() != 8) {
    throw IoError("truncated record length at byte offset " + std::to_string(offset) + " in " + path_);
  }
  uint64_t body_len = 0;
  for (int i = 0; i < 8; ++i) body_len |= static_cast<uint64_t>(len_raw[i]) << (8 * i);
  std::vector<unsigned char> body(body_len);
  in_.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body_len));
  if (static_cast<uint64_t>(in_.gcount()) != body_len) {
    throw IoError("truncated record body at byte offset " + std::to_string(offset + 8) + " in " + path_);
  }
  Cursor c{body.data(), body.size(), 0, offset + 8};
  out = decode_record(c, header_.num_labels);
  if (c.pos != c.len) {
    throw IoError("record has " + std::to_string(c.len - c.pos) + " trailing bytes at byte offset " +
                  std::to_string(offset + 8 + c.pos) + " in " + path_);
  }
  ++read_;
  return true;
}

Dataset read_dataset(const std::string& path) {
  DatasetReader reader(path);
  Dataset ds;
  ds.header = reader.header();
  ds.records.reserve(static_cast<size_t>(ds.header.num_records));
  VideoRecord rec;
  while (reader.next(rec)) ds.records.push_back(std::move(rec));
  return ds;
}

SplitIndices split(int64_t n, double train_frac, double val_frac, double test_frac, uint64_t seed) {
  if (n < 0) throw ConfigError("split size must be >= 0");
  if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
      std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  Rng rng(Rng::mix(seed, 0x5B17ull));
  for (int64_t i = n - 1; i > 0; --i) {
    int64_t j = rng.uniform_int(0, i);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  int64_t cut1 = static_cast<int64_t>(std::llround(train_frac * static_cast<double>(n)));
  int64_t cut2 = static_cast<int64_t>(std::llround((train_frac + val_frac) * static_cast<double>(n)));
  cut1 = std::clamp<int64_t>(cut1, 0, n);
  cut2 = std::clamp<int64_t>(cut2, cut1, n);
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + cut1);
  s.val.assign(idx.begin() + cut1, idx.begin() + cut2);
  s.test.assign(idx.begin() + cut2, idx.end());
  return s;
}

Tensor fuse(const VideoRecord& rec) {
  int64_t t_len = rec.video_feats.dim(0);
  if (rec.audio_feats.dim(0) != t_len) {
    throw ShapeError("modalities disagree on frame count: " + rec.video_feats.shape().to_string() +
                     " vs " + rec.audio_feats.shape().to_string());
  }
  return concat_cols({rec.video_feats, rec.audio_feats});
}

FrameSequence to_sequence(const VideoRecord& rec) { return FrameSequence(fuse(rec), rec.scene_starts); }

}  // namespace tempocoh
