#pragma once

// Dataset container: magic "LPDS", version u32, count u32, then T,H,W,C,n as
// u32, v_max and omega_max as real32, followed per sequence by frames then
// actions, real32 row-major, little-endian. Round-trips are bit-exact.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "leap/core/checkpoint.hpp"
#include "leap/data/world.hpp"

namespace leap {

inline constexpr uint32_t kDatasetVersion = 1;

struct Dataset {
  int len = 0, height = 0, width = 0, channels = 0, action_dim = 0;
  float v_max = 0, omega_max = 0;  // denormalization map for actions
  std::vector<SequencePair> sequences;
};

inline void write_dataset(const std::string& path, const Dataset& ds) {
  for (const auto& s : ds.sequences)
    if (s.len != ds.len || s.height != ds.height || s.width != ds.width ||
        s.channels != ds.channels || s.action_dim != ds.action_dim)
      throw Error("write_dataset: inhomogeneous sequence shapes");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  os.write("LPDS", 4);
  io::write_u32(os, kDatasetVersion);
  io::write_u32(os, uint32_t(ds.sequences.size()));
  io::write_u32(os, uint32_t(ds.len));
  io::write_u32(os, uint32_t(ds.height));
  io::write_u32(os, uint32_t(ds.width));
  io::write_u32(os, uint32_t(ds.channels));
  io::write_u32(os, uint32_t(ds.action_dim));
  io::write_f32(os, ds.v_max);
  io::write_f32(os, ds.omega_max);
  for (const auto& s : ds.sequences) {
    io::write_f32_array(os, s.frames.data(), s.frames.size());
    io::write_f32_array(os, s.actions.data(), s.actions.size());
  }
  if (!os) throw Error("write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "LPDS")
    throw Error("bad magic in dataset file: " + path);
  uint32_t version = io::read_u32(is);
  if (version != kDatasetVersion)
    throw Error("unsupported dataset version " + std::to_string(version));
  Dataset ds;
  uint32_t count = io::read_u32(is);
  ds.len = int(io::read_u32(is));
  ds.height = int(io::read_u32(is));
  ds.width = int(io::read_u32(is));
  ds.channels = int(io::read_u32(is));
  ds.action_dim = int(io::read_u32(is));
  ds.v_max = io::read_f32(is);
  ds.omega_max = io::read_f32(is);
  for (uint32_t i = 0; i < count; ++i) {
    SequencePair s;
    s.len = ds.len;
    s.height = ds.height;
    s.width = ds.width;
    s.channels = ds.channels;
    s.action_dim = ds.action_dim;
    s.frames.resize(size_t(s.len) * s.frame_size());
    s.actions.resize(size_t(s.len) * s.action_dim);
    io::read_f32_array(is, s.frames.data(), s.frames.size());
    io::read_f32_array(is, s.actions.data(), s.actions.size());
    ds.sequences.push_back(std::move(s));
  }
  return ds;
}

// Seeded shuffle, then a disjoint exhaustive prefix/suffix split.
inline std::pair<std::vector<SequencePair>, std::vector<SequencePair>>
split_dataset(const std::vector<SequencePair>& sequences, double train_fraction,
              uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error("split_dataset: train fraction must be in (0,1)");
  size_t n = sequences.size();
  long train_n = std::lround(train_fraction * double(n));
  if (train_n < 1)
    throw Error("split_dataset: train side rounds to zero sequences");
  if (size_t(train_n) >= n)
    throw Error("split_dataset: test side rounds to zero sequences");
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[size_t(rng.uniform_int(0, int64_t(i) - 1))]);
  std::vector<SequencePair> train, test;
  for (size_t i = 0; i < n; ++i)
    (i < size_t(train_n) ? train : test).push_back(sequences[idx[i]]);
  return {std::move(train), std::move(test)};
}

// Generate a full dataset with independently seeded episodes.
inline Dataset generate_dataset(const WorldConfig& cfg, int count) {
  cfg.validate();
  Dataset ds;
  ds.len = cfg.seq_len;
  ds.height = ds.width = cfg.view_size;
  ds.channels = cfg.channels;
  ds.action_dim = cfg.action_dim;
  ds.v_max = cfg.v_max;
  ds.omega_max = cfg.omega_max;
  for (int i = 0; i < count; ++i)
    ds.sequences.push_back(generate_sequence(cfg, uint64_t(i)));
  return ds;
}

}  // namespace leap
