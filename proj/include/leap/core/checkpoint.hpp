#pragma once

// Checkpoint container: magic "LEAP", version u32, then per parameter
// (name-length u32, name bytes, rank u32, dims u32..., real32 payload),
// little-endian throughout.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "leap/core/params.hpp"

namespace leap {

inline constexpr uint32_t kCheckpointVersion = 1;

namespace io {

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw Error("truncated file while reading u32");
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
         (uint32_t(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

inline float read_f32(std::istream& is) {
  uint32_t u = read_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline void write_f32_array(std::ostream& os, const float* p, size_t n) {
  // in-memory floats are little-endian on every supported target
  os.write(reinterpret_cast<const char*>(p), std::streamsize(n * 4));
}

inline void read_f32_array(std::istream& is, float* p, size_t n) {
  is.read(reinterpret_cast<char*>(p), std::streamsize(n * 4));
  if (!is) throw Error("truncated file while reading array");
}

}  // namespace io

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

inline void save_arrays(const std::string& path,
                        const std::vector<NamedArray>& arrays) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  os.write("LEAP", 4);
  io::write_u32(os, kCheckpointVersion);
  for (const auto& a : arrays) {
    io::write_u32(os, uint32_t(a.name.size()));
    os.write(a.name.data(), std::streamsize(a.name.size()));
    io::write_u32(os, uint32_t(a.shape.size()));
    for (int d : a.shape) io::write_u32(os, uint32_t(d));
    io::write_f32_array(os, a.data.data(), a.data.size());
  }
  if (!os) throw Error("write failed: " + path);
}

inline std::vector<NamedArray> load_arrays(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "LEAP")
    throw Error("bad magic in checkpoint: " + path);
  uint32_t version = io::read_u32(is);
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  std::vector<NamedArray> out;
  while (is.peek() != EOF) {
    NamedArray a;
    uint32_t nl = io::read_u32(is);
    a.name.resize(nl);
    is.read(a.name.data(), nl);
    if (!is) throw Error("truncated checkpoint: " + path);
    uint32_t rank = io::read_u32(is);
    size_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      a.shape.push_back(int(io::read_u32(is)));
      n *= size_t(a.shape.back());
    }
    a.data.resize(n);
    io::read_f32_array(is, a.data.data(), n);
    out.push_back(std::move(a));
  }
  return out;
}

template <class T>
void save_checkpoint(const std::string& path, const ParamMap<T>& params,
                     const std::vector<NamedArray>& extra = {}) {
  std::vector<NamedArray> arrays;
  for (const auto& [name, t] : params) {
    NamedArray a;
    a.name = name;
    a.shape = t.shape();
    a.data.assign(t.data().begin(), t.data().end());
    arrays.push_back(std::move(a));
  }
  for (const auto& a : extra) arrays.push_back(a);
  save_arrays(path, arrays);
}

template <class T>
std::vector<NamedArray> load_checkpoint(const std::string& path,
                                        ParamMap<T>& params) {
  auto arrays = load_arrays(path);
  std::vector<NamedArray> extra;
  for (auto& a : arrays) {
    if (params.contains(a.name)) {
      auto& t = params.at(a.name);
      if (t.shape() != a.shape)
        throw Error("checkpoint shape mismatch for " + a.name + ": file " +
                    shape_str(a.shape) + " vs model " + shape_str(t.shape()));
      for (size_t i = 0; i < a.data.size(); ++i) t.data()[i] = T(a.data[i]);
    } else {
      extra.push_back(std::move(a));
    }
  }
  return extra;
}

}  // namespace leap
