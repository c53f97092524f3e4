#pragma once

// Seeded generator of partially observable image-action sequences: a camera
// roams a static textured scene with bright obstacles and one drifting
// sprite. Each frame is the heading-aligned egocentric crop; the action comes
// from a scripted obstacle-avoidance policy that reads the current frame, so
// actions depend on pixels and the next frame depends on the action.

#include <cmath>
#include <cstdint>
#include <vector>

#include "leap/core/random.hpp"
#include "leap/core/tensor.hpp"

namespace leap {

struct WorldConfig {
  int scene_size = 64;
  int view_size = 16;
  int channels = 1;
  int obstacle_count = 6;
  int sprite_count = 1;
  int seq_len = 25;
  int action_dim = 2;
  uint64_t seed = 0;
  float v_max = 2.0f;      // pixels per step
  float omega_max = 0.6f;  // radians per step
  bool zero_actions = false;  // freeze the policy (static-camera variant)

  void validate() const {
    if (view_size >= scene_size)
      throw Error("world config: view_size must be smaller than scene_size");
    if (seq_len < 7) throw Error("world config: sequence length must be >= 7");
    if (view_size % 4 != 0) throw Error("world config: view_size must be /4");
    if (action_dim != 2) throw Error("world config: action_dim must be 2");
  }
};

struct SequencePair {
  int len = 0, height = 0, width = 0, channels = 0, action_dim = 0;
  std::vector<float> frames;   // len*H*W*C, row-major, in [0,1]
  std::vector<float> actions;  // len*n, normalized to [0,1]

  size_t frame_size() const { return size_t(height) * width * channels; }
  const float* frame(int t) const { return frames.data() + size_t(t) * frame_size(); }
  float* frame(int t) { return frames.data() + size_t(t) * frame_size(); }
  const float* action(int t) const { return actions.data() + size_t(t) * action_dim; }
  float* action(int t) { return actions.data() + size_t(t) * action_dim; }
};

namespace detail {

constexpr double kPi = 3.14159265358979323846;

struct Scene {
  int size;
  std::vector<float> base;  // static background + obstacles
  std::vector<uint8_t> obstacle_mask;

  float at(int y, int x) const {
    y = std::min(std::max(y, 0), size - 1);
    x = std::min(std::max(x, 0), size - 1);
    return base[size_t(y) * size + x];
  }
};

inline Scene build_scene(const WorldConfig& cfg, Rng& rng) {
  Scene s;
  s.size = cfg.scene_size;
  s.base.resize(size_t(s.size) * s.size);
  s.obstacle_mask.assign(s.base.size(), 0);
  double p1 = rng.uniform(0, 2 * kPi), p2 = rng.uniform(0, 2 * kPi);
  double f1 = rng.uniform(0.25, 0.45), f2 = rng.uniform(0.2, 0.4);
  for (int y = 0; y < s.size; ++y)
    for (int x = 0; x < s.size; ++x) {
      double v = 0.18 + 0.17 * (std::sin(f1 * x + p1) * std::sin(f2 * y + p2) + 1.0) * 0.5;
      s.base[size_t(y) * s.size + x] = float(v);
    }
  for (int i = 0; i < cfg.obstacle_count; ++i) {
    int w = int(rng.uniform_int(4, 9));
    int h = int(rng.uniform_int(4, 9));
    int ox = int(rng.uniform_int(2, s.size - w - 2));
    int oy = int(rng.uniform_int(2, s.size - h - 2));
    for (int y = oy; y < oy + h; ++y)
      for (int x = ox; x < ox + w; ++x) {
        s.base[size_t(y) * s.size + x] = 1.0f;
        s.obstacle_mask[size_t(y) * s.size + x] = 1;
      }
  }
  return s;
}

struct Sprite {
  double x, y, vx, vy;
  int half = 1;
};

// Camera crop: rows advance along the heading direction, columns span the
// lateral axis. Heading is snapped to the nearest of 8 discrete angles and
// pixels are sampled nearest-neighbor, so rendering is exactly reproducible.
inline void render_view(const Scene& scene, const std::vector<Sprite>& sprites,
                        double px, double py, double theta, int view,
                        float* out) {
  int idx = int(std::llround(theta / (kPi / 4.0)));
  idx = ((idx % 8) + 8) % 8;
  double a = idx * (kPi / 4.0);
  double fx = std::cos(a), fy = std::sin(a);
  double rx = -fy, ry = fx;
  double half = (view - 1) / 2.0;
  for (int r = 0; r < view; ++r)
    for (int c = 0; c < view; ++c) {
      double ahead = r + 1.0;
      double lat = c - half;
      double wx = px + fx * ahead + rx * lat;
      double wy = py + fy * ahead + ry * lat;
      int ix = int(std::llround(wx)), iy = int(std::llround(wy));
      float v = scene.at(iy, ix);
      for (const auto& sp : sprites) {
        if (std::abs(ix - std::llround(sp.x)) <= sp.half &&
            std::abs(iy - std::llround(sp.y)) <= sp.half)
          v = 0.9f;
      }
      out[size_t(r) * view + c] = v;
    }
}

// Obstacle-pixel statistics over the view: overall bright density in the
// near-center band plus a left/right split used to pick the turn direction.
struct ViewDensity {
  double center = 0, left = 0, right = 0;
};

inline ViewDensity measure_density(const float* frame, int view) {
  ViewDensity d;
  int rows = view / 2;
  int c0 = view / 4, c1 = 3 * view / 4;
  int n_center = 0, n_half = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < view; ++c) {
      bool bright = frame[size_t(r) * view + c] > 0.7f;
      if (c >= c0 && c < c1) {
        d.center += bright ? 1 : 0;
        ++n_center;
      }
      if (c < view / 2) {
        d.left += bright ? 1 : 0;
      } else {
        d.right += bright ? 1 : 0;
      }
      ++n_half;
    }
  d.center /= std::max(1, n_center);
  d.left /= std::max(1, n_half / 2);
  d.right /= std::max(1, n_half / 2);
  return d;
}

}  // namespace detail

inline SequencePair generate_sequence(const WorldConfig& cfg,
                                      uint64_t episode_seed) {
  cfg.validate();
  Rng rng(cfg.seed * 0x9e3779b97f4a7c15ULL + episode_seed + 1);
  auto scene = detail::build_scene(cfg, rng);

  std::vector<detail::Sprite> sprites;
  for (int i = 0; i < cfg.sprite_count; ++i) {
    detail::Sprite sp;
    sp.x = rng.uniform(8, cfg.scene_size - 8);
    sp.y = rng.uniform(8, cfg.scene_size - 8);
    sp.vx = rng.uniform(-0.8, 0.8);
    sp.vy = rng.uniform(-0.8, 0.8);
    sprites.push_back(sp);
  }

  double margin = cfg.view_size + 2.0;
  double px = rng.uniform(margin, cfg.scene_size - margin);
  double py = rng.uniform(margin, cfg.scene_size - margin);
  double theta = rng.uniform_int(0, 7) * (detail::kPi / 4.0);

  SequencePair seq;
  seq.len = cfg.seq_len;
  seq.height = seq.width = cfg.view_size;
  seq.channels = cfg.channels;
  seq.action_dim = cfg.action_dim;
  seq.frames.resize(size_t(seq.len) * seq.frame_size());
  seq.actions.resize(size_t(seq.len) * seq.action_dim);

  for (int t = 0; t < cfg.seq_len; ++t) {
    float* frame = seq.frame(t);
    detail::render_view(scene, sprites, px, py, theta, cfg.view_size, frame);

    double v_raw = 0.0, w_raw = 0.0;
    if (!cfg.zero_actions) {
      auto d = detail::measure_density(frame, cfg.view_size);
      double mag = std::min(1.0, 3.0 * d.center);
      double sign = d.left > d.right ? 1.0 : -1.0;
      w_raw = sign * mag * cfg.omega_max;
      if (d.center < 0.02) w_raw += 0.15 * cfg.omega_max * (2.0 * rng.uniform() - 1.0);
      v_raw = cfg.v_max * std::max(0.1, 1.0 - 2.5 * d.center);
      v_raw *= 1.0 - 0.1 * rng.uniform();
      w_raw = std::min(std::max(w_raw, -double(cfg.omega_max)), double(cfg.omega_max));
    }
    seq.action(t)[0] = float(v_raw / cfg.v_max);
    seq.action(t)[1] = float((w_raw + cfg.omega_max) / (2.0 * cfg.omega_max));

    // advance camera; leaving the scene reflects the heading
    theta += w_raw;
    double nx = px + v_raw * std::cos(theta);
    double ny = py + v_raw * std::sin(theta);
    if (nx < margin || nx > cfg.scene_size - margin) {
      theta = detail::kPi - theta;
      nx = px + v_raw * std::cos(theta);
    }
    if (ny < margin || ny > cfg.scene_size - margin) {
      theta = -theta;
      ny = py + v_raw * std::sin(theta);
    }
    px = nx;
    py = ny;

    for (auto& sp : sprites) {
      sp.x += sp.vx;
      sp.y += sp.vy;
      if (sp.x < 3 || sp.x > cfg.scene_size - 3) sp.vx = -sp.vx;
      if (sp.y < 3 || sp.y > cfg.scene_size - 3) sp.vy = -sp.vy;
    }
  }
  return seq;
}

}  // namespace leap
