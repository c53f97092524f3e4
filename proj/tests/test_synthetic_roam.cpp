#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "leap/data/dataset.hpp"
#include "leap/data/world.hpp"

using leap::WorldConfig;

static std::filesystem::path tmp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

TEST_CASE("zero policy with no sprite gives identical frames") {
  WorldConfig cfg;
  cfg.sprite_count = 0;
  cfg.zero_actions = true;
  cfg.seed = 4;
  auto seq = leap::generate_sequence(cfg, 0);
  for (int t = 1; t < seq.len; ++t)
    for (size_t i = 0; i < seq.frame_size(); ++i)
      CHECK(seq.frame(t)[i] == seq.frame(0)[i]);
}

TEST_CASE("same config and episode seed is bitwise deterministic") {
  WorldConfig cfg;
  cfg.seed = 11;
  auto a = leap::generate_sequence(cfg, 3);
  auto b = leap::generate_sequence(cfg, 3);
  CHECK(a.frames == b.frames);
  CHECK(a.actions == b.actions);
}

TEST_CASE("frames and actions stay in [0,1]") {
  WorldConfig cfg;
  cfg.seed = 2;
  for (int ep = 0; ep < 1000; ++ep) {
    auto seq = leap::generate_sequence(cfg, uint64_t(ep));
    for (float a : seq.actions) {
      CHECK(a >= 0.0f);
      CHECK(a <= 1.0f);
    }
    if (ep < 20)
      for (float v : seq.frames) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
  }
}

TEST_CASE("config guards") {
  WorldConfig cfg;
  cfg.seq_len = 5;
  CHECK_THROWS_AS(leap::generate_sequence(cfg, 0), leap::Error);
  cfg = WorldConfig{};
  cfg.view_size = 64;
  CHECK_THROWS_AS(leap::generate_sequence(cfg, 0), leap::Error);
}

// Mutual-information proxy: obstacle-pixel density in the frame must
// correlate with the turn-rate magnitude the policy emits for it.
TEST_CASE("image-action coupling is present") {
  WorldConfig cfg;
  cfg.seed = 21;
  std::vector<double> dens, turn;
  for (int ep = 0; ep < 200; ++ep) {
    auto seq = leap::generate_sequence(cfg, uint64_t(ep));
    for (int t = 0; t < seq.len; ++t) {
      auto d = leap::detail::measure_density(seq.frame(t), seq.width);
      dens.push_back(d.center);
      turn.push_back(std::abs(seq.action(t)[1] - 0.5));
    }
  }
  double n = double(dens.size());
  double md = 0, mt = 0;
  for (size_t i = 0; i < dens.size(); ++i) {
    md += dens[i];
    mt += turn[i];
  }
  md /= n;
  mt /= n;
  double cov = 0, vd = 0, vt = 0;
  for (size_t i = 0; i < dens.size(); ++i) {
    cov += (dens[i] - md) * (turn[i] - mt);
    vd += (dens[i] - md) * (dens[i] - md);
    vt += (turn[i] - mt) * (turn[i] - mt);
  }
  double corr = cov / std::sqrt(vd * vt);
  CHECK(corr > 0.3);
}

TEST_CASE("consecutive frames differ while the camera moves") {
  WorldConfig cfg;
  cfg.seed = 31;
  cfg.sprite_count = 0;
  auto seq = leap::generate_sequence(cfg, 1);
  int moving_and_changed = 0, moving = 0;
  for (int t = 0; t + 1 < seq.len; ++t) {
    if (seq.action(t)[0] <= 0.0f) continue;
    ++moving;
    double diff = 0;
    for (size_t i = 0; i < seq.frame_size(); ++i)
      diff += std::abs(seq.frame(t + 1)[i] - seq.frame(t)[i]);
    if (diff > 0) ++moving_and_changed;
  }
  CHECK(moving > 0);
  CHECK(moving_and_changed == moving);
}

TEST_CASE("dataset write/read round-trip is bit-exact") {
  WorldConfig cfg;
  cfg.seed = 5;
  auto ds = leap::generate_dataset(cfg, 10);
  auto path = tmp_path("leap_test_roundtrip.lpds");
  leap::write_dataset(path.string(), ds);
  auto back = leap::read_dataset(path.string());
  REQUIRE(back.sequences.size() == ds.sequences.size());
  CHECK(back.v_max == ds.v_max);
  CHECK(back.omega_max == ds.omega_max);
  for (size_t i = 0; i < ds.sequences.size(); ++i) {
    CHECK(back.sequences[i].frames == ds.sequences[i].frames);
    CHECK(back.sequences[i].actions == ds.sequences[i].actions);
  }
  std::filesystem::remove(path);
}

TEST_CASE("corrupted magic and truncation give distinct errors") {
  WorldConfig cfg;
  cfg.seed = 6;
  auto ds = leap::generate_dataset(cfg, 2);
  auto path = tmp_path("leap_test_corrupt.lpds");
  leap::write_dataset(path.string(), ds);

  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_WITH_AS(leap::read_dataset(path.string()),
                         doctest::Contains("bad magic"), leap::Error);
  }
  SUBCASE("truncation") {
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    CHECK_THROWS_WITH_AS(leap::read_dataset(path.string()),
                         doctest::Contains("truncated"), leap::Error);
  }
  std::filesystem::remove(path);
}

TEST_CASE("empty dataset round-trips") {
  leap::Dataset ds;
  ds.len = 25;
  ds.height = ds.width = 16;
  ds.channels = 1;
  ds.action_dim = 2;
  auto path = tmp_path("leap_test_empty.lpds");
  leap::write_dataset(path.string(), ds);
  auto back = leap::read_dataset(path.string());
  CHECK(back.sequences.empty());
  CHECK(back.len == 25);
  std::filesystem::remove(path);
}

TEST_CASE("split is disjoint, exhaustive and seeded") {
  WorldConfig cfg;
  cfg.seed = 7;
  cfg.obstacle_count = 2;
  auto ds = leap::generate_dataset(cfg, 50);
  auto [train, test] = leap::split_dataset(ds.sequences, 0.9, 99);
  CHECK(train.size() == 45);
  CHECK(test.size() == 5);

  auto [train2, test2] = leap::split_dataset(ds.sequences, 0.9, 99);
  for (size_t i = 0; i < train.size(); ++i)
    CHECK(train[i].frames == train2[i].frames);

  CHECK_THROWS_AS(leap::split_dataset(ds.sequences, 0.0, 1), leap::Error);
  CHECK_THROWS_AS(leap::split_dataset(ds.sequences, 1.0, 1), leap::Error);
  CHECK_THROWS_AS(leap::split_dataset(ds.sequences, 0.001, 1), leap::Error);
}
