#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "leap/eval/metrics.hpp"

using namespace leap;

namespace {

std::vector<SequencePair> tiny_set(int count, int len, uint64_t seed) {
  WorldConfig wc;
  wc.view_size = 16;
  wc.seq_len = len;
  wc.seed = seed;
  std::vector<SequencePair> out;
  for (int i = 0; i < count; ++i)
    out.push_back(generate_sequence(wc, uint64_t(i)));
  return out;
}

// Stochastic reference rollout: copy-last plus seeded pixel noise, so
// best-of-k has something to select over.
RolloutFn noisy_copy_last(double amplitude) {
  return [amplitude](const SequencePair& prefix, int horizon, Rng& rng) {
    auto out = copy_last_rollout(prefix, horizon);
    for (auto& v : out.frames) {
      v = float(v + amplitude * rng.uniform(-1.0, 1.0));
      v = std::min(1.0f, std::max(0.0f, v));
    }
    return out;
  };
}

}  // namespace

TEST_CASE("psnr cap, hand-computed offset, symmetry, guards") {
  std::vector<float> a(256, 0.5f), b(256, 0.5f);
  CHECK(psnr(a.data(), b.data(), a.size()) == 100.0);

  for (auto& v : b) v = 0.6f;  // MSE = 0.01 -> 20 dB
  CHECK(psnr(a.data(), b.data(), a.size()) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(psnr(a.data(), b.data(), a.size()) ==
        psnr(b.data(), a.data(), a.size()));

  CHECK_THROWS(psnr(a.data(), b.data(), 0));
  CHECK_THROWS(psnr(Tensor<double>::zeros({2, 2}), Tensor<double>::zeros({3})));
}

TEST_CASE("cosine trivial values and zero-norm convention") {
  std::vector<double> x{1, 0, 0}, y{0, 1, 0}, nx{-1, 0, 0}, zero{0, 0, 0};
  bool degenerate = false;
  CHECK(cosine(x, x) == doctest::Approx(1.0));
  CHECK(cosine(x, nx) == doctest::Approx(-1.0));
  CHECK(cosine(x, y) == doctest::Approx(0.0));
  CHECK(cosine(x, zero, &degenerate) == 0.0);
  CHECK(degenerate);
}

TEST_CASE("feature cosine of a frame with itself is 1") {
  Rng init(1);
  Autoencoder<double> ae(AutoencoderConfig{}, init);
  auto seq = tiny_set(1, 8, 3)[0];
  auto x = frame_to_tensor<double>(seq, 2);
  CHECK(feature_cosine(ae, x, x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("action l2 curves") {
  auto seq = tiny_set(1, 8, 5)[0];
  auto same = action_l2(seq, seq);
  for (double v : same.total) CHECK(v == 0.0);

  auto shifted = seq;
  for (int t = 0; t < seq.len; ++t) shifted.action(t)[0] += 1.0f;
  auto err = action_l2(shifted, seq);
  for (int t = 0; t < seq.len; ++t) {
    CHECK(err.total[size_t(t)] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(err.component[0][size_t(t)] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(err.component[1][size_t(t)] == doctest::Approx(0.0));
  }

  // triangle inequality on random triples
  Rng rng(7);
  for (int k = 0; k < 20; ++k) {
    auto a = tiny_set(1, 8, 100 + uint64_t(k))[0];
    auto b = tiny_set(1, 8, 200 + uint64_t(k))[0];
    auto c = tiny_set(1, 8, 300 + uint64_t(k))[0];
    auto ab = action_l2(a, b), bc = action_l2(b, c), ac = action_l2(a, c);
    for (int t = 0; t < a.len; ++t)
      CHECK(ac.total[size_t(t)] <=
            ab.total[size_t(t)] + bc.total[size_t(t)] + 1e-9);
  }

  auto bad = seq;
  bad.len = 5;
  CHECK_THROWS(action_l2(bad, seq));
}

TEST_CASE("evaluate_model contract: shapes, k=1 identity, purity") {
  auto set = tiny_set(3, 25, 9);
  Rng init(2);
  Autoencoder<float> ae(AutoencoderConfig{}, init);
  auto rollout = noisy_copy_last(0.05);

  Rng r1(4);
  auto rep = evaluate_model(rollout, ae, set, 1, 10, 5, r1);
  CHECK(rep.horizon == 10);
  CHECK(rep.psnr.mean.size() == 10);
  CHECK(rep.action_component.size() == 2);
  for (int t = 0; t < 10; ++t) {
    CHECK(rep.psnr.best[size_t(t)] == doctest::Approx(rep.psnr.mean[size_t(t)]));
    CHECK(rep.action_l2.best[size_t(t)] ==
          doctest::Approx(rep.action_l2.mean[size_t(t)]));
  }

  Rng r2(4);
  auto rep2 = evaluate_model(rollout, ae, set, 1, 10, 5, r2);
  CHECK(rep.psnr.mean == rep2.psnr.mean);
  CHECK(rep.feature_cosine.best == rep2.feature_cosine.best);

  Rng r3(1);
  CHECK_THROWS(evaluate_model(rollout, ae, {}, 1, 10, 5, r3));
  CHECK_THROWS(evaluate_model(rollout, ae, set, 0, 10, 5, r3));
  CHECK_THROWS(evaluate_model(rollout, ae, set, 1, 30, 5, r3));  // too long
}

TEST_CASE("copy-last psnr is non-increasing early on moving-camera data") {
  auto set = tiny_set(4, 25, 11);
  Rng init(3);
  Autoencoder<float> ae(AutoencoderConfig{}, init);
  RolloutFn rollout = [](const SequencePair& p, int h, Rng&) {
    return copy_last_rollout(p, h);
  };
  Rng rng(5);
  auto rep = evaluate_model(rollout, ae, set, 1, 10, 5, rng);
  // the first step is closest to the frozen frame
  CHECK(rep.psnr.mean.front() >= rep.psnr.mean.back());
}

TEST_CASE("best-of-k horizon-average psnr is monotone in k") {
  // single sequence so the k samples of one run are a prefix of the next
  auto set = tiny_set(1, 25, 13);
  Rng init(4);
  Autoencoder<float> ae(AutoencoderConfig{}, init);
  auto rollout = noisy_copy_last(0.1);
  double prev = -1e9;
  for (int k : {1, 2, 4, 8}) {
    Rng rng(21);  // same stream: sample i of run k equals sample i of run k+1
    auto rep = evaluate_model(rollout, ae, set, k, 8, 5, rng);
    double score = series_mean(rep.psnr.best);
    CHECK(score >= prev);
    prev = score;
  }
}

TEST_CASE("report csv layout") {
  auto set = tiny_set(1, 25, 17);
  Rng init(5);
  Autoencoder<float> ae(AutoencoderConfig{}, init);
  RolloutFn rollout = [](const SequencePair& p, int h, Rng&) {
    return copy_last_rollout(p, h);
  };
  Rng rng(2);
  auto rep = evaluate_model(rollout, ae, set, 2, 6, 5, rng);
  std::ostringstream os;
  write_report_csv(os, rep);
  auto text = os.str();
  CHECK(text.rfind("t,metric,mean,std,best\n", 0) == 0);
  size_t lines = 0;
  for (char ch : text)
    if (ch == '\n') ++lines;
  // header + 6 timesteps x (psnr, cosine, action_l2, 2 components)
  CHECK(lines == 1 + 6 * 5);
  CHECK(text.find("action_l2_c1") != std::string::npos);
}
