#pragma once

// Frame and action metrics with per-timestep curves. Feature similarity uses
// the frozen synthetic-world autoencoder as the feature extractor; the curves
// report both the mean over k stochastic rollouts and the best-of-k score per
// sequence.

#include <cmath>
#include <functional>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include "leap/data/world.hpp"
#include "leap/models/rafi.hpp"

namespace leap {

inline double psnr(const float* pred, const float* gt, size_t n,
                   double max_val = 1.0) {
  if (n == 0) throw Error("psnr: empty frame");
  double mse = 0;
  for (size_t i = 0; i < n; ++i) {
    double d = double(pred[i]) - double(gt[i]);
    mse += d * d;
  }
  mse /= double(n);
  if (mse <= 0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(max_val * max_val / mse));
}

template <class T>
double psnr(const Tensor<T>& pred, const Tensor<T>& gt, double max_val = 1.0) {
  detail::check_same_shape(pred, gt, "psnr");
  std::vector<float> a(pred.data().begin(), pred.data().end());
  std::vector<float> b(gt.data().begin(), gt.data().end());
  return psnr(a.data(), b.data(), a.size(), max_val);
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b,
                     bool* degenerate = nullptr) {
  double na = 0, nb = 0, dot = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
    dot += a[i] * b[i];
  }
  if (na <= 0 || nb <= 0) {
    if (degenerate)
      *degenerate = true;
    else
      std::cerr << "warning: zero-norm feature vector, cosine defined as 0\n";
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

template <class T>
double feature_cosine(const Autoencoder<T>& ae, const Tensor<T>& pred,
                      const Tensor<T>& gt) {
  NoGradGuard ng;
  detail::check_same_shape(pred, gt, "feature_cosine");
  auto fp = ae.encode(pred), fg = ae.encode(gt);
  std::vector<double> a(fp.data().begin(), fp.data().end());
  std::vector<double> b(fg.data().begin(), fg.data().end());
  return cosine(a, b);
}

// Per-timestep Euclidean error plus the per-component absolute errors.
struct ActionError {
  std::vector<double> total;                    // [T]
  std::vector<std::vector<double>> component;   // [n][T]
};

inline ActionError action_l2(const SequencePair& pred, const SequencePair& gt) {
  if (pred.len != gt.len || pred.action_dim != gt.action_dim)
    throw Error("action_l2: sequence length or action dim mismatch");
  ActionError e;
  e.total.resize(size_t(pred.len));
  e.component.assign(size_t(pred.action_dim),
                     std::vector<double>(size_t(pred.len)));
  for (int t = 0; t < pred.len; ++t) {
    double s = 0;
    for (int i = 0; i < pred.action_dim; ++i) {
      double d = double(pred.action(t)[i]) - double(gt.action(t)[i]);
      e.component[size_t(i)][size_t(t)] = std::abs(d);
      s += d * d;
    }
    e.total[size_t(t)] = std::sqrt(s);
  }
  return e;
}

// ---- rollout evaluation ----------------------------------------------------

struct MetricSeries {
  std::vector<double> mean, stddev, best;  // each length = horizon

  void init(int horizon) {
    mean.assign(size_t(horizon), 0);
    stddev.assign(size_t(horizon), 0);
    best.assign(size_t(horizon), 0);
  }
};

struct MetricReport {
  int horizon = 0, conditioning = 0, k_samples = 0;
  size_t sequence_count = 0;
  MetricSeries psnr, feature_cosine, action_l2;
  std::vector<MetricSeries> action_component;
};

using RolloutFn =
    std::function<SequencePair(const SequencePair& prefix, int horizon, Rng&)>;

namespace detail {

inline SequencePair subsequence(const SequencePair& seq, int start, int len) {
  SequencePair out;
  out.len = len;
  out.height = seq.height;
  out.width = seq.width;
  out.channels = seq.channels;
  out.action_dim = seq.action_dim;
  out.frames.assign(seq.frame(start), seq.frame(start) + size_t(len) * seq.frame_size());
  out.actions.assign(seq.action(start),
                     seq.action(start) + size_t(len) * seq.action_dim);
  return out;
}

struct Welford {
  double mean = 0, m2 = 0;
  long n = 0;
  void push(double x) {
    ++n;
    double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double stddev() const { return n > 1 ? std::sqrt(m2 / (n - 1)) : 0.0; }
};

}  // namespace detail

// Draws k stochastic rollouts per test sequence. Per metric the report holds
// the mean (with std) over all samples and sequences, and the best-of-k curve:
// per sequence the single sample with the best horizon-averaged score for that
// metric (higher is better for psnr/cosine, lower for action error), averaged
// over sequences.
template <class T>
MetricReport evaluate_model(const RolloutFn& rollout, const Autoencoder<T>& ae,
                            const std::vector<SequencePair>& test_set,
                            int k_samples, int horizon, int conditioning,
                            Rng& rng) {
  if (test_set.empty()) throw Error("evaluate_model: empty test set");
  if (k_samples < 1) throw Error("evaluate_model: k_samples must be >= 1");
  if (horizon < 1 || conditioning < 1)
    throw Error("evaluate_model: horizon and conditioning must be >= 1");
  NoGradGuard ng;

  int n = test_set[0].action_dim;
  MetricReport rep;
  rep.horizon = horizon;
  rep.conditioning = conditioning;
  rep.k_samples = k_samples;
  rep.sequence_count = test_set.size();
  rep.psnr.init(horizon);
  rep.feature_cosine.init(horizon);
  rep.action_l2.init(horizon);
  rep.action_component.assign(size_t(n), {});
  for (auto& s : rep.action_component) s.init(horizon);

  const auto hz = static_cast<size_t>(horizon);
  std::vector<detail::Welford> w_psnr(hz), w_cos(hz), w_act(hz);
  std::vector<std::vector<detail::Welford>> w_comp(
      static_cast<size_t>(n), std::vector<detail::Welford>(hz));

  for (const auto& seq : test_set) {
    if (seq.len < conditioning + horizon)
      throw Error("evaluate_model: sequence shorter than conditioning+horizon");
    auto prefix = detail::subsequence(seq, 0, conditioning);
    auto truth = detail::subsequence(seq, conditioning, horizon);

    struct SampleCurves {
      std::vector<double> psnr, cos, act;
      std::vector<std::vector<double>> comp;
    };
    std::vector<SampleCurves> samples(static_cast<size_t>(k_samples));

    for (int k = 0; k < k_samples; ++k) {
      auto gen = rollout(prefix, horizon, rng);
      if (gen.len != horizon)
        throw Error("evaluate_model: rollout returned wrong length");
      auto& sc = samples[size_t(k)];
      sc.psnr.resize(size_t(horizon));
      sc.cos.resize(size_t(horizon));
      auto ae_err = action_l2(gen, truth);
      sc.act = ae_err.total;
      sc.comp = ae_err.component;
      for (int t = 0; t < horizon; ++t) {
        sc.psnr[size_t(t)] = psnr(gen.frame(t), truth.frame(t), gen.frame_size());
        sc.cos[size_t(t)] = feature_cosine(ae, frame_to_tensor<T>(gen, t),
                                           frame_to_tensor<T>(truth, t));
        w_psnr[size_t(t)].push(sc.psnr[size_t(t)]);
        w_cos[size_t(t)].push(sc.cos[size_t(t)]);
        w_act[size_t(t)].push(sc.act[size_t(t)]);
        for (int i = 0; i < n; ++i)
          w_comp[size_t(i)][size_t(t)].push(sc.comp[size_t(i)][size_t(t)]);
      }
    }

    auto avg = [horizon](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / horizon;
    };
    auto pick = [&](auto curve_of, bool higher_better) -> const SampleCurves& {
      size_t best = 0;
      double best_score = avg(curve_of(samples[0]));
      for (size_t k = 1; k < samples.size(); ++k) {
        double s = avg(curve_of(samples[k]));
        if (higher_better ? s > best_score : s < best_score) {
          best = k;
          best_score = s;
        }
      }
      return samples[best];
    };
    const auto& bp = pick([](const SampleCurves& s) { return s.psnr; }, true);
    const auto& bc = pick([](const SampleCurves& s) { return s.cos; }, true);
    const auto& ba = pick([](const SampleCurves& s) { return s.act; }, false);
    for (int t = 0; t < horizon; ++t) {
      rep.psnr.best[size_t(t)] += bp.psnr[size_t(t)];
      rep.feature_cosine.best[size_t(t)] += bc.cos[size_t(t)];
      rep.action_l2.best[size_t(t)] += ba.act[size_t(t)];
      for (int i = 0; i < n; ++i)
        rep.action_component[size_t(i)].best[size_t(t)] +=
            ba.comp[size_t(i)][size_t(t)];
    }
  }

  double inv = 1.0 / double(test_set.size());
  for (int t = 0; t < horizon; ++t) {
    rep.psnr.mean[size_t(t)] = w_psnr[size_t(t)].mean;
    rep.psnr.stddev[size_t(t)] = w_psnr[size_t(t)].stddev();
    rep.psnr.best[size_t(t)] *= inv;
    rep.feature_cosine.mean[size_t(t)] = w_cos[size_t(t)].mean;
    rep.feature_cosine.stddev[size_t(t)] = w_cos[size_t(t)].stddev();
    rep.feature_cosine.best[size_t(t)] *= inv;
    rep.action_l2.mean[size_t(t)] = w_act[size_t(t)].mean;
    rep.action_l2.stddev[size_t(t)] = w_act[size_t(t)].stddev();
    rep.action_l2.best[size_t(t)] *= inv;
    for (int i = 0; i < n; ++i) {
      auto& s = rep.action_component[size_t(i)];
      s.mean[size_t(t)] = w_comp[size_t(i)][size_t(t)].mean;
      s.stddev[size_t(t)] = w_comp[size_t(i)][size_t(t)].stddev();
      s.best[size_t(t)] *= inv;
    }
  }
  return rep;
}

inline double series_mean(const std::vector<double>& v, size_t from = 0) {
  if (from >= v.size()) throw Error("series_mean: empty range");
  double s = 0;
  for (size_t i = from; i < v.size(); ++i) s += v[i];
  return s / double(v.size() - from);
}

// CSV rows: (t, metric, mean, std, best), t is 1-based within the horizon.
inline void write_report_csv(std::ostream& os, const MetricReport& rep) {
  os << "t,metric,mean,std,best\n";
  os.precision(10);
  auto emit = [&](const std::string& name, const MetricSeries& s) {
    for (int t = 0; t < rep.horizon; ++t)
      os << (t + 1) << ',' << name << ',' << s.mean[size_t(t)] << ','
         << s.stddev[size_t(t)] << ',' << s.best[size_t(t)] << '\n';
  };
  emit("psnr", rep.psnr);
  emit("feature_cosine", rep.feature_cosine);
  emit("action_l2", rep.action_l2);
  for (size_t i = 0; i < rep.action_component.size(); ++i)
    emit("action_l2_c" + std::to_string(i), rep.action_component[i]);
}

// Deterministic reference predictor: repeats the last conditioning frame and
// action for the whole horizon.
inline SequencePair copy_last_rollout(const SequencePair& prefix, int horizon) {
  SequencePair out;
  out.len = horizon;
  out.height = prefix.height;
  out.width = prefix.width;
  out.channels = prefix.channels;
  out.action_dim = prefix.action_dim;
  out.frames.resize(size_t(horizon) * out.frame_size());
  out.actions.resize(size_t(horizon) * out.action_dim);
  int last = prefix.len - 1;
  for (int k = 0; k < horizon; ++k) {
    std::copy(prefix.frame(last), prefix.frame(last) + prefix.frame_size(),
              out.frame(k));
    std::copy(prefix.action(last), prefix.action(last) + prefix.action_dim,
              out.action(k));
  }
  return out;
}

}  // namespace leap
