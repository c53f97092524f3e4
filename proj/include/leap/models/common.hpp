#pragma once

#include <string>
#include <utility>

#include "leap/data/world.hpp"
#include "leap/latent/gaussian.hpp"
#include "leap/nn/blocks.hpp"

namespace leap {

enum class LossNorm { L1, L2 };

inline LossNorm loss_norm_from_string(const std::string& s) {
  if (s == "l1" || s == "L1") return LossNorm::L1;
  if (s == "l2" || s == "L2") return LossNorm::L2;
  throw Error("unknown reconstruction norm: " + s);
}

template <class T>
Tensor<T> recon_error(const Tensor<T>& pred, const Tensor<T>& target,
                      LossNorm norm) {
  auto diff = sub(pred, target);
  return norm == LossNorm::L2 ? sum_sq(diff) : sum(abs(diff));
}

// Recurrent distribution head: LSTM followed by mean / log-variance
// projections. Used for every posterior and learned prior.
template <class T>
struct GaussianHead {
  LstmCell<T> cell;
  Linear<T> mean_head, lv_head;
  int out_dim = 0;

  static GaussianHead create(ParamMap<T>& pm, const std::string& prefix,
                             int in, int hidden, int out, Rng& rng) {
    GaussianHead h;
    h.out_dim = out;
    h.cell = LstmCell<T>::create(pm, prefix + ".rnn", in, hidden, rng);
    h.mean_head = Linear<T>::create(pm, prefix + ".mean", hidden, out, rng);
    h.lv_head = Linear<T>::create(pm, prefix + ".lv", hidden, out, rng);
    return h;
  }

  std::pair<GaussianParams<T>, LstmState<T>> step(const LstmState<T>& state,
                                                  const Tensor<T>& input) const {
    auto ns = cell.step(state, input);
    return {GaussianParams<T>::from_raw(mean_head(ns.h), lv_head(ns.h)), ns};
  }
};

// Recurrent code predictor: LSTM followed by a tanh projection back to the
// code width, matching the range of encoder outputs.
template <class T>
struct CodePredictor {
  LstmCell<T> cell;
  Linear<T> head;
  int out_dim = 0;

  static CodePredictor create(ParamMap<T>& pm, const std::string& prefix,
                              int in, int hidden, int out, Rng& rng) {
    CodePredictor p;
    p.out_dim = out;
    p.cell = LstmCell<T>::create(pm, prefix + ".rnn", in, hidden, rng);
    p.head = Linear<T>::create(pm, prefix + ".head", hidden, out, rng);
    return p;
  }

  std::pair<Tensor<T>, LstmState<T>> step(const LstmState<T>& state,
                                          const Tensor<T>& input) const {
    auto ns = cell.step(state, input);
    return {tanh(head(ns.h)), ns};
  }
};

template <class T>
Tensor<T> frame_to_tensor(const SequencePair& seq, int t) {
  std::vector<T> v(seq.frame(t), seq.frame(t) + seq.frame_size());
  return Tensor<T>::from({seq.height, seq.width, seq.channels}, std::move(v));
}

template <class T>
Tensor<T> action_to_tensor(const SequencePair& seq, int t) {
  std::vector<T> v(seq.action(t), seq.action(t) + seq.action_dim);
  return Tensor<T>::from({seq.action_dim}, std::move(v));
}

}  // namespace leap
