#pragma once

// Augmented-state model: one latent process over the joint image-action
// state, with a learned prior one step behind the posterior, and recurrent
// frame/action predictors sharing the sampled latent. With use_actions=false
// every action pathway disappears and the model degenerates to the
// learned-prior image-only baseline.

#include <cmath>
#include <string>
#include <vector>

#include "leap/core/params.hpp"
#include "leap/models/common.hpp"

namespace leap {

struct VgLeapConfig {
  int view = 16, channels = 1;
  int action_dim = 2;
  int frame_code = 64;    // g
  int action_code = 16;   // g_a
  int z_dim = 16;
  int predictor_width = 64;
  int latent_net_width = 32;
  bool use_actions = true;
  bool use_skips = false;
};

struct ElboWeights {
  double beta = 1e-4;
  double beta_a = 1.0;

  void validate() const {
    if (!(beta >= 0) || !(beta_a >= 0) || !std::isfinite(beta) ||
        !std::isfinite(beta_a))
      throw Error("elbo weights must be finite and non-negative");
  }
};

struct ElboComponents {
  double recon_x = 0, recon_a = 0, kl = 0;
};

template <class T>
struct VgLeapStates {
  LstmState<T> posterior, prior, frame, action;
};

template <class T>
class VgLeapModel {
 public:
  VgLeapConfig cfg;
  ParamMap<T> params;
  FrameEncoder<T> frame_enc;
  FrameDecoder<T> frame_dec;
  ActionEncoder<T> act_enc;
  ActionDecoder<T> act_dec;
  GaussianHead<T> posterior, prior;
  CodePredictor<T> frame_pred, act_pred;

  VgLeapModel(const VgLeapConfig& c, Rng& rng) : cfg(c) {
    frame_enc = FrameEncoder<T>::create(params, "frame_enc", c.view, c.channels,
                                        c.frame_code, rng);
    frame_dec = FrameDecoder<T>::create(params, "frame_dec", c.view, c.channels,
                                        c.frame_code, c.use_skips, rng);
    int latent_in = c.frame_code + (c.use_actions ? c.action_code : 0);
    posterior = GaussianHead<T>::create(params, "posterior", latent_in,
                                        c.latent_net_width, c.z_dim, rng);
    prior = GaussianHead<T>::create(params, "prior", latent_in,
                                    c.latent_net_width, c.z_dim, rng);
    frame_pred = CodePredictor<T>::create(params, "frame_pred",
                                          c.frame_code + c.z_dim,
                                          c.predictor_width, c.frame_code, rng);
    if (c.use_actions) {
      act_enc = ActionEncoder<T>::create(params, "act_enc", c.action_dim,
                                         c.action_code, rng);
      act_dec = ActionDecoder<T>::create(params, "act_dec", c.action_dim,
                                         c.action_code, rng);
      act_pred = CodePredictor<T>::create(params, "act_pred",
                                          c.action_code + c.z_dim,
                                          c.predictor_width, c.action_code, rng);
    }
  }

  VgLeapStates<T> initial_states() const {
    VgLeapStates<T> s;
    s.posterior = LstmState<T>::zero(cfg.latent_net_width);
    s.prior = LstmState<T>::zero(cfg.latent_net_width);
    s.frame = LstmState<T>::zero(cfg.predictor_width);
    s.action = LstmState<T>::zero(cfg.predictor_width);
    return s;
  }

  Tensor<T> latent_input(const Tensor<T>& h, const Tensor<T>& alpha) const {
    if (!cfg.use_actions) return h;
    return concat<T>({h, alpha}, 0);
  }

  // Posterior over z_t given codes up to t (recurrence carries the history).
  std::pair<GaussianParams<T>, LstmState<T>> posterior_step(
      const Tensor<T>& h_t, const Tensor<T>& alpha_t,
      const LstmState<T>& state) const {
    return posterior.step(state, latent_input(h_t, alpha_t));
  }

  // Prior over z_t, conditioned one step behind.
  std::pair<GaussianParams<T>, LstmState<T>> prior_step(
      const Tensor<T>& h_prev, const Tensor<T>& alpha_prev,
      const LstmState<T>& state) const {
    return prior.step(state, latent_input(h_prev, alpha_prev));
  }

  struct Prediction {
    Tensor<T> frame_code, action_code;
    LstmState<T> frame_state, action_state;
  };

  // Advance both predictors on the shared latent sample.
  Prediction predict_step(const Tensor<T>& h_prev, const Tensor<T>& alpha_prev,
                          const Tensor<T>& z_t, const LstmState<T>& frame_state,
                          const LstmState<T>& action_state) const {
    Prediction out;
    auto [hc, fs] =
        frame_pred.step(frame_state, concat<T>({h_prev, z_t}, 0));
    out.frame_code = hc;
    out.frame_state = fs;
    if (cfg.use_actions) {
      auto [ac, as] =
          act_pred.step(action_state, concat<T>({alpha_prev, z_t}, 0));
      out.action_code = ac;
      out.action_state = as;
    } else {
      out.action_state = action_state;
    }
    return out;
  }

  // Teacher-forced ELBO over the window; components are detached sums for
  // logging. Loss is averaged over the batch.
  std::pair<Tensor<T>, ElboComponents> elbo_loss(
      const std::vector<SequencePair>& batch, const ElboWeights& weights,
      LossNorm norm, Rng& rng) const {
    weights.validate();
    if (batch.empty()) throw Error("elbo_loss: empty batch");
    auto total = Tensor<T>::scalar(T(0));
    ElboComponents comps;
    for (const auto& seq : batch) {
      if (seq.len < 2) throw Error("elbo_loss: sequence shorter than 2");
      std::vector<Tensor<T>> h(seq.len), alpha(seq.len), skips(seq.len);
      for (int t = 0; t < seq.len; ++t) {
        auto fc = frame_enc(frame_to_tensor<T>(seq, t));
        h[t] = fc.code;
        skips[t] = fc.skip;
        if (cfg.use_actions) alpha[t] = act_enc(action_to_tensor<T>(seq, t));
      }
      auto st = initial_states();
      auto seq_loss = Tensor<T>::scalar(T(0));
      for (int t = 1; t < seq.len; ++t) {
        auto [post, post_st] = posterior_step(h[t], alpha[t], st.posterior);
        st.posterior = post_st;
        auto [pri, pri_st] = prior_step(h[t - 1], alpha[t - 1], st.prior);
        st.prior = pri_st;
        auto z = reparam_sample(post, rng.template randn<T>({cfg.z_dim}));
        auto pred = predict_step(h[t - 1], alpha[t - 1], z, st.frame, st.action);
        st.frame = pred.frame_state;
        st.action = pred.action_state;

        auto decoded = frame_dec(pred.frame_code,
                                 cfg.use_skips ? skips[t - 1] : Tensor<T>{});
        auto rx = recon_error(decoded, frame_to_tensor<T>(seq, t), norm);
        auto kl = kl_diag_gauss(post, pri);
        auto step_loss = add(rx, scale(kl, weights.beta));
        comps.recon_x += double(rx.item());
        comps.kl += double(kl.item());
        if (cfg.use_actions) {
          auto da = act_dec(pred.action_code);
          auto ra = recon_error(da, action_to_tensor<T>(seq, t), norm);
          step_loss = add(step_loss, scale(ra, weights.beta_a));
          comps.recon_a += double(ra.item());
        }
        if (!std::isfinite(double(step_loss.item())))
          throw NumericalError("elbo_loss: non-finite loss at timestep " +
                      std::to_string(t));
        seq_loss = add(seq_loss, step_loss);
      }
      total = add(total, seq_loss);
    }
    double inv = 1.0 / double(batch.size());
    comps.recon_x *= inv;
    comps.recon_a *= inv;
    comps.kl *= inv;
    return {scale(total, inv), comps};
  }

  // Warm recurrent states on the prefix, then generate autoregressively with
  // latents sampled from the prior; predicted frames are re-encoded.
  SequencePair rollout(const SequencePair& prefix, int horizon, Rng& rng) const {
    if (horizon < 0) throw Error("rollout: negative horizon");
    if (prefix.len < 1) throw Error("rollout: prefix must hold >= 1 frame");
    NoGradGuard ng;

    SequencePair out;
    out.len = horizon;
    out.height = prefix.height;
    out.width = prefix.width;
    out.channels = prefix.channels;
    out.action_dim = prefix.action_dim;
    out.frames.resize(size_t(horizon) * out.frame_size());
    out.actions.resize(size_t(horizon) * out.action_dim);
    if (horizon == 0) return out;

    auto st = initial_states();
    Tensor<T> h_prev, a_prev, skip;
    for (int t = 0; t < prefix.len; ++t) {
      auto fc = frame_enc(frame_to_tensor<T>(prefix, t));
      Tensor<T> al;
      if (cfg.use_actions) al = act_enc(action_to_tensor<T>(prefix, t));
      if (t > 0) {
        auto [pri, pri_st] = prior_step(h_prev, a_prev, st.prior);
        st.prior = pri_st;
        auto z = reparam_sample(pri, rng.template randn<T>({cfg.z_dim}));
        auto pred = predict_step(h_prev, a_prev, z, st.frame, st.action);
        st.frame = pred.frame_state;
        st.action = pred.action_state;
      }
      h_prev = fc.code;
      skip = fc.skip;
      a_prev = al;
    }

    for (int k = 0; k < horizon; ++k) {
      auto [pri, pri_st] = prior_step(h_prev, a_prev, st.prior);
      st.prior = pri_st;
      auto z = reparam_sample(pri, rng.template randn<T>({cfg.z_dim}));
      auto pred = predict_step(h_prev, a_prev, z, st.frame, st.action);
      st.frame = pred.frame_state;
      st.action = pred.action_state;

      auto frame = frame_dec(pred.frame_code, cfg.use_skips ? skip : Tensor<T>{});
      for (size_t i = 0; i < out.frame_size(); ++i)
        out.frame(k)[i] = float(frame.data()[i]);
      h_prev = frame_enc(frame).code;

      if (cfg.use_actions) {
        auto act = act_dec(pred.action_code);
        for (int i = 0; i < out.action_dim; ++i)
          out.action(k)[i] = float(act.data()[i]);
        a_prev = act_enc(act);
      } else {
        for (int i = 0; i < out.action_dim; ++i) out.action(k)[i] = 0.0f;
      }
    }
    return out;
  }
};

}  // namespace leap
