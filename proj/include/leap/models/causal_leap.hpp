#pragma once

// Causal model: an action-agnostic image latent z_t and an action latent u_t
// conditioned on the already-sampled z. Four distribution networks (image
// posterior/prior, action posterior/prior), two predictors, two KL terms.
// Within a timestep z_t is sampled before u_t; the action predictor never
// sees image codes.

#include <cmath>
#include <string>
#include <vector>

#include "leap/core/params.hpp"
#include "leap/models/common.hpp"

namespace leap {

struct CausalLeapConfig {
  int view = 16, channels = 1;
  int action_dim = 2;
  int frame_code = 64;   // g
  int action_code = 16;  // g_a
  int z_dim = 16;
  int u_dim = 8;         // action latent, deliberately smaller
  int predictor_width = 64;
  int action_predictor_width = 64;
  int latent_net_width = 32;
  bool use_skips = false;
};

struct CausalElboWeights {
  double beta = 1e-4;
  double beta_a = 1.0;
  double gamma = 1e-4;

  void validate() const {
    if (!(beta >= 0) || !(beta_a >= 0) || !(gamma >= 0) ||
        !std::isfinite(beta) || !std::isfinite(beta_a) || !std::isfinite(gamma))
      throw Error("causal elbo weights must be finite and non-negative");
  }
};

struct CausalElboComponents {
  double recon_x = 0, recon_a = 0, kl_z = 0, kl_u = 0;
};

template <class T>
struct CausalLeapStates {
  LstmState<T> image_posterior, image_prior, action_posterior, action_prior;
  LstmState<T> frame, action;
};

template <class T>
class CausalLeapModel {
 public:
  CausalLeapConfig cfg;
  ParamMap<T> params;
  FrameEncoder<T> frame_enc;
  FrameDecoder<T> frame_dec;
  ActionEncoder<T> act_enc;
  ActionDecoder<T> act_dec;
  GaussianHead<T> image_posterior, image_prior;    // theta, phi
  GaussianHead<T> action_posterior, action_prior;  // psi, phi'
  CodePredictor<T> frame_pred, act_pred;           // zeta1, zeta2

  CausalLeapModel(const CausalLeapConfig& c, Rng& rng) : cfg(c) {
    frame_enc = FrameEncoder<T>::create(params, "frame_enc", c.view, c.channels,
                                        c.frame_code, rng);
    frame_dec = FrameDecoder<T>::create(params, "frame_dec", c.view, c.channels,
                                        c.frame_code, c.use_skips, rng);
    act_enc = ActionEncoder<T>::create(params, "act_enc", c.action_dim,
                                       c.action_code, rng);
    act_dec = ActionDecoder<T>::create(params, "act_dec", c.action_dim,
                                       c.action_code, rng);
    image_posterior = GaussianHead<T>::create(params, "image_posterior",
                                              c.frame_code, c.latent_net_width,
                                              c.z_dim, rng);
    image_prior = GaussianHead<T>::create(params, "image_prior", c.frame_code,
                                          c.latent_net_width, c.z_dim, rng);
    action_posterior = GaussianHead<T>::create(
        params, "action_posterior", c.action_code + c.z_dim,
        c.latent_net_width, c.u_dim, rng);
    action_prior = GaussianHead<T>::create(params, "action_prior",
                                           c.action_code + c.z_dim,
                                           c.latent_net_width, c.u_dim, rng);
    // frame predictor consumes (h_{t-1}, z_t, alpha_{t-1})
    frame_pred = CodePredictor<T>::create(
        params, "frame_pred", c.frame_code + c.z_dim + c.action_code,
        c.predictor_width, c.frame_code, rng);
    // action predictor consumes (alpha_{t-1}, u_t) only
    act_pred = CodePredictor<T>::create(params, "act_pred",
                                        c.action_code + c.u_dim,
                                        c.action_predictor_width,
                                        c.action_code, rng);
  }

  CausalLeapStates<T> initial_states() const {
    CausalLeapStates<T> s;
    s.image_posterior = LstmState<T>::zero(cfg.latent_net_width);
    s.image_prior = LstmState<T>::zero(cfg.latent_net_width);
    s.action_posterior = LstmState<T>::zero(cfg.latent_net_width);
    s.action_prior = LstmState<T>::zero(cfg.latent_net_width);
    s.frame = LstmState<T>::zero(cfg.predictor_width);
    s.action = LstmState<T>::zero(cfg.action_predictor_width);
    return s;
  }

  // z_t posterior: image codes only, no action input.
  std::pair<GaussianParams<T>, LstmState<T>> image_posterior_step(
      const Tensor<T>& h_t, const LstmState<T>& state) const {
    return image_posterior.step(state, h_t);
  }

  std::pair<GaussianParams<T>, LstmState<T>> image_prior_step(
      const Tensor<T>& h_prev, const LstmState<T>& state) const {
    return image_prior.step(state, h_prev);
  }

  // u_t posterior; requires the z sample of the same step (causal ordering).
  std::pair<GaussianParams<T>, LstmState<T>> action_posterior_step(
      const Tensor<T>& alpha_t, const Tensor<T>& z_t,
      const LstmState<T>& state) const {
    if (!z_t.defined())
      throw Error("action_posterior_step: z_t not yet sampled");
    return action_posterior.step(state, concat<T>({alpha_t, z_t}, 0));
  }

  // u_t prior: action codes and z history up to t-1.
  std::pair<GaussianParams<T>, LstmState<T>> action_prior_step(
      const Tensor<T>& alpha_prev, const Tensor<T>& z_prev,
      const LstmState<T>& state) const {
    return action_prior.step(state, concat<T>({alpha_prev, z_prev}, 0));
  }

  struct Prediction {
    Tensor<T> frame_code, action_code;
    LstmState<T> frame_state, action_state;
  };

  Prediction predict_steps(const Tensor<T>& h_prev, const Tensor<T>& alpha_prev,
                           const Tensor<T>& z_t, const Tensor<T>& u_t,
                           const LstmState<T>& frame_state,
                           const LstmState<T>& action_state) const {
    Prediction out;
    auto [hc, fs] = frame_pred.step(
        frame_state, concat<T>({h_prev, z_t, alpha_prev}, 0));
    auto [ac, as] = act_pred.step(action_state, concat<T>({alpha_prev, u_t}, 0));
    out.frame_code = hc;
    out.frame_state = fs;
    out.action_code = ac;
    out.action_state = as;
    return out;
  }

  std::pair<Tensor<T>, CausalElboComponents> causal_elbo_loss(
      const std::vector<SequencePair>& batch, const CausalElboWeights& weights,
      LossNorm norm, Rng& rng) const {
    weights.validate();
    if (batch.empty()) throw Error("causal_elbo_loss: empty batch");
    auto total = Tensor<T>::scalar(T(0));
    CausalElboComponents comps;
    for (const auto& seq : batch) {
      if (seq.len < 2) throw Error("causal_elbo_loss: sequence shorter than 2");
      std::vector<Tensor<T>> h(seq.len), alpha(seq.len), skips(seq.len);
      for (int t = 0; t < seq.len; ++t) {
        auto fc = frame_enc(frame_to_tensor<T>(seq, t));
        h[t] = fc.code;
        skips[t] = fc.skip;
        alpha[t] = act_enc(action_to_tensor<T>(seq, t));
      }
      auto st = initial_states();
      Tensor<T> z_prev;  // sample from the previous step, feeds the u prior
      auto seq_loss = Tensor<T>::scalar(T(0));
      for (int t = 1; t < seq.len; ++t) {
        auto [post_z, ps] = image_posterior_step(h[t], st.image_posterior);
        st.image_posterior = ps;
        auto [pri_z, qs] = image_prior_step(h[t - 1], st.image_prior);
        st.image_prior = qs;
        auto z = reparam_sample(post_z, rng.template randn<T>({cfg.z_dim}));

        auto [post_u, us] = action_posterior_step(alpha[t], z,
                                                  st.action_posterior);
        st.action_posterior = us;
        // prior over u is one step behind in both action and z history; at
        // t=1 there is no previous z, so a zero placeholder stands in
        auto z_hist = z_prev.defined() ? z_prev : Tensor<T>::zeros({cfg.z_dim});
        auto [pri_u, vs] =
            action_prior_step(alpha[t - 1], z_hist, st.action_prior);
        st.action_prior = vs;
        auto u = reparam_sample(post_u, rng.template randn<T>({cfg.u_dim}));

        auto pred = predict_steps(h[t - 1], alpha[t - 1], z, u, st.frame,
                                  st.action);
        st.frame = pred.frame_state;
        st.action = pred.action_state;

        auto decoded = frame_dec(pred.frame_code,
                                 cfg.use_skips ? skips[t - 1] : Tensor<T>{});
        auto rx = recon_error(decoded, frame_to_tensor<T>(seq, t), norm);
        auto ra = recon_error(act_dec(pred.action_code),
                              action_to_tensor<T>(seq, t), norm);
        auto kl_z = kl_diag_gauss(post_z, pri_z);
        auto kl_u = kl_diag_gauss(post_u, pri_u);
        auto step_loss = add(add(rx, scale(kl_z, weights.beta)),
                             add(scale(ra, weights.beta_a),
                                 scale(kl_u, weights.gamma)));
        if (!std::isfinite(double(step_loss.item())))
          throw NumericalError("causal_elbo_loss: non-finite loss at timestep " +
                      std::to_string(t));
        comps.recon_x += double(rx.item());
        comps.recon_a += double(ra.item());
        comps.kl_z += double(kl_z.item());
        comps.kl_u += double(kl_u.item());
        seq_loss = add(seq_loss, step_loss);
        z_prev = z;
      }
      total = add(total, seq_loss);
    }
    double inv = 1.0 / double(batch.size());
    comps.recon_x *= inv;
    comps.recon_a *= inv;
    comps.kl_z *= inv;
    comps.kl_u *= inv;
    return {scale(total, inv), comps};
  }

  // Inference ordering per step: z from the image prior, then u from the
  // action prior, then both predictors.
  SequencePair causal_rollout(const SequencePair& prefix, int horizon,
                              Rng& rng) const {
    if (horizon < 0) throw Error("causal_rollout: negative horizon");
    if (prefix.len < 1) throw Error("causal_rollout: prefix must hold >= 1 frame");
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
    Tensor<T> h_prev, a_prev, skip, z_prev;
    auto advance = [&](const Tensor<T>& h_in, const Tensor<T>& a_in)
        -> Prediction {
      auto [pri_z, qs] = image_prior_step(h_in, st.image_prior);
      st.image_prior = qs;
      auto z = reparam_sample(pri_z, rng.template randn<T>({cfg.z_dim}));
      auto z_hist = z_prev.defined() ? z_prev : Tensor<T>::zeros({cfg.z_dim});
      auto [pri_u, vs] = action_prior_step(a_in, z_hist, st.action_prior);
      st.action_prior = vs;
      auto u = reparam_sample(pri_u, rng.template randn<T>({cfg.u_dim}));
      auto pred = predict_steps(h_in, a_in, z, u, st.frame, st.action);
      st.frame = pred.frame_state;
      st.action = pred.action_state;
      z_prev = z;
      return pred;
    };

    for (int t = 0; t < prefix.len; ++t) {
      auto fc = frame_enc(frame_to_tensor<T>(prefix, t));
      auto al = act_enc(action_to_tensor<T>(prefix, t));
      if (t > 0) advance(h_prev, a_prev);
      h_prev = fc.code;
      skip = fc.skip;
      a_prev = al;
    }

    for (int k = 0; k < horizon; ++k) {
      auto pred = advance(h_prev, a_prev);
      auto frame = frame_dec(pred.frame_code, cfg.use_skips ? skip : Tensor<T>{});
      auto act = act_dec(pred.action_code);
      for (size_t i = 0; i < out.frame_size(); ++i)
        out.frame(k)[i] = float(frame.data()[i]);
      for (int i = 0; i < out.action_dim; ++i)
        out.action(k)[i] = float(act.data()[i]);
      h_prev = frame_enc(frame).code;
      a_prev = act_enc(act);
    }
    return out;
  }
};

}  // namespace leap
