#pragma once

// Flow matching over autoencoder latents augmented with broadcast action
// channels. Training follows the sparse-conditioning scheme: pick a target
// frame tau and an earlier condition frame c, draw a point on the
// optimal-transport Gaussian path towards the target latent, and regress the
// analytic velocity field. Sampling integrates the learned field with Euler
// steps, autoregressively conditioned on previously generated frames.

#include <cmath>
#include <string>
#include <vector>

#include "leap/core/adam.hpp"
#include "leap/core/params.hpp"
#include "leap/models/common.hpp"

namespace leap {

// ---- autoencoder ----------------------------------------------------------

struct AutoencoderConfig {
  int view = 16, channels = 1;
  int hidden = 16;
  int latent_channels = 8;  // latent grid is (view/4) x (view/4) x this
};

template <class T>
class Autoencoder {
 public:
  AutoencoderConfig cfg;
  ParamMap<T> params;
  Conv<T> e1, e2, e3, d1, d2, d3;

  Autoencoder() = default;

  Autoencoder(const AutoencoderConfig& c, Rng& rng) : cfg(c) {
    e1 = Conv<T>::create(params, "e1", 4, 4, c.channels, c.hidden, 2, 1, rng);
    e2 = Conv<T>::create(params, "e2", 3, 3, c.hidden, c.hidden, 1, 1, rng);
    e3 = Conv<T>::create(params, "e3", 4, 4, c.hidden, c.latent_channels, 2, 1, rng);
    d1 = Conv<T>::create(params, "d1", 4, 4, c.latent_channels, c.hidden, 2, 1, rng);
    d2 = Conv<T>::create(params, "d2", 3, 3, c.hidden, c.hidden, 1, 1, rng);
    d3 = Conv<T>::create(params, "d3", 4, 4, c.hidden, c.channels, 2, 1, rng);
  }

  Tensor<T> encode(const Tensor<T>& frame) const {
    if (frame.shape() != std::vector<int>{cfg.view, cfg.view, cfg.channels})
      throw Error("ae encode: expected " +
                  shape_str({cfg.view, cfg.view, cfg.channels}) + ", got " +
                  shape_str(frame.shape()));
    return tanh(e3(relu(e2(relu(e1(frame))))));
  }

  Tensor<T> decode(const Tensor<T>& z) const {
    return sigmoid(d3.transposed(relu(d2(relu(d1.transposed(z))))));
  }
};

template <class T>
struct AutoencoderTrainResult {
  Autoencoder<T> ae;
  double heldout_psnr = 0;
  bool reached_threshold = false;
  long steps_used = 0;
};

template <class T>
double autoencoder_psnr(const Autoencoder<T>& ae,
                        const std::vector<SequencePair>& heldout) {
  NoGradGuard ng;
  double mse_sum = 0;
  size_t count = 0;
  for (const auto& seq : heldout)
    for (int t = 0; t < seq.len; ++t) {
      auto x = frame_to_tensor<T>(seq, t);
      auto y = ae.decode(ae.encode(x));
      for (size_t i = 0; i < x.numel(); ++i) {
        double d = double(y.data()[i]) - double(x.data()[i]);
        mse_sum += d * d;
      }
      count += x.numel();
    }
  double mse = mse_sum / double(count);
  if (mse <= 0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

// L2 reconstruction training until the held-out PSNR threshold or the step
// budget is exhausted; the encoder is frozen afterwards. Some inits fall into
// a mean-prediction plateau (~14 dB) and stay there, so a run that is still
// below the plateau bar after a grace period is reinitialized from the rng
// stream and continues within the same step budget.
template <class T>
AutoencoderTrainResult<T> train_autoencoder(
    const std::vector<SequencePair>& train,
    const std::vector<SequencePair>& heldout, const AutoencoderConfig& cfg,
    Rng& rng, long max_steps = 4000, double lr = 1e-2,
    double psnr_threshold = 28.0, int batch = 8, long check_every = 250) {
  if (train.empty()) throw Error("train_autoencoder: empty training set");
  const double plateau_bar = 18.0;
  const long grace = 2 * check_every;
  AutoencoderTrainResult<T> res;
  res.ae = Autoencoder<T>(cfg, rng);
  Adam<T> opt(lr);
  long restarted_at = 0;
  for (long step = 1; step <= max_steps; ++step) {
    auto loss = Tensor<T>::scalar(T(0));
    for (int b = 0; b < batch; ++b) {
      const auto& seq = train[size_t(rng.uniform_int(0, int64_t(train.size()) - 1))];
      int t = int(rng.uniform_int(0, seq.len - 1));
      auto x = frame_to_tensor<T>(seq, t);
      loss = add(loss, sum_sq(sub(res.ae.decode(res.ae.encode(x)), x)));
    }
    loss = scale(loss, 1.0 / batch);
    res.ae.params.zero_grad();
    loss.backward();
    opt.step(res.ae.params);
    res.steps_used = step;
    if (step % check_every == 0 || step == max_steps) {
      res.heldout_psnr = autoencoder_psnr(res.ae, heldout);
      if (res.heldout_psnr >= psnr_threshold) {
        res.reached_threshold = true;
        break;
      }
      if (res.heldout_psnr < plateau_bar && step - restarted_at >= grace &&
          step < max_steps) {
        res.ae = Autoencoder<T>(cfg, rng);
        opt = Adam<T>(lr);
        restarted_at = step;
      }
    }
  }
  return res;
}

// ---- augmented latents ----------------------------------------------------

// Appends each action component as a spatially constant channel.
template <class T>
Tensor<T> augment_latent(const Tensor<T>& z, const Tensor<T>& a) {
  if (z.shape().size() != 3)
    throw Error("augment_latent: latent must be H'xW'xC', got " +
                shape_str(z.shape()));
  if (a.shape().size() != 1)
    throw Error("augment_latent: action must be a vector, got " +
                shape_str(a.shape()));
  int H = z.shape()[0], W = z.shape()[1], C = z.shape()[2];
  int n = a.shape()[0];
  std::vector<T> out(size_t(H) * W * (C + n));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const T* zp = z.data().data() + (size_t(y) * W + x) * C;
      T* op = out.data() + (size_t(y) * W + x) * (C + n);
      for (int c = 0; c < C; ++c) op[c] = zp[c];
      for (int k = 0; k < n; ++k) op[C + k] = a.data()[k];
    }
  return Tensor<T>::make_node(
      {H, W, C + n}, std::move(out), {z, a},
      [H, W, C, n](typename Tensor<T>::Impl& node) {
        auto& pz = *node.parents[0].impl();
        auto& pa = *node.parents[1].impl();
        if (pz.requires_grad) pz.ensure_grad();
        if (pa.requires_grad) pa.ensure_grad();
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            const T* gp = node.grad.data() + (size_t(y) * W + x) * (C + n);
            if (pz.requires_grad) {
              T* zp = pz.grad.data() + (size_t(y) * W + x) * C;
              for (int c = 0; c < C; ++c) zp[c] += gp[c];
            }
            if (pa.requires_grad)
              for (int k = 0; k < n; ++k) pa.grad[k] += gp[C + k];
          }
      });
}

// Spatial mean of the trailing n channels: exact inverse of the broadcast.
template <class T>
Tensor<T> extract_action(const Tensor<T>& aug, int n) {
  int H = aug.shape()[0], W = aug.shape()[1], CC = aug.shape()[2];
  if (n <= 0 || n >= CC) throw Error("extract_action: bad channel count");
  std::vector<T> a(size_t(n), T(0));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int k = 0; k < n; ++k)
        a[k] += aug.data()[(size_t(y) * W + x) * CC + (CC - n + k)];
  for (auto& v : a) v /= T(H * W);
  return Tensor<T>::from({n}, std::move(a));
}

// ---- probability path and target field ------------------------------------

// nu = t*z + (1 - (1-sigma_min)*t)*noise
template <class T>
Tensor<T> sample_probability_path(const Tensor<T>& z_target, double t,
                                  const Tensor<T>& noise, double sigma_min) {
  if (!(t >= 0.0 && t <= 1.0))
    throw Error("sample_probability_path: flow time outside [0,1]");
  detail::check_same_shape(z_target, noise, "sample_probability_path");
  return add(scale(z_target, t), scale(noise, 1.0 - (1.0 - sigma_min) * t));
}

// U = (z - (1-sigma_min)*nu) / (1 - (1-sigma_min)*t)
template <class T>
Tensor<T> target_vector_field(const Tensor<T>& nu, const Tensor<T>& z_target,
                              double t, double sigma_min) {
  detail::check_same_shape(nu, z_target, "target_vector_field");
  double denom = 1.0 - (1.0 - sigma_min) * t;
  if (denom <= 1e-6)
    throw Error("target_vector_field: path denominator below guard");
  return scale(sub(z_target, scale(nu, 1.0 - sigma_min)), 1.0 / denom);
}

// ---- vector-field regressor -----------------------------------------------

inline std::vector<double> sinusoidal_embedding(double s, int dim) {
  std::vector<double> e(static_cast<size_t>(dim));
  for (int k = 0; k < dim / 2; ++k) {
    double w = std::pow(2.0, k);
    e[size_t(2 * k)] = std::sin(w * s);
    e[size_t(2 * k + 1)] = std::cos(w * s);
  }
  return e;
}

// Replicate a vector into spatially constant channels.
template <class T>
Tensor<T> broadcast_channels(const Tensor<T>& v, int H, int W) {
  int C = int(v.numel());
  std::vector<T> out(size_t(H) * W * C);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c)
        out[(size_t(y) * W + x) * C + c] = v.data()[c];
  return Tensor<T>::make_node(
      {H, W, C}, std::move(out), {v},
      [H, W, C](typename Tensor<T>::Impl& node) {
        auto& pv = *node.parents[0].impl();
        pv.ensure_grad();
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c)
              pv.grad[c] += node.grad[(size_t(y) * W + x) * C + c];
      });
}

struct FlowRegressorConfig {
  int grid = 4;        // latent H' = W'
  int channels = 10;   // augmented latent channels (C' + n)
  int width = 64;
  int emb_dim = 8;     // per embedded scalar (flow time, frame gap)
};

// Small U-shaped conv net over (nu, previous latent, condition latent)
// stacked channelwise plus embedded flow-time / frame-gap channels.
template <class T>
class FlowRegressor {
 public:
  FlowRegressorConfig cfg;
  ParamMap<T> params;
  Linear<T> emb_proj;
  Conv<T> in_conv, down, up, fuse, out_conv;

  FlowRegressor() = default;

  FlowRegressor(const FlowRegressorConfig& c, Rng& rng) : cfg(c) {
    int in_ch = 3 * c.channels + c.emb_dim;
    emb_proj = Linear<T>::create(params, "emb", 2 * c.emb_dim, c.emb_dim, rng);
    in_conv = Conv<T>::create(params, "in", 3, 3, in_ch, c.width, 1, 1, rng);
    down = Conv<T>::create(params, "down", 4, 4, c.width, c.width, 2, 1, rng);
    up = Conv<T>::create(params, "up", 4, 4, c.width, c.width, 2, 1, rng);
    fuse = Conv<T>::create(params, "fuse", 3, 3, 2 * c.width, c.width, 1, 1, rng);
    out_conv = Conv<T>::create(params, "out", 3, 3, c.width, c.channels, 1, 1, rng);
  }

  Tensor<T> operator()(const Tensor<T>& nu, const Tensor<T>& z_prev,
                       const Tensor<T>& z_cond, double t, int gap) const {
    auto et = sinusoidal_embedding(t, cfg.emb_dim);
    auto eg = sinusoidal_embedding(double(gap), cfg.emb_dim);
    std::vector<T> emb;
    for (double v : et) emb.push_back(T(v));
    for (double v : eg) emb.push_back(T(v));
    auto e = tanh(emb_proj(Tensor<T>::from({2 * cfg.emb_dim}, std::move(emb))));
    auto echan = broadcast_channels(e, cfg.grid, cfg.grid);
    auto x = concat<T>({nu, z_prev, z_cond, echan}, 2);
    auto d0 = relu(in_conv(x));
    auto d1 = relu(down(d0));
    auto u1 = relu(up.transposed(d1));
    auto f = relu(fuse(concat<T>({d0, u1}, 2)));
    return out_conv(f);
  }
};

// ---- training and sampling ------------------------------------------------

struct RafiConfig {
  AutoencoderConfig ae;
  FlowRegressorConfig regressor;
  int action_dim = 2;
  bool use_actions = true;  // false: plain latents, the RIVER approximation
  double sigma_min = 0.1;
  int euler_steps = 20;

  void finalize() {
    regressor.grid = ae.view / 4;
    regressor.channels = ae.latent_channels + (use_actions ? action_dim : 0);
  }
};

struct FlowSampleInfo {
  int tau = 0;  // 1-indexed target frame
  int c = 0;    // 1-indexed condition frame
  double t = 0;
};

// tau in {3..T}, c in {1..tau-2}, flow time uniform on [0,1].
inline FlowSampleInfo draw_flow_indices(int seq_len, Rng& rng) {
  if (seq_len < 5) throw Error("draw_flow_indices: need T >= 5");
  FlowSampleInfo s;
  s.tau = int(rng.uniform_int(3, seq_len));
  s.c = int(rng.uniform_int(1, s.tau - 2));
  s.t = rng.uniform();
  return s;
}

template <class T>
class RafiModel {
 public:
  RafiConfig cfg;
  Autoencoder<T> ae;  // frozen
  FlowRegressor<T> regressor;

  RafiModel(const RafiConfig& c, Autoencoder<T> trained_ae, Rng& rng)
      : cfg(c), ae(std::move(trained_ae)) {
    cfg.finalize();
    regressor = FlowRegressor<T>(cfg.regressor, rng);
    for (auto& [name, p] : ae.params) p.set_requires_grad(false);
  }

  Tensor<T> augmented(const SequencePair& seq, int t) const {
    NoGradGuard ng;
    auto z = ae.encode(frame_to_tensor<T>(seq, t));
    if (!cfg.use_actions) return z;
    return augment_latent(z, action_to_tensor<T>(seq, t));
  }

  // One flow-matching regression target drawn per batch element; returns the
  // mean squared-residual loss (graph attached to regressor params only).
  Tensor<T> flow_loss(const std::vector<SequencePair>& batch, Rng& rng,
                      std::vector<FlowSampleInfo>* info_out = nullptr) const {
    if (batch.empty()) throw Error("flow_loss: empty batch");
    auto total = Tensor<T>::scalar(T(0));
    for (const auto& seq : batch) {
      auto s = draw_flow_indices(seq.len, rng);
      auto z_tau = augmented(seq, s.tau - 1);
      auto z_prev = augmented(seq, s.tau - 2);
      auto z_cond = augmented(seq, s.c - 1);
      auto noise = rng.template randn<T>(z_tau.shape());
      auto nu = sample_probability_path(z_tau, s.t, noise, cfg.sigma_min);
      auto target = target_vector_field(nu, z_tau, s.t, cfg.sigma_min);
      auto v = regressor(nu, z_prev, z_cond, s.t, s.tau - s.c);
      total = add(total, sum_sq(sub(v, target.detach())));
      if (info_out) info_out->push_back(s);
    }
    return scale(total, 1.0 / double(batch.size()));
  }

  // Euler integration of the learned field from pure noise to a new latent.
  // The last step is a denoised endpoint readout instead of one more Euler
  // extrapolation: inverting the path formula, z = v (1 - (1-s) t) + (1-s) nu,
  // which removes the sigma_min noise floor from the generated latent.
  Tensor<T> integrate(const Tensor<T>& z_prev, const Tensor<T>& z_cond, int gap,
                      int euler_steps, Rng& rng) const {
    if (euler_steps < 1) throw Error("integrate: euler_steps must be >= 1");
    auto nu = rng.template randn<T>(z_prev.shape());
    double dt = 1.0 / euler_steps;
    for (int k = 0; k < euler_steps; ++k) {
      double t = k * dt;
      auto v = regressor(nu, z_prev, z_cond, t, gap);
      if (k + 1 < euler_steps) {
        nu = add(nu, scale(v, dt));
      } else {
        nu = add(scale(v, 1.0 - (1.0 - cfg.sigma_min) * t),
                 scale(nu, 1.0 - cfg.sigma_min));
      }
    }
    return nu;
  }

  // Autoregressive generation conditioned on the previous frame and the one
  // two steps back (the training-time gap distribution collapsed to c=tau-2).
  SequencePair sample_video(const SequencePair& condition, int horizon,
                            int euler_steps, Rng& rng) const {
    if (condition.len < 2)
      throw Error("sample_video: need at least 2 condition frames");
    if (horizon < 0) throw Error("sample_video: negative horizon");
    NoGradGuard ng;

    SequencePair out;
    out.len = horizon;
    out.height = condition.height;
    out.width = condition.width;
    out.channels = condition.channels;
    out.action_dim = condition.action_dim;
    out.frames.resize(size_t(horizon) * out.frame_size());
    out.actions.resize(size_t(horizon) * out.action_dim);
    if (horizon == 0) return out;

    std::vector<Tensor<T>> lat;
    for (int t = 0; t < condition.len; ++t) lat.push_back(augmented(condition, t));

    int zc = cfg.ae.latent_channels;
    for (int k = 0; k < horizon; ++k) {
      auto z_prev = lat[lat.size() - 1];
      auto z_cond = lat[lat.size() - 2];
      auto gen = integrate(z_prev, z_cond, 2, euler_steps, rng);

      Tensor<T> z_new;
      if (cfg.use_actions) {
        z_new = slice(gen, 2, 0, zc);
        auto act = clamp(extract_action(gen, cfg.action_dim), 0.0, 1.0);
        for (int i = 0; i < out.action_dim; ++i)
          out.action(k)[i] = float(act.data()[i]);
        lat.push_back(augment_latent(z_new, act));
      } else {
        z_new = gen;
        for (int i = 0; i < out.action_dim; ++i) out.action(k)[i] = 0.0f;
        lat.push_back(z_new);
      }
      auto frame = ae.decode(z_new);
      for (size_t i = 0; i < out.frame_size(); ++i)
        out.frame(k)[i] = float(frame.data()[i]);
    }
    return out;
  }
};

}  // namespace leap
