#pragma once

// Reusable network pieces: affine layer, LSTM cell, frame and action
// encoders/decoders. Blocks are pure functions of (inputs, parameters);
// recurrent state is threaded explicitly by the caller.

#include <cmath>
#include <string>

#include "leap/core/params.hpp"
#include "leap/core/random.hpp"
#include "leap/core/tensor.hpp"

namespace leap {

template <class T>
struct Linear {
  Tensor<T> w, b;

  static Linear create(ParamMap<T>& pm, const std::string& prefix, int in,
                       int out, Rng& rng) {
    Linear l;
    double s = 1.0 / std::sqrt(double(in));
    l.w = pm.add(prefix + ".w", rng.template rand_uniform<T>({out, in}, -s, s));
    l.b = pm.add(prefix + ".b", Tensor<T>::zeros({out}));
    return l;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, w, b); }
};

template <class T>
struct Conv {
  Tensor<T> w, b;
  int stride, pad;

  static Conv create(ParamMap<T>& pm, const std::string& prefix, int kh, int kw,
                     int in_ch, int out_ch, int stride, int pad, Rng& rng) {
    Conv c;
    c.stride = stride;
    c.pad = pad;
    double s = 1.0 / std::sqrt(double(kh * kw * in_ch));
    c.w = pm.add(prefix + ".w",
                 rng.template rand_uniform<T>({kh, kw, in_ch, out_ch}, -s, s));
    c.b = pm.add(prefix + ".b", Tensor<T>::zeros({out_ch}));
    return c;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, w, b, stride, pad);
  }

  Tensor<T> transposed(const Tensor<T>& x) const {
    return conv2d_transpose(x, w, b, stride, pad);
  }
};

template <class T>
struct LstmState {
  Tensor<T> h, c;

  static LstmState zero(int width) {
    return {Tensor<T>::zeros({width}), Tensor<T>::zeros({width})};
  }

  bool defined() const { return h.defined() && c.defined(); }
};

// Single fused-gate LSTM cell; gate order i, f, g, o. Forget-gate bias
// initialized to 1.
template <class T>
struct LstmCell {
  Tensor<T> w, b;  // w:[4g, in+g]  b:[4g]
  int width = 0, input_dim = 0;

  static LstmCell create(ParamMap<T>& pm, const std::string& prefix, int in,
                         int g, Rng& rng) {
    LstmCell c;
    c.width = g;
    c.input_dim = in;
    double s = 1.0 / std::sqrt(double(in + g));
    c.w = pm.add(prefix + ".w",
                 rng.template rand_uniform<T>({4 * g, in + g}, -s, s));
    auto bias = Tensor<T>::zeros({4 * g});
    for (int i = g; i < 2 * g; ++i) bias.data()[i] = T(1);
    c.b = pm.add(prefix + ".b", bias);
    return c;
  }

  LstmState<T> step(const LstmState<T>& state, const Tensor<T>& input) const {
    if (!state.defined()) throw Error("lstm_step: missing recurrent state");
    if (int(input.numel()) != input_dim || input.shape().size() != 1)
      throw Error("lstm_step: input width " + shape_str(input.shape()) +
                  " does not match cell input dim " +
                  std::to_string(input_dim));
    if (int(state.h.numel()) != width || int(state.c.numel()) != width)
      throw Error("lstm_step: state width mismatch, expected " +
                  std::to_string(width));
    auto xh = concat<T>({input, state.h}, 0);
    auto gates = linear(xh, w, b);
    auto i = sigmoid(slice(gates, 0, 0, width));
    auto f = sigmoid(slice(gates, 0, width, width));
    auto g = tanh(slice(gates, 0, 2 * width, width));
    auto o = sigmoid(slice(gates, 0, 3 * width, width));
    auto c_new = add(mul(f, state.c), mul(i, g));
    auto h_new = mul(o, tanh(c_new));
    return {h_new, c_new};
  }
};

template <class T>
struct FrameCode {
  Tensor<T> code;   // length g
  Tensor<T> skip;   // first conv activation, used by skip decoding; optional
};

// Two strided conv layers down to view/4, then affine to a width-g code.
template <class T>
struct FrameEncoder {
  Conv<T> conv1, conv2;
  Linear<T> head;
  int view = 0, channels = 0, g = 0;
  int c1 = 8, c2 = 16;

  static FrameEncoder create(ParamMap<T>& pm, const std::string& prefix,
                             int view, int channels, int g, Rng& rng) {
    if (view % 4 != 0) throw Error("frame encoder: view size must be /4");
    FrameEncoder e;
    e.view = view;
    e.channels = channels;
    e.g = g;
    e.conv1 = Conv<T>::create(pm, prefix + ".conv1", 4, 4, channels, e.c1, 2, 1, rng);
    e.conv2 = Conv<T>::create(pm, prefix + ".conv2", 4, 4, e.c1, e.c2, 2, 1, rng);
    int flat = (view / 4) * (view / 4) * e.c2;
    e.head = Linear<T>::create(pm, prefix + ".head", flat, g, rng);
    return e;
  }

  FrameCode<T> operator()(const Tensor<T>& frame) const {
    if (frame.shape() != std::vector<int>{view, view, channels})
      throw Error("encode_frame: expected " +
                  shape_str({view, view, channels}) + ", got " +
                  shape_str(frame.shape()));
    for (T v : frame.data())
      if (!(v >= T(0) && v <= T(1)))
        throw Error("encode_frame: pixel outside [0,1]");
    auto a1 = relu(conv1(frame));
    auto a2 = relu(conv2(a1));
    auto code = tanh(head(reshape(a2, {int(a2.numel())})));
    return {code, a1};
  }
};

// Mirror of the encoder; sigmoid squashes output into [0,1]. With skips
// enabled the first deconv's output is concatenated with the stored conv1
// activation of the last conditioning frame.
template <class T>
struct FrameDecoder {
  Linear<T> head;
  Conv<T> deconv1, deconv2;
  int view = 0, channels = 0, g = 0;
  bool use_skips = false;
  int c1 = 8, c2 = 16;

  static FrameDecoder create(ParamMap<T>& pm, const std::string& prefix,
                             int view, int channels, int g, bool use_skips,
                             Rng& rng) {
    FrameDecoder d;
    d.view = view;
    d.channels = channels;
    d.g = g;
    d.use_skips = use_skips;
    int flat = (view / 4) * (view / 4) * d.c2;
    d.head = Linear<T>::create(pm, prefix + ".head", g, flat, rng);
    d.deconv1 = Conv<T>::create(pm, prefix + ".deconv1", 4, 4, d.c2, d.c1, 2, 1, rng);
    int mid = use_skips ? 2 * d.c1 : d.c1;
    d.deconv2 = Conv<T>::create(pm, prefix + ".deconv2", 4, 4, mid, channels, 2, 1, rng);
    return d;
  }

  Tensor<T> operator()(const Tensor<T>& code, const Tensor<T>& skip = {}) const {
    if (int(code.numel()) != g || code.shape().size() != 1)
      throw Error("decode_frame: code width " + shape_str(code.shape()) +
                  ", expected " + std::to_string(g));
    auto x = relu(head(code));
    x = reshape(x, {view / 4, view / 4, c2});
    x = relu(deconv1.transposed(x));
    if (use_skips) {
      if (!skip.defined())
        throw Error("decode_frame: skips enabled but none provided");
      x = concat<T>({x, skip}, 2);
    }
    return sigmoid(deconv2.transposed(x));
  }
};

// Single affine lift of the n-dim action into a g_a-dim code.
template <class T>
struct ActionEncoder {
  Linear<T> lift;
  int n = 0, g_a = 0;

  static ActionEncoder create(ParamMap<T>& pm, const std::string& prefix, int n,
                              int g_a, Rng& rng) {
    if (g_a <= n) throw Error("action encoder: g_a must exceed n");
    ActionEncoder e;
    e.n = n;
    e.g_a = g_a;
    e.lift = Linear<T>::create(pm, prefix + ".lift", n, g_a, rng);
    return e;
  }

  Tensor<T> operator()(const Tensor<T>& a) const {
    if (a.shape() != std::vector<int>{n})
      throw Error("encode_action: expected length " + std::to_string(n) +
                  ", got " + shape_str(a.shape()));
    return tanh(lift(a));
  }
};

template <class T>
struct ActionDecoder {
  Linear<T> proj;
  int n = 0, g_a = 0;

  static ActionDecoder create(ParamMap<T>& pm, const std::string& prefix, int n,
                              int g_a, Rng& rng) {
    ActionDecoder d;
    d.n = n;
    d.g_a = g_a;
    d.proj = Linear<T>::create(pm, prefix + ".proj", g_a, n, rng);
    return d;
  }

  Tensor<T> operator()(const Tensor<T>& code) const {
    if (code.shape() != std::vector<int>{g_a})
      throw Error("decode_action: expected length " + std::to_string(g_a) +
                  ", got " + shape_str(code.shape()));
    return sigmoid(proj(code));
  }
};

}  // namespace leap
