#pragma once

// Training plumbing shared by the command-line tool and the acceptance tests:
// run configuration, window sampling, per-step CSV logging, and resumable
// checkpoints that carry optimizer moments and the RNG stream.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "leap/core/adam.hpp"
#include "leap/core/checkpoint.hpp"
#include "leap/data/dataset.hpp"
#include "leap/eval/metrics.hpp"
#include "leap/models/causal_leap.hpp"
#include "leap/models/vg_leap.hpp"

namespace leap {

struct RunConfig {
  std::string model = "vg-leap";  // vg-leap | causal-leap | rafi | svg-lp |
                                  // rafi-no-action
  std::string dataset;
  std::string out_dir = ".";
  long steps = 2000;
  int batch = 4;
  int window = 10;        // training subsequence length
  int conditioning = 5;   // eval/generate prefix (2 for rafi variants)
  int horizon = 10;
  int k_samples = 20;
  int euler_steps = 20;
  uint64_t seed = 1;
  double lr = 1e-3;
  double beta = 1e-4, beta_a = 1.0, gamma = 1e-4;
  double sigma_min = 0.1;
  std::string norm = "l2";
  bool no_actions = false;  // vg-leap with this flag is exactly svg-lp
  long checkpoint_every = 500;
  long ae_steps = 4000;
  double ae_psnr = 28.0;

  bool is_rafi() const { return model == "rafi" || model == "rafi-no-action"; }

  void validate() const {
    if (model != "vg-leap" && model != "causal-leap" && model != "rafi" &&
        model != "svg-lp" && model != "rafi-no-action")
      throw Error("unknown model kind: " + model);
    if (steps < 0 || batch < 1 || window < 2 || conditioning < 1 ||
        horizon < 1 || k_samples < 1 || euler_steps < 1 ||
        checkpoint_every < 1)
      throw Error("run config: non-positive field");
    if (is_rafi() && window < 5)
      throw Error("run config: rafi needs window >= 5");
    loss_norm_from_string(norm);
  }
};

// ---- checkpoint plumbing ---------------------------------------------------

template <class T>
void save_train_checkpoint(const std::string& path, const ParamMap<T>& params,
                           Adam<T>& opt, long step, const Rng& rng) {
  std::vector<NamedArray> extra;
  for (const auto& [name, p] : params) {
    auto& m = opt.moment1(name);
    auto& v = opt.moment2(name);
    if (m.size() != p.numel()) {  // optimizer never stepped yet
      m.assign(p.numel(), T(0));
      v.assign(p.numel(), T(0));
    }
    NamedArray am{"__adam_m_" + name, p.shape(), {}};
    am.data.assign(m.begin(), m.end());
    NamedArray av{"__adam_v_" + name, p.shape(), {}};
    av.data.assign(v.begin(), v.end());
    extra.push_back(std::move(am));
    extra.push_back(std::move(av));
  }
  extra.push_back(NamedArray{"__step", {1}, {float(step)}});
  save_checkpoint(path, params, extra);
  std::ofstream rs(path + ".rng");
  if (!rs) throw IoError("cannot write rng state: " + path + ".rng");
  rs << rng.save_state();
}

template <class T>
long load_train_checkpoint(const std::string& path, ParamMap<T>& params,
                           Adam<T>& opt, Rng& rng) {
  auto extra = load_checkpoint(path, params);
  long step = 0;
  for (auto& a : extra) {
    if (a.name == "__step") {
      step = long(a.data.at(0));
    } else if (a.name.rfind("__adam_m_", 0) == 0) {
      auto& m = opt.moment1(a.name.substr(9));
      m.assign(a.data.begin(), a.data.end());
    } else if (a.name.rfind("__adam_v_", 0) == 0) {
      auto& v = opt.moment2(a.name.substr(9));
      v.assign(a.data.begin(), a.data.end());
    }
  }
  opt.set_step_count(step);
  std::ifstream rs(path + ".rng");
  if (!rs) throw IoError("missing rng state sidecar: " + path + ".rng");
  std::stringstream buf;
  buf << rs.rdbuf();
  rng.load_state(buf.str());
  return step;
}

// ---- window sampling -------------------------------------------------------

inline SequencePair sample_window(const std::vector<SequencePair>& seqs,
                                  int window, Rng& rng) {
  const auto& seq = seqs[size_t(rng.uniform_int(0, int64_t(seqs.size()) - 1))];
  if (seq.len < window)
    throw Error("sample_window: sequences shorter than the training window");
  int start = int(rng.uniform_int(0, seq.len - window));
  return detail::subsequence(seq, start, window);
}

inline std::vector<SequencePair> sample_batch(
    const std::vector<SequencePair>& seqs, int window, int batch, Rng& rng) {
  std::vector<SequencePair> out;
  for (int i = 0; i < batch; ++i) out.push_back(sample_window(seqs, window, rng));
  return out;
}

// ---- training loops --------------------------------------------------------

struct TrainStats {
  long start_step = 0, end_step = 0;
  double first_loss = 0, last_loss = 0;
};

namespace detail {

inline std::ofstream open_log(const std::string& path, bool resume,
                              const std::string& header) {
  std::ofstream log(path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot open log for writing: " + path);
  if (!resume) log << header << '\n';
  log.precision(10);
  return log;
}

}  // namespace detail

// Shared loop: `step_fn(batch, rng)` returns (loss tensor, csv suffix string).
// Non-finite loss aborts before the parameter update, so the last periodic
// checkpoint on disk stays good.
template <class T, class StepFn>
TrainStats train_loop(ParamMap<T>& params, Adam<T>& opt, Rng& rng,
                      const std::vector<SequencePair>& train_set,
                      const RunConfig& cfg, const std::string& ckpt_path,
                      const std::string& log_path, const std::string& header,
                      long start_step, StepFn&& step_fn) {
  auto log = detail::open_log(log_path, start_step > 0, header);
  TrainStats stats;
  stats.start_step = start_step;
  stats.end_step = start_step;
  if (start_step >= cfg.steps) {
    save_train_checkpoint(ckpt_path, params, opt, start_step, rng);
    return stats;
  }
  for (long step = start_step + 1; step <= cfg.steps; ++step) {
    auto batch = sample_batch(train_set, cfg.window, cfg.batch, rng);
    auto [loss, suffix] = step_fn(batch, rng);
    double lv = double(loss.item());
    if (!std::isfinite(lv))
      throw NumericalError("non-finite loss at step " + std::to_string(step));
    params.zero_grad();
    loss.backward();
    opt.step(params);
    log << step << ',' << lv << suffix << '\n';
    if (stats.first_loss == 0 && step == start_step + 1) stats.first_loss = lv;
    stats.last_loss = lv;
    stats.end_step = step;
    if (step % cfg.checkpoint_every == 0 || step == cfg.steps)
      save_train_checkpoint(ckpt_path, params, opt, step, rng);
  }
  log.flush();
  if (!log) throw IoError("write failed: " + log_path);
  return stats;
}

inline VgLeapConfig vg_config_from(const RunConfig& cfg, const Dataset& ds) {
  VgLeapConfig mc;
  mc.view = ds.height;
  mc.channels = ds.channels;
  mc.action_dim = ds.action_dim;
  mc.use_actions = cfg.model != "svg-lp" && !cfg.no_actions;
  return mc;
}

inline CausalLeapConfig causal_config_from(const Dataset& ds) {
  CausalLeapConfig mc;
  mc.view = ds.height;
  mc.channels = ds.channels;
  mc.action_dim = ds.action_dim;
  return mc;
}

inline RafiConfig rafi_config_from(const RunConfig& cfg, const Dataset& ds) {
  RafiConfig mc;
  mc.ae.view = ds.height;
  mc.ae.channels = ds.channels;
  mc.action_dim = ds.action_dim;
  mc.use_actions = cfg.model != "rafi-no-action";
  mc.sigma_min = cfg.sigma_min;
  mc.euler_steps = cfg.euler_steps;
  mc.finalize();
  return mc;
}

template <class T>
TrainStats train_vg(VgLeapModel<T>& model, const std::vector<SequencePair>& train_set,
                    const RunConfig& cfg, const std::string& ckpt_path,
                    const std::string& log_path, bool resume) {
  ElboWeights w;
  w.beta = cfg.beta;
  w.beta_a = cfg.beta_a;
  auto norm = loss_norm_from_string(cfg.norm);
  Adam<T> opt(cfg.lr);
  Rng rng(cfg.seed);
  long start = resume ? load_train_checkpoint(ckpt_path, model.params, opt, rng)
                      : 0;
  return train_loop(model.params, opt, rng, train_set, cfg, ckpt_path, log_path,
                    "step,loss,recon_x,recon_a,kl", start,
                    [&](const std::vector<SequencePair>& batch, Rng& r) {
                      auto [loss, c] = model.elbo_loss(batch, w, norm, r);
                      std::ostringstream os;
                      os.precision(10);
                      os << ',' << c.recon_x << ',' << c.recon_a << ',' << c.kl;
                      return std::make_pair(loss, os.str());
                    });
}

template <class T>
TrainStats train_causal(CausalLeapModel<T>& model,
                        const std::vector<SequencePair>& train_set,
                        const RunConfig& cfg, const std::string& ckpt_path,
                        const std::string& log_path, bool resume) {
  CausalElboWeights w;
  w.beta = cfg.beta;
  w.beta_a = cfg.beta_a;
  w.gamma = cfg.gamma;
  auto norm = loss_norm_from_string(cfg.norm);
  Adam<T> opt(cfg.lr);
  Rng rng(cfg.seed);
  long start = resume ? load_train_checkpoint(ckpt_path, model.params, opt, rng)
                      : 0;
  return train_loop(model.params, opt, rng, train_set, cfg, ckpt_path, log_path,
                    "step,loss,recon_x,recon_a,kl_z,kl_u", start,
                    [&](const std::vector<SequencePair>& batch, Rng& r) {
                      auto [loss, c] = model.causal_elbo_loss(batch, w, norm, r);
                      std::ostringstream os;
                      os.precision(10);
                      os << ',' << c.recon_x << ',' << c.recon_a << ','
                         << c.kl_z << ',' << c.kl_u;
                      return std::make_pair(loss, os.str());
                    });
}

// The frozen AE is trained (or loaded) separately; only regressor parameters
// are optimized here.
template <class T>
TrainStats train_rafi(RafiModel<T>& model,
                      const std::vector<SequencePair>& train_set,
                      const RunConfig& cfg, const std::string& ckpt_path,
                      const std::string& log_path, bool resume) {
  Adam<T> opt(cfg.lr);
  Rng rng(cfg.seed);
  long start = resume
                   ? load_train_checkpoint(ckpt_path, model.regressor.params,
                                           opt, rng)
                   : 0;
  return train_loop(model.regressor.params, opt, rng, train_set, cfg, ckpt_path,
                    log_path, "step,loss", start,
                    [&](const std::vector<SequencePair>& batch, Rng& r) {
                      return std::make_pair(model.flow_loss(batch, r),
                                            std::string());
                    });
}

// Deterministic train/held-out split for autoencoder fitting that works for
// arbitrarily small sets: the last tenth (at least one sequence) is held out.
inline std::pair<std::vector<SequencePair>, std::vector<SequencePair>>
split_for_ae(const std::vector<SequencePair>& seqs) {
  if (seqs.size() < 2)
    throw Error("autoencoder split: need at least 2 sequences");
  size_t held = std::max<size_t>(1, seqs.size() / 10);
  std::vector<SequencePair> tr(seqs.begin(), seqs.end() - long(held));
  std::vector<SequencePair> he(seqs.end() - long(held), seqs.end());
  return {tr, he};
}

// AE for rafi runs: load if present next to the run, else train and save.
template <class T>
Autoencoder<T> obtain_autoencoder(const std::string& ae_path,
                                  const std::vector<SequencePair>& train_set,
                                  const std::vector<SequencePair>& heldout,
                                  const RunConfig& cfg) {
  AutoencoderConfig ac;
  ac.view = train_set.at(0).height;
  ac.channels = train_set.at(0).channels;
  if (std::filesystem::exists(ae_path)) {
    Rng init(cfg.seed + 101);
    Autoencoder<T> ae(ac, init);
    load_checkpoint(ae_path, ae.params);
    return ae;
  }
  Rng rng(cfg.seed + 101);
  auto res = train_autoencoder<T>(train_set, heldout, ac, rng, cfg.ae_steps,
                                  1e-2, cfg.ae_psnr);
  if (!res.reached_threshold)
    throw NumericalError("autoencoder stalled at " +
                         std::to_string(res.heldout_psnr) +
                         " dB held-out psnr within " +
                         std::to_string(res.steps_used) + " steps");
  save_checkpoint(ae_path, res.ae.params);
  return res.ae;
}

}  // namespace leap
