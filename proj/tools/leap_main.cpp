// Command-line front end: dataset generation, training, evaluation, sample
// generation and cross-model reporting. Exit codes: 1 usage/config, 2 I/O,
// 3 numerical.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "leap/harness/run.hpp"

namespace fs = std::filesystem;
using namespace leap;

namespace {

std::string out_root() {
  const char* env = std::getenv("LEAP_OUT_ROOT");
  return env && *env ? env : ".";
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw IoError("missing " + what + ": " + path);
}

fs::path run_dir(const RunConfig& cfg) {
  fs::path dir = fs::path(cfg.out_dir) /
                 (cfg.model + "-s" + std::to_string(cfg.seed));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir.string());
  return dir;
}

void add_run_flags(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--model", cfg.model,
                  "vg-leap | causal-leap | rafi | svg-lp | rafi-no-action");
  cmd->add_option("--dataset", cfg.dataset, "path to an LPDS dataset file");
  cmd->add_option("--out", cfg.out_dir, "output root directory");
  cmd->add_option("--steps", cfg.steps, "optimizer steps");
  cmd->add_option("--batch", cfg.batch, "sequences per step");
  cmd->add_option("--window", cfg.window, "training subsequence length");
  cmd->add_option("--conditioning", cfg.conditioning, "prefix frames");
  cmd->add_option("--horizon", cfg.horizon, "predicted frames");
  cmd->add_option("--k-samples", cfg.k_samples, "rollouts per sequence");
  cmd->add_option("--euler-steps", cfg.euler_steps, "flow sampler steps");
  cmd->add_option("--seed", cfg.seed, "run seed");
  cmd->add_option("--lr", cfg.lr, "learning rate");
  cmd->add_option("--beta", cfg.beta, "image KL weight");
  cmd->add_option("--beta-a", cfg.beta_a, "action reconstruction weight");
  cmd->add_option("--gamma", cfg.gamma, "action KL weight");
  cmd->add_option("--sigma-min", cfg.sigma_min, "flow path floor");
  cmd->add_option("--norm", cfg.norm, "reconstruction norm: l1 | l2");
  cmd->add_option("--checkpoint-every", cfg.checkpoint_every, "step interval");
  cmd->add_option("--ae-steps", cfg.ae_steps, "autoencoder budget");
  cmd->add_option("--ae-psnr", cfg.ae_psnr, "autoencoder target psnr (dB)");
  cmd->add_flag("--no-actions", cfg.no_actions,
                "drop the action pathway (vg-leap becomes svg-lp)");
  cmd->set_config("--config", "", "flat key=value config file");
}

// Bundles a trained model of any kind behind a rollout closure.
struct LoadedModel {
  std::unique_ptr<VgLeapModel<float>> vg;
  std::unique_ptr<CausalLeapModel<float>> causal;
  std::unique_ptr<RafiModel<float>> rafi;
  int euler_steps = 20;

  RolloutFn rollout() const {
    if (vg)
      return [m = vg.get()](const SequencePair& p, int h, Rng& r) {
        return m->rollout(p, h, r);
      };
    if (causal)
      return [m = causal.get()](const SequencePair& p, int h, Rng& r) {
        return m->causal_rollout(p, h, r);
      };
    return [m = rafi.get(), e = euler_steps](const SequencePair& p, int h,
                                             Rng& r) {
      return m->sample_video(p, h, e, r);
    };
  }
};

LoadedModel load_model(const RunConfig& cfg, const Dataset& ds,
                       const std::string& ckpt, const std::string& ae_path) {
  require_file(ckpt, "checkpoint");
  LoadedModel lm;
  lm.euler_steps = cfg.euler_steps;
  Rng init(cfg.seed);
  if (cfg.model == "vg-leap" || cfg.model == "svg-lp") {
    lm.vg = std::make_unique<VgLeapModel<float>>(vg_config_from(cfg, ds), init);
    load_checkpoint(ckpt, lm.vg->params);
  } else if (cfg.model == "causal-leap") {
    lm.causal =
        std::make_unique<CausalLeapModel<float>>(causal_config_from(ds), init);
    load_checkpoint(ckpt, lm.causal->params);
  } else {
    require_file(ae_path, "autoencoder checkpoint");
    auto mc = rafi_config_from(cfg, ds);
    Autoencoder<float> ae(mc.ae, init);
    load_checkpoint(ae_path, ae.params);
    Rng reg_init(cfg.seed + 1);
    lm.rafi = std::make_unique<RafiModel<float>>(mc, ae, reg_init);
    load_checkpoint(ckpt, lm.rafi->regressor.params);
  }
  return lm;
}

// Shared feature extractor for the cosine metric: train once per output root
// on the evaluation dataset, reuse afterwards.
Autoencoder<float> feature_encoder(const RunConfig& cfg, const Dataset& ds,
                                   const std::string& path) {
  AutoencoderConfig ac;
  ac.view = ds.height;
  ac.channels = ds.channels;
  // seed fixed across models so reports are comparable; unlike the rafi codec
  // this is a metric feature extractor, so a missed psnr target is tolerated
  if (fs::exists(path)) {
    Rng init(12345);
    Autoencoder<float> ae(ac, init);
    load_checkpoint(path, ae.params);
    return ae;
  }
  auto [tr, he] = split_for_ae(ds.sequences);
  Rng rng(12345);
  auto res = train_autoencoder<float>(tr, he, ac, rng, cfg.ae_steps, 1e-2,
                                      cfg.ae_psnr);
  save_checkpoint(path, res.ae.params);
  return res.ae;
}

void write_pgm(const fs::path& path, const std::vector<float>& pixels,
               int height, int width) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write image: " + path.string());
  os << "P5\n" << width << " " << height << "\n255\n";
  for (float v : pixels) {
    float c = std::min(1.0f, std::max(0.0f, v));
    os.put(char(int(std::lround(c * 255.0f))));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

// One row per sequence: conditioning frames then predictions, left to right.
void write_grid(const fs::path& path, const SequencePair& prefix,
                const SequencePair& gen) {
  int view = prefix.height;
  int cols = prefix.len + gen.len;
  std::vector<float> canvas(size_t(view) * view * cols, 0.0f);
  auto blit = [&](const SequencePair& src, int t, int col) {
    for (int y = 0; y < view; ++y)
      for (int x = 0; x < view; ++x)
        canvas[size_t(y) * (size_t(view) * cols) + size_t(col) * view + x] =
            src.frame(t)[size_t(y) * view + x];
  };
  for (int t = 0; t < prefix.len; ++t) blit(prefix, t, t);
  for (int t = 0; t < gen.len; ++t) blit(gen, t, prefix.len + t);
  write_pgm(path, canvas, view, view * cols);
}

// ---- subcommand bodies -----------------------------------------------------

int cmd_dataset(const std::string& out, int sequences, int seq_len, int view,
                double split, uint64_t seed, bool zero_actions) {
  WorldConfig wc;
  wc.view_size = view;
  wc.seq_len = seq_len;
  wc.seed = seed;
  wc.zero_actions = zero_actions;
  auto ds = generate_dataset(wc, sequences);
  auto [train, test] = split_dataset(ds.sequences, split, seed);
  Dataset tr = ds, te = ds;
  tr.sequences = train;
  te.sequences = test;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory: " + out);
  write_dataset((fs::path(out) / "train.lpds").string(), tr);
  write_dataset((fs::path(out) / "test.lpds").string(), te);
  std::cout << "sequences=" << sequences << " T=" << seq_len << " view=" << view
            << "x" << view << " split=" << train.size() << "/" << test.size()
            << " -> " << out << "/{train,test}.lpds\n";
  return 0;
}

int cmd_train(RunConfig cfg, bool resume) {
  cfg.validate();
  require_file(cfg.dataset, "dataset");
  auto ds = read_dataset(cfg.dataset);
  auto dir = run_dir(cfg);
  auto ckpt = (dir / "model.ckpt").string();
  auto log = (dir / "train_log.csv").string();
  if (resume) require_file(ckpt, "checkpoint to resume");

  TrainStats stats;
  Rng init(cfg.seed);
  if (cfg.model == "vg-leap" || cfg.model == "svg-lp") {
    VgLeapModel<float> m(vg_config_from(cfg, ds), init);
    stats = train_vg(m, ds.sequences, cfg, ckpt, log, resume);
  } else if (cfg.model == "causal-leap") {
    CausalLeapModel<float> m(causal_config_from(ds), init);
    stats = train_causal(m, ds.sequences, cfg, ckpt, log, resume);
  } else {
    auto mc = rafi_config_from(cfg, ds);
    auto [tr, he] = split_for_ae(ds.sequences);
    auto ae = obtain_autoencoder<float>((dir / "ae.ckpt").string(), tr, he, cfg);
    Rng reg_init(cfg.seed + 1);
    RafiModel<float> m(mc, ae, reg_init);
    stats = train_rafi(m, ds.sequences, cfg, ckpt, log, resume);
  }
  std::cout << "model=" << cfg.model << " steps=" << stats.end_step
            << " loss=" << stats.last_loss << " checkpoint=" << ckpt << "\n";
  return 0;
}

int cmd_eval(RunConfig cfg, std::string ckpt, std::string ae_path) {
  cfg.validate();
  require_file(cfg.dataset, "dataset");
  auto ds = read_dataset(cfg.dataset);
  auto dir = run_dir(cfg);
  if (ckpt.empty()) ckpt = (dir / "model.ckpt").string();
  if (ae_path.empty()) ae_path = (dir / "ae.ckpt").string();
  auto lm = load_model(cfg, ds, ckpt, ae_path);
  auto fe = feature_encoder(cfg, ds,
                            (fs::path(cfg.out_dir) / "feature_ae.ckpt").string());
  Rng rng(cfg.seed + 7);
  auto rep = evaluate_model(lm.rollout(), fe, ds.sequences, cfg.k_samples,
                            cfg.horizon, cfg.conditioning, rng);
  auto out = dir / "report.csv";
  std::ofstream os(out);
  if (!os) throw IoError("cannot write report: " + out.string());
  write_report_csv(os, rep);
  std::cout << "report=" << out.string()
            << " psnr_mean=" << series_mean(rep.psnr.mean)
            << " cosine_best=" << series_mean(rep.feature_cosine.best) << "\n";
  return 0;
}

int cmd_generate(RunConfig cfg, std::string ckpt, std::string ae_path,
                 int count) {
  cfg.validate();
  if (count <= 0) throw Error("generate: count must be positive");
  require_file(cfg.dataset, "dataset");
  auto ds = read_dataset(cfg.dataset);
  if (count > int(ds.sequences.size()))
    throw Error("generate: count exceeds dataset size");
  auto dir = run_dir(cfg);
  if (ckpt.empty()) ckpt = (dir / "model.ckpt").string();
  if (ae_path.empty()) ae_path = (dir / "ae.ckpt").string();
  auto lm = load_model(cfg, ds, ckpt, ae_path);
  auto rollout = lm.rollout();

  Rng rng(cfg.seed + 17);
  std::ofstream acsv(dir / "actions.csv");
  if (!acsv) throw IoError("cannot write actions csv");
  acsv << "sequence,t,component,predicted,truth\n";
  acsv.precision(10);
  for (int i = 0; i < count; ++i) {
    const auto& seq = ds.sequences[size_t(i)];
    if (seq.len < cfg.conditioning + cfg.horizon)
      throw Error("generate: sequences shorter than conditioning+horizon");
    auto prefix = detail::subsequence(seq, 0, cfg.conditioning);
    auto truth = detail::subsequence(seq, cfg.conditioning, cfg.horizon);
    auto gen = rollout(prefix, cfg.horizon, rng);
    write_grid(dir / ("sequence_" + std::to_string(i) + ".pgm"), prefix, gen);
    for (int t = 0; t < cfg.horizon; ++t)
      for (int cdx = 0; cdx < seq.action_dim; ++cdx)
        acsv << i << ',' << (t + 1) << ',' << cdx << ','
             << gen.action(t)[cdx] << ',' << truth.action(t)[cdx] << '\n';
  }
  std::cout << "wrote " << count << " grids to " << dir.string() << "\n";
  return 0;
}

struct Curve {
  std::string model;
  // metric -> per-timestep (mean, best)
  std::map<std::string, std::vector<std::pair<double, double>>> series;
};

Curve read_report(const std::string& path) {
  require_file(path, "eval report");
  std::ifstream is(path);
  Curve c;
  c.model = fs::path(path).parent_path().filename().string();
  if (c.model.empty()) c.model = path;
  std::string line;
  if (!std::getline(is, line) || line != "t,metric,mean,std,best")
    throw Error("report " + path + ": missing or wrong header");
  while (std::getline(is, line)) {
    std::istringstream row(line);
    std::string t, metric, mean, sd, best;
    if (!std::getline(row, t, ',') || !std::getline(row, metric, ',') ||
        !std::getline(row, mean, ',') || !std::getline(row, sd, ',') ||
        !std::getline(row, best, ','))
      throw Error("report " + path + ": malformed row: " + line);
    c.series[metric].emplace_back(std::stod(mean), std::stod(best));
  }
  for (const char* required : {"psnr", "feature_cosine", "action_l2"})
    if (!c.series.count(required))
      throw Error("report " + path + ": missing metric column " + required);
  return c;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<Curve> curves;
  for (const auto& p : inputs) curves.push_back(read_report(p));
  size_t horizon = curves[0].series.at("psnr").size();
  for (const auto& c : curves)
    for (const auto& [metric, s] : c.series)
      if (s.size() != horizon)
        throw Error("report: horizon mismatch for " + c.model + "/" + metric +
                    ": " + std::to_string(s.size()) + " vs " +
                    std::to_string(horizon));
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory: " + out);

  for (const char* metric : {"psnr", "feature_cosine", "action_l2"}) {
    std::ofstream os(fs::path(out) / (std::string("curve_") + metric + ".csv"));
    if (!os) throw IoError("cannot write curve file");
    os.precision(10);
    os << "t";
    for (const auto& c : curves) os << ',' << c.model << "_mean,"
                                    << c.model << "_best";
    os << '\n';
    for (size_t t = 0; t < horizon; ++t) {
      os << (t + 1);
      for (const auto& c : curves) {
        auto [m, b] = c.series.at(metric)[t];
        os << ',' << m << ',' << b;
      }
      os << '\n';
    }
  }

  std::ofstream os(fs::path(out) / "summary.csv");
  if (!os) throw IoError("cannot write summary");
  os.precision(10);
  os << "model,psnr_mean,psnr_best,cosine_mean,cosine_best,action_l2_mean,"
        "action_l2_best\n";
  for (const auto& c : curves) {
    os << c.model;
    for (const char* metric : {"psnr", "feature_cosine", "action_l2"}) {
      double m = 0, b = 0;
      for (auto [mm, bb] : c.series.at(metric)) {
        m += mm;
        b += bb;
      }
      os << ',' << m / double(horizon) << ',' << b / double(horizon);
    }
    os << '\n';
  }
  std::cout << "report tables in " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"action-conditioned stochastic video prediction lab"};
  app.require_subcommand(1);

  RunConfig cfg;
  cfg.out_dir = out_root();

  // dataset
  auto* dcmd = app.add_subcommand("dataset", "generate a synthetic dataset");
  std::string d_out = out_root();
  int d_sequences = 50, d_len = 25, d_view = 16;
  double d_split = 0.9;
  uint64_t d_seed = 1;
  bool d_zero = false;
  dcmd->add_option("--out", d_out, "output directory");
  dcmd->add_option("--sequences", d_sequences, "episode count");
  dcmd->add_option("--seq-len", d_len, "frames per episode");
  dcmd->add_option("--view", d_view, "egocentric view size");
  dcmd->add_option("--split", d_split, "train fraction");
  dcmd->add_option("--seed", d_seed, "world seed");
  dcmd->add_flag("--zero-actions", d_zero, "freeze the camera policy");

  // train
  auto* tcmd = app.add_subcommand("train", "train a model");
  bool t_resume = false;
  add_run_flags(tcmd, cfg);
  tcmd->add_flag("--resume", t_resume, "continue from the run checkpoint");

  // eval
  auto* ecmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string e_ckpt, e_ae;
  add_run_flags(ecmd, cfg);
  ecmd->add_option("--checkpoint", e_ckpt, "model checkpoint path");
  ecmd->add_option("--ae", e_ae, "autoencoder checkpoint (rafi variants)");

  // generate
  auto* gcmd = app.add_subcommand("generate", "write sample rollout grids");
  std::string g_ckpt, g_ae;
  int g_count = 1;
  add_run_flags(gcmd, cfg);
  gcmd->add_option("--checkpoint", g_ckpt, "model checkpoint path");
  gcmd->add_option("--ae", g_ae, "autoencoder checkpoint (rafi variants)");
  gcmd->add_option("--count", g_count, "sequences to render");

  // report
  auto* rcmd = app.add_subcommand("report", "compare eval reports");
  std::vector<std::string> r_inputs;
  std::string r_out = out_root();
  rcmd->add_option("reports", r_inputs, "eval report.csv files, in table order")
      ->required();
  rcmd->add_option("--out", r_out, "output directory");

  try {
    app.parse(argc, argv);
    if (dcmd->parsed())
      return cmd_dataset(d_out, d_sequences, d_len, d_view, d_split, d_seed,
                         d_zero);
    if (tcmd->parsed()) return cmd_train(cfg, t_resume);
    if (ecmd->parsed()) return cmd_eval(cfg, e_ckpt, e_ae);
    if (gcmd->parsed()) return cmd_generate(cfg, g_ckpt, g_ae, g_count);
    if (rcmd->parsed()) return cmd_report(r_inputs, r_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
