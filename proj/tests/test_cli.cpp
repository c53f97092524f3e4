// Exercises the installed command-line binary end to end: exit codes, file
// determinism, the svg-lp ablation identity, and checkpoint resume.
// argv[1] is the path to the binary.

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

static std::string g_bin;
static fs::path g_work;

namespace {

int run(const std::string& args) {
  std::string cmd = g_bin + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(bool(is));
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string l;
  while (std::getline(is, l)) out.push_back(l);
  return out;
}

std::string ws(const std::string& sub) { return (g_work / sub).string(); }

std::string small_train_args(const std::string& model, const std::string& out,
                             long steps, int seed) {
  return "train --model " + model + " --dataset " + ws("data/train.lpds") +
         " --out " + ws(out) + " --steps " + std::to_string(steps) +
         " --seed " + std::to_string(seed) +
         " --window 8 --batch 2 --checkpoint-every 20";
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("train --no-such-flag") == 1);
  CHECK(run("generate --model vg-leap --dataset " + ws("data/test.lpds") +
            " --out " + ws("runs") + " --count 0") == 1);
}

TEST_CASE("dataset generation: defaults, arithmetic, determinism") {
  REQUIRE(run("dataset --out " + ws("data") +
              " --sequences 20 --seq-len 12 --seed 3") == 0);
  CHECK(fs::exists(ws("data/train.lpds")));
  CHECK(fs::exists(ws("data/test.lpds")));

  REQUIRE(run("dataset --out " + ws("data_b") +
              " --sequences 20 --seq-len 12 --seed 3") == 0);
  CHECK(slurp(ws("data/train.lpds")) == slurp(ws("data_b/train.lpds")));
  CHECK(slurp(ws("data/test.lpds")) == slurp(ws("data_b/test.lpds")));

  REQUIRE(run("dataset --out " + ws("data_c") +
              " --sequences 20 --seq-len 12 --seed 4") == 0);
  CHECK(slurp(ws("data/train.lpds")) != slurp(ws("data_c/train.lpds")));
}

TEST_CASE("io errors exit with code 2") {
  CHECK(run("train --model vg-leap --dataset " + ws("no_such.lpds") +
            " --out " + ws("runs") + " --steps 1") == 2);
  CHECK(run("eval --model vg-leap --dataset " + ws("data/test.lpds") +
            " --out " + ws("runs_empty") +
            " --horizon 3 --conditioning 5 --k-samples 1") == 2);
  CHECK(run("report " + ws("no_such.csv") + " --out " + ws("tables")) == 2);
}

TEST_CASE("diverging training exits with code 3 and keeps the last checkpoint") {
  CHECK(run(small_train_args("vg-leap", "runs_nan", 30, 1) + " --lr 1e20") == 3);
}

TEST_CASE("steps 0 emits the initial checkpoint only") {
  REQUIRE(run(small_train_args("vg-leap", "runs_zero", 0, 1)) == 0);
  CHECK(fs::exists(ws("runs_zero/vg-leap-s1/model.ckpt")));
  auto log = lines(slurp(ws("runs_zero/vg-leap-s1/train_log.csv")));
  REQUIRE(log.size() == 1);
  CHECK(log[0] == "step,loss,recon_x,recon_a,kl");
}

TEST_CASE("svg-lp equals vg-leap --no-actions: identical loss trace") {
  REQUIRE(run(small_train_args("svg-lp", "runs_ab", 10, 5)) == 0);
  REQUIRE(run(small_train_args("vg-leap", "runs_ab", 10, 5) +
              " --no-actions") == 0);
  CHECK(slurp(ws("runs_ab/svg-lp-s5/train_log.csv")) ==
        slurp(ws("runs_ab/vg-leap-s5/train_log.csv")));
}

TEST_CASE("resumed training continues the loss trace exactly") {
  REQUIRE(run(small_train_args("vg-leap", "runs_full", 40, 7)) == 0);
  REQUIRE(run(small_train_args("vg-leap", "runs_part", 20, 7)) == 0);
  REQUIRE(run(small_train_args("vg-leap", "runs_part", 40, 7) + " --resume") ==
          0);
  auto full = lines(slurp(ws("runs_full/vg-leap-s7/train_log.csv")));
  auto part = lines(slurp(ws("runs_part/vg-leap-s7/train_log.csv")));
  REQUIRE(full.size() == 41);
  REQUIRE(part.size() == 41);
  CHECK(full == part);
  CHECK(slurp(ws("runs_full/vg-leap-s7/model.ckpt")) ==
        slurp(ws("runs_part/vg-leap-s7/model.ckpt")));
}

TEST_CASE("fixed-seed pipeline reruns are byte-identical through eval") {
  for (const char* out : {"runs_e1", "runs_e2"}) {
    REQUIRE(run(small_train_args("vg-leap", out, 10, 9)) == 0);
    REQUIRE(run("eval --model vg-leap --dataset " + ws("data/test.lpds") +
                " --out " + ws(out) +
                " --seed 9 --horizon 4 --conditioning 5 --k-samples 2") == 0);
  }
  CHECK(slurp(ws("runs_e1/vg-leap-s9/report.csv")) ==
        slurp(ws("runs_e2/vg-leap-s9/report.csv")));
  CHECK(slurp(ws("runs_e1/vg-leap-s9/report.csv"))
            .rfind("t,metric,mean,std,best\n", 0) == 0);
}

TEST_CASE("generate writes grids of the contracted layout, deterministically") {
  REQUIRE(run("generate --model vg-leap --dataset " + ws("data/test.lpds") +
              " --out " + ws("runs_e1") +
              " --seed 9 --horizon 4 --conditioning 5 --count 1") == 0);
  auto grid = ws("runs_e1/vg-leap-s9/sequence_0.pgm");
  REQUIRE(fs::exists(grid));
  CHECK(!fs::exists(ws("runs_e1/vg-leap-s9/sequence_1.pgm")));
  auto first = slurp(grid);
  // header advertises width = (conditioning + horizon) * view, height = view
  CHECK(first.rfind("P5\n144 16\n255\n", 0) == 0);
  CHECK(fs::exists(ws("runs_e1/vg-leap-s9/actions.csv")));

  REQUIRE(run("generate --model vg-leap --dataset " + ws("data/test.lpds") +
              " --out " + ws("runs_e1") +
              " --seed 9 --horizon 4 --conditioning 5 --count 1") == 0);
  CHECK(slurp(grid) == first);
}

TEST_CASE("report compares models and rejects mismatched horizons") {
  REQUIRE(run("report " + ws("runs_e1/vg-leap-s9/report.csv") + " " +
              ws("runs_e2/vg-leap-s9/report.csv") + " --out " + ws("tables")) ==
          0);
  auto summary = lines(slurp(ws("tables/summary.csv")));
  REQUIRE(summary.size() == 3);
  // identical inputs: every aggregate column agrees
  auto a = summary[1].substr(summary[1].find(','));
  auto b = summary[2].substr(summary[2].find(','));
  CHECK(a == b);
  CHECK(fs::exists(ws("tables/curve_psnr.csv")));
  CHECK(fs::exists(ws("tables/curve_feature_cosine.csv")));
  CHECK(fs::exists(ws("tables/curve_action_l2.csv")));

  // corrupt horizon: drop the last row
  auto rows = lines(slurp(ws("runs_e2/vg-leap-s9/report.csv")));
  std::ofstream trunc(ws("runs_e2/vg-leap-s9/short.csv"));
  for (size_t i = 0; i + 1 < rows.size(); ++i) trunc << rows[i] << '\n';
  trunc.close();
  CHECK(run("report " + ws("runs_e1/vg-leap-s9/report.csv") + " " +
            ws("runs_e2/vg-leap-s9/short.csv") + " --out " + ws("tables2")) ==
        1);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <path-to-binary>\n");
    return 2;
  }
  g_bin = argv[1];
  g_work = fs::temp_directory_path() / "leap_cli_test";
  fs::remove_all(g_work);
  fs::create_directories(g_work);
  doctest::Context ctx;
  ctx.applyCommandLine(1, argv);
  return ctx.run();
}
