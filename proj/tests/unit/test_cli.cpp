#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "icl/errors.hpp"
#include "icl_cli/commands.hpp"
#include "icl_cli/run_config.hpp"

using namespace icl;
using namespace icl::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
  auto dir = fs::temp_directory_path() / ("icl_cli_test_" + leaf);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Runs the real executable; returns its exit status.
int run_icl(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ICL_BINARY) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig tiny_run(const fs::path& out) {
  RunConfig c;
  c.model = {16, 16, 3, 4, 2};
  c.train.max_iters = 4;
  c.train.val_every = 2;
  c.n_labeled = 2;
  c.n_unlabeled = 3;
  c.n_val = 2;
  c.out_dir = out.string();
  return c;
}

}  // namespace

TEST(RunConfig, DefaultsMirrorTheLibrary) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.train.max_iters, 2000u);
  EXPECT_EQ(c.train.weights.alpha, 1.0);
  EXPECT_EQ(c.train.weights.beta, 50.0);
  EXPECT_EQ(c.split_config().n_unlabeled, 60u);
  EXPECT_EQ(c.split_config().master_seed, c.train.master_seed);
}

TEST(RunConfig, FormatParseRoundTripIsExact) {
  RunConfig c;
  c.train.lr0 = 0.1 + 0.2;  // not a short decimal
  c.train.weights = {0.3, 12.5};
  c.train.master_seed = 18446744073709551615ULL;
  c.train.mode = TrainMode::supervised_sspa;
  c.noise_sigma = 1.0 / 3.0;
  c.data_dir = "/tmp/some data";
  c.out_dir = "runs/a";
  const std::string text = format_run_config(c);
  RunConfig back = parse_run_config(text);
  EXPECT_EQ(format_run_config(back), text);
  EXPECT_EQ(back.train.lr0, c.train.lr0);
  EXPECT_EQ(back.noise_sigma, c.noise_sigma);
  EXPECT_EQ(back.train.master_seed, c.train.master_seed);
  EXPECT_EQ(back.train.mode, TrainMode::supervised_sspa);
  EXPECT_EQ(back.data_dir, "/tmp/some data");
}

TEST(RunConfig, EveryKeyAppearsInTheCanonicalForm) {
  const std::string text = format_run_config(RunConfig{});
  for (const auto& key : run_config_keys()) {
    const auto leaf = key.substr(key.find('.') + 1);
    EXPECT_NE(text.find(leaf + " = "), std::string::npos) << key;
  }
}

TEST(RunConfig, CommentsAndWhitespace) {
  auto c = parse_run_config("# top\n[train]\n  max_iters = 7   # trailing\n\n[model]\nheads=2\n");
  EXPECT_EQ(c.train.max_iters, 7u);
  EXPECT_EQ(c.model.heads, 2u);
}

TEST(RunConfig, UnknownKeysAreAllListed) {
  try {
    parse_run_config("[train]\nmax_iter = 5\nlr0 = 0.1\n[model]\ndepth = 3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("train.max_iter"), std::string::npos) << msg;
    EXPECT_NE(msg.find("model.depth"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("lr0"), std::string::npos) << msg;
  }
}

TEST(RunConfig, MalformedInput) {
  EXPECT_THROW(parse_run_config("max_iters = 5\n"), ConfigError);      // no section
  EXPECT_THROW(parse_run_config("[train]\nmax_iters 5\n"), ConfigError);  // no '='
  EXPECT_THROW(parse_run_config("[train]\nmax_iters = five\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nmax_iters = -1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nmode = semi\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nbatch_size = 3\n").validate(), ConfigError);
}

TEST(RunConfig, SetValueOverrides) {
  RunConfig c;
  set_run_config_value(c, "train.alpha", "0.5");
  set_run_config_value(c, "data.n_labeled", "8");
  EXPECT_EQ(c.train.weights.alpha, 0.5);
  EXPECT_EQ(c.n_labeled, 8u);
  EXPECT_THROW(set_run_config_value(c, "train.gamma", "1"), ConfigError);
}

TEST(GenData, DefaultPoolSizesAndDeterministicBytes) {
  auto a = scratch_dir("gen_a"), b = scratch_dir("gen_b");
  GenDataOptions opt;
  opt.out = a.string();
  std::ostringstream log;
  gen_data(opt, log);
  EXPECT_NE(log.str().find("labeled 4  unlabeled 60  val 20"), std::string::npos) << log.str();
  opt.out = b.string();
  gen_data(opt, log);
  const std::pair<const char*, std::size_t> pools[] = {{"labeled", 4}, {"unlabeled", 60}, {"val", 20}};
  for (auto [pool, n] : pools) {
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a / pool)) {
      ++files;
      EXPECT_EQ(slurp(e.path()), slurp(b / pool / e.path().filename())) << e.path();
    }
    EXPECT_EQ(files, n) << pool;
  }
}

TEST(GenData, FilesReproduceTheInMemorySplit) {
  auto dir = scratch_dir("gen_rt");
  GenDataOptions opt;
  opt.seed = 5;
  opt.n_labeled = 2;
  opt.n_unlabeled = 2;
  opt.n_val = 3;
  opt.out = dir.string();
  std::ostringstream log;
  gen_data(opt, log);
  std::size_t classes = 0;
  auto loaded = load_split(dir.string(), &classes);
  auto direct = make_split(SplitConfig{2, 2, 3, 5}, PhantomConfig{});
  EXPECT_EQ(classes, 4u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(loaded.labeled[i].mask, direct.labeled[i].mask);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(loaded.val[i].mask, direct.val[i].mask);
    EXPECT_EQ(loaded.val[i].image, direct.val[i].image);
  }
  for (const auto& s : loaded.unlabeled) EXPECT_FALSE(s.has_mask());
}

TEST(GenData, UnwritablePathFails) {
  auto dir = scratch_dir("gen_bad");
  std::ofstream(dir / "file") << "x";
  GenDataOptions opt;
  opt.n_unlabeled = 1;
  opt.out = (dir / "file" / "sub").string();
  std::ostringstream log;
  EXPECT_THROW(gen_data(opt, log), Error);
}

TEST(Train, WritesFourArtifactsAndEvalReproducesTheLastRow) {
  auto dir = scratch_dir("train");
  std::ostringstream log;
  auto result = train_run(tiny_run(dir), log);
  for (const char* f : {"config.resolved", "metrics.csv", "best.ckpt", "final.ckpt"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  // The resolved config alone reproduces the run.
  auto replay = load_run_config((dir / "config.resolved").string());
  EXPECT_EQ(format_run_config(replay), slurp(dir / "config.resolved"));

  auto split = make_split(tiny_run(dir).split_config(), tiny_run(dir).phantom_config());
  auto report = evaluate_checkpoint(read_checkpoint((dir / "final.ckpt").string()), split.val, false);
  EXPECT_EQ(report.iteration, 4u);
  const std::string csv = slurp(dir / "metrics.csv");
  const std::string last_rows = csv.substr(csv.size() - (report.metrics_csv.size() - 20));
  EXPECT_EQ("iter,class,dsc,hd95\n" + last_rows, report.metrics_csv);
}

TEST(Train, IdenticalConfigsGiveIdenticalCsv) {
  auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
  std::ostringstream log;
  train_run(tiny_run(a), log);
  train_run(tiny_run(b), log);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
}

TEST(Eval, OracleModeIsPerfect) {
  auto data = scratch_dir("eval_data"), run = scratch_dir("eval_run"), out = scratch_dir("eval_out");
  GenDataOptions g;
  g.n_labeled = 1;
  g.n_unlabeled = 1;
  g.n_val = 3;
  g.phantom = {16, 16, 3, 0.05};
  g.out = data.string();
  std::ostringstream log;
  gen_data(g, log);
  train_run(tiny_run(run), log);
  auto report = eval_run({(run / "best.ckpt").string(), data.string(), out.string(), true}, log);
  EXPECT_EQ(report.metrics.mean_dsc, 1.0);
  EXPECT_EQ(report.metrics.mean_hd95, 0.0);
  for (const auto& c : report.metrics.per_class) {
    EXPECT_EQ(c.dsc, 1.0);
    EXPECT_EQ(c.hd95, 0.0);
  }
  // Header plus Z - 1 classes plus the mean row: Z + 1 lines.
  EXPECT_EQ(count_lines(slurp(out / "eval_metrics.csv")), 3u + 1u);
  const std::string plot = slurp(out / "eval_plot.csv");
  EXPECT_EQ(plot.rfind("sample,class,metric,value\n", 0), 0u);
  // 3 samples x 2 classes x 2 metrics.
  EXPECT_EQ(count_lines(plot), 1u + 12u);
}

TEST(Eval, ModelAndDataMustAgree) {
  auto data = scratch_dir("eval_mismatch_data"), run = scratch_dir("eval_mismatch_run");
  GenDataOptions g;
  g.n_labeled = g.n_unlabeled = 1;
  g.n_val = 1;
  g.out = data.string();  // 64x64, 4 classes
  std::ostringstream log;
  gen_data(g, log);
  train_run(tiny_run(run), log);  // 16x16, 3 classes
  EXPECT_THROW(eval_run({(run / "final.ckpt").string(), data.string(), "", false}, log), Error);
}

TEST(Binary, ExitCodes) {
  auto dir = scratch_dir("binary");
  EXPECT_EQ(run_icl("gen-data --n-labeled 1 --n-unlabeled 1 --n-val 1 --size 16 --classes 3 --out " +
                        (dir / "data").string(),
                    dir / "gen.log"),
            0);
  EXPECT_NE(slurp(dir / "gen.log").find("labeled 1  unlabeled 1  val 1"), std::string::npos);

  std::ofstream(dir / "bad.cfg") << "[train]\nmax_iter = 3\n";
  EXPECT_EQ(run_icl("train --config " + (dir / "bad.cfg").string() + " --out " + (dir / "r").string(),
                    dir / "bad.log"),
            2);
  EXPECT_NE(slurp(dir / "bad.log").find("train.max_iter"), std::string::npos);

  std::ofstream(dir / "ok.cfg") << format_run_config(tiny_run(dir / "ok"));
  EXPECT_EQ(run_icl("train --supervised-only --config " + (dir / "ok.cfg").string(), dir / "ok.log"), 0);
  auto resolved = load_run_config((dir / "ok" / "config.resolved").string());
  EXPECT_EQ(resolved.train.mode, TrainMode::supervised);
  EXPECT_EQ(resolved.train.weights.alpha, 0.0);
  EXPECT_EQ(resolved.train.weights.beta, 0.0);

  EXPECT_EQ(run_icl("eval --checkpoint " + (dir / "missing.ckpt").string() + " --data " + (dir / "data").string(),
                    dir / "eval.log"),
            2);
  EXPECT_NE(run_icl("frobnicate", dir / "usage.log"), 0);
}

TEST(OutDir, ExplicitThenEnvironmentThenFallback) {
  EXPECT_EQ(resolve_out_dir("x", "y"), "x");
  ::setenv("ICL_OUT_DIR", "/env/dir", 1);
  EXPECT_EQ(resolve_out_dir("", "y"), "/env/dir");
  ::unsetenv("ICL_OUT_DIR");
  EXPECT_EQ(resolve_out_dir("", "y"), "y");
}
