#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "icl/errors.hpp"
#include "icl_cli/commands.hpp"

namespace {

// <$ICL_OUT_DIR>/<leaf>, or ./<leaf> when the variable is unset.
std::string default_out_dir(const std::string& leaf) {
  const std::string root = icl::cli::resolve_out_dir("", "");
  return root.empty() ? leaf : root + "/" + leaf;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace icl::cli;
  CLI::App app{"Semi-supervised segmentation with semantic proxies: data, training, evaluation, verification"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic labeled/unlabeled/val split as .icls files");
  gen_cmd->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
  gen_cmd->add_option("--n-labeled", gen.n_labeled, "Labeled samples")->capture_default_str();
  gen_cmd->add_option("--n-unlabeled", gen.n_unlabeled, "Unlabeled samples")->capture_default_str();
  gen_cmd->add_option("--n-val", gen.n_val, "Validation samples")->capture_default_str();
  gen_cmd->add_option("--size", gen.phantom.height, "Image height and width")->capture_default_str();
  gen_cmd->add_option("--classes", gen.phantom.classes, "Classes including background")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory (default $ICL_OUT_DIR/data or ./data)");

  std::string config_path, train_out, mode;
  std::vector<std::string> overrides;
  bool supervised_only = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write metrics.csv, best.ckpt, final.ckpt");
  train_cmd->add_option("--config", config_path, "Run config file (key = value sections)");
  train_cmd->add_option("--out", train_out, "Output directory (default run.out_dir, $ICL_OUT_DIR or ./run)");
  train_cmd->add_flag("--supervised-only", supervised_only, "Labeled loss only; no SSPA, USCL or unlabeled data");
  train_cmd->add_option("--mode", mode, "icl, supervised or supervised-sspa");
  train_cmd->add_option("--set", overrides, "Override one key, e.g. --set train.max_iters=500");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Backbone-only evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Directory of .icls samples (uses its val/ subdirectory if present)")
      ->required();
  eval_cmd->add_option("--out", eval.out, "Output directory (default $ICL_OUT_DIR/eval or ./eval)");
  eval_cmd->add_flag("--oracle", eval.oracle, "Score the ground truth against itself");

  icl::verify::SuiteOptions suite;
  auto* verify_cmd = app.add_subcommand("verify", "Run every oracle, gradient and invariant check");
  verify_cmd->add_option("--seed", suite.seed, "Suite seed")->capture_default_str();
  verify_cmd->add_option("--gradient-seeds", suite.gradient_seeds, "Seeds per gradient case")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      gen.phantom.width = gen.phantom.height;
      if (gen.out.empty()) gen.out = default_out_dir("data");
      gen_data(gen, std::cout);
    } else if (*train_cmd) {
      RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
      for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw icl::ConfigError("--set expects key=value, got '" + o + "'");
        set_run_config_value(config, o.substr(0, eq), o.substr(eq + 1));
      }
      if (!mode.empty()) config.train.mode = icl::parse_train_mode(mode);
      if (supervised_only) {
        config.train.mode = icl::TrainMode::supervised;
        config.train.weights = {0.0, 0.0};
      }
      if (!train_out.empty()) config.out_dir = train_out;
      if (config.out_dir.empty()) config.out_dir = default_out_dir("run");
      train_run(config, std::cout);
    } else if (*eval_cmd) {
      if (eval.out.empty()) eval.out = default_out_dir("eval");
      eval_run(eval, std::cout);
    } else if (*verify_cmd) {
      return verify_run(suite, std::cout) ? 0 : 1;
    }
  } catch (const icl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
