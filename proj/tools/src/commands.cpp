#include "icl_cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "icl/checkpoint.hpp"
#include "icl/errors.hpp"
#include "icl/trainer.hpp"

namespace icl::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::string file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.icls", index);
  return buf;
}

std::vector<fs::path> sample_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".icls") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<SegSample> load_dir(const fs::path& dir, std::size_t* classes) {
  std::vector<SegSample> out;
  for (const auto& f : sample_files(dir)) out.push_back(load_sample(f.string(), classes));
  return out;
}

}  // namespace

std::string resolve_out_dir(const std::string& explicit_dir, const std::string& fallback) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("ICL_OUT_DIR"); env && *env) return env;
  return fallback;
}

void gen_data(const GenDataOptions& options, std::ostream& log) {
  const SplitConfig split_cfg{options.n_labeled, options.n_unlabeled, options.n_val, options.seed};
  const DatasetSplit split = make_split(split_cfg, options.phantom);
  const fs::path root(options.out);
  const std::pair<const char*, const std::vector<SegSample>*> pools[] = {
      {"labeled", &split.labeled}, {"unlabeled", &split.unlabeled}, {"val", &split.val}};
  for (auto [name, samples] : pools) {
    const fs::path dir = root / name;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create '" + dir.string() + "': " + ec.message());
    for (std::size_t i = 0; i < samples->size(); ++i) {
      save_sample((dir / file_name(i)).string(), (*samples)[i], options.phantom.classes);
    }
  }
  log << "labeled " << split.labeled.size() << "  unlabeled " << split.unlabeled.size() << "  val "
      << split.val.size() << "  -> " << root.string() << "\n";
}

DatasetSplit load_split(const std::string& dir, std::size_t* classes) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw Error("data directory '" + dir + "' does not exist");
  DatasetSplit split;
  split.labeled = load_dir(root / "labeled", classes);
  split.unlabeled = load_dir(root / "unlabeled", classes);
  split.val = load_dir(root / "val", classes);
  for (auto& s : split.unlabeled) s.mask = LabelMap{};
  return split;
}

std::vector<SegSample> load_eval_samples(const std::string& path, std::size_t* classes) {
  const fs::path root(path);
  if (!fs::is_directory(root)) throw Error("evaluation data '" + path + "' is not a directory");
  auto samples = load_dir(fs::is_directory(root / "val") ? root / "val" : root, classes);
  if (samples.empty()) throw Error("no .icls samples under '" + path + "'");
  return samples;
}

TrainResult train_run(const RunConfig& config, std::ostream& log) {
  config.validate();
  const fs::path out(config.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error("cannot create '" + out.string() + "': " + ec.message());
  write_text(out / "config.resolved", format_run_config(config));

  DatasetSplit split;
  if (config.data_dir.empty()) {
    split = make_split(config.split_config(), config.phantom_config());
  } else {
    std::size_t classes = 0;
    split = load_split(config.data_dir, &classes);
    if (classes != config.model.classes) {
      throw ConfigError("data has " + std::to_string(classes) + " classes, model.classes is " +
                        std::to_string(config.model.classes));
    }
  }
  log << "mode " << to_string(config.train.mode) << "  labeled " << split.labeled.size() << "  unlabeled "
      << split.unlabeled.size() << "  val " << split.val.size() << "  iterations " << config.train.max_iters << "\n";

  TrainHooks hooks;
  hooks.out_dir = out.string();
  hooks.on_validate = [&log](std::size_t iter, const VolumeMetrics& m) {
    char line[128];
    std::snprintf(line, sizeof line, "iter %6zu  mean DSC %.4f  mean HD95 %.3f\n", iter, m.mean_dsc, m.mean_hd95);
    log << line << std::flush;
  };
  auto result = train(config.model, config.train, split, hooks);
  char line[160];
  std::snprintf(line, sizeof line, "best mean DSC %.4f at iteration %zu; artifacts in %s\n", result.best.mean_dsc,
                result.best_iteration, out.string().c_str());
  log << line;
  return result;
}

EvalReport evaluate_checkpoint(const Checkpoint& checkpoint, const std::vector<SegSample>& samples, bool oracle) {
  EvalReport report;
  if (const auto* it = checkpoint.find("meta/iteration"); it && it->values.size() == 1) {
    report.iteration = static_cast<std::size_t>(it->values[0]);
  }
  std::vector<LabelMap> pred, gt;
  std::size_t classes = 0;
  if (oracle) {
    classes = checkpoint_model_config(checkpoint).classes;
    for (const auto& s : samples) {
      if (!s.has_mask()) throw ArgumentError("evaluation sample without a mask");
      pred.push_back(s.mask);
      gt.push_back(s.mask);
    }
  } else {
    const Backbone backbone = restore_backbone(checkpoint);
    classes = backbone.config().classes;
    for (const auto& s : samples) {
      if (!s.has_mask()) throw ArgumentError("evaluation sample without a mask");
      pred.push_back(predict(backbone, s));
      gt.push_back(s.mask);
    }
  }
  report.metrics = evaluate_volume(pred, gt, classes);
  report.metrics_csv = std::string(kMetricsCsvHeader) + "\n" + metrics_csv_rows(report.iteration, report.metrics);

  report.plot_csv = "sample,class,metric,value\n";
  char line[128];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t c = 1; c < classes; ++c) {
      const auto p = ClassMask::from_labels(pred[i], static_cast<std::uint8_t>(c));
      const auto g = ClassMask::from_labels(gt[i], static_cast<std::uint8_t>(c));
      std::snprintf(line, sizeof line, "%zu,%zu,dsc,%.6f\n%zu,%zu,hd95,%.6f\n", i, c, dsc(p, g), i, c, hd95(p, g));
      report.plot_csv += line;
    }
  }
  return report;
}

EvalReport eval_run(const EvalOptions& options, std::ostream& log) {
  const Checkpoint checkpoint = read_checkpoint(options.checkpoint);
  std::size_t classes = 0;
  const auto samples = load_eval_samples(options.data, &classes);
  if (const auto model = checkpoint_model_config(checkpoint); classes != model.classes) {
    throw ConfigError("data has " + std::to_string(classes) + " classes, the checkpoint was trained with " +
                      std::to_string(model.classes));
  }
  auto report = evaluate_checkpoint(checkpoint, samples, options.oracle);
  const fs::path out(options.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error("cannot create '" + out.string() + "': " + ec.message());
  write_text(out / "eval_metrics.csv", report.metrics_csv);
  write_text(out / "eval_plot.csv", report.plot_csv);
  log << report.metrics_csv;
  return report;
}

bool verify_run(const verify::SuiteOptions& options, std::ostream& log) {
  bool ok = true;
  using Group = verify::GroupResult (*)(const verify::SuiteOptions&);
  for (Group g : {&verify::tensor_oracles, &verify::gradient_suite, &verify::attention_oracles,
                  &verify::detach_probes, &verify::metric_fuzz, &verify::invariants, &verify::pipeline_oracles}) {
    const auto result = g(options);
    log << result.summary() << "\n" << std::flush;
    ok = ok && result.passed();
  }
  log << (ok ? "all groups passed\n" : "verification FAILED\n");
  return ok;
}

}  // namespace icl::cli
