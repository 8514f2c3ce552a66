#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "icl/data_synth.hpp"
#include "icl/metrics.hpp"
#include "icl_cli/run_config.hpp"
#include "icl_verify/suites.hpp"

namespace icl::cli {

// The explicit directory, else $ICL_OUT_DIR, else `fallback`.
std::string resolve_out_dir(const std::string& explicit_dir, const std::string& fallback);

struct GenDataOptions {
  std::uint64_t seed = 0;
  std::size_t n_labeled = 4;
  std::size_t n_unlabeled = 60;
  std::size_t n_val = 20;
  PhantomConfig phantom;
  std::string out;
};

// Writes <out>/{labeled,unlabeled,val}/NNNNN.icls; unlabeled files carry
// all-zero masks.
void gen_data(const GenDataOptions& options, std::ostream& log);

// Reads a directory written by gen_data. Unlabeled masks are dropped.
DatasetSplit load_split(const std::string& dir, std::size_t* classes = nullptr);

// Labeled samples for evaluation: `path`/val when present, else every .icls
// file directly in `path`, in name order.
std::vector<SegSample> load_eval_samples(const std::string& path, std::size_t* classes = nullptr);

// Writes <out>/config.resolved, then trains and writes metrics.csv,
// best.ckpt and final.ckpt.
TrainResult train_run(const RunConfig& config, std::ostream& log);

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string out;
  bool oracle = false;  // score the ground truth against itself
};

struct EvalReport {
  std::size_t iteration = 0;
  VolumeMetrics metrics;
  std::string metrics_csv;  // header "iter,class,dsc,hd95"
  std::string plot_csv;     // long form "sample,class,metric,value"
};

// Backbone-only evaluation; needs nothing from the checkpoint beyond the
// backbone tensors and the model/iteration metadata.
EvalReport evaluate_checkpoint(const Checkpoint& checkpoint, const std::vector<SegSample>& samples, bool oracle);

// Loads, evaluates and writes <out>/eval_metrics.csv and <out>/eval_plot.csv.
EvalReport eval_run(const EvalOptions& options, std::ostream& log);

// Prints one line per group; returns true when every group passed.
bool verify_run(const verify::SuiteOptions& options, std::ostream& log);

}  // namespace icl::cli
