#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "icl/checkpoint.hpp"
#include "icl/data_synth.hpp"
#include "icl/icl_heads.hpp"
#include "icl/losses.hpp"
#include "icl/metrics.hpp"

namespace icl {

enum class TrainMode {
  icl,              // all four loss terms, labeled + unlabeled halves
  supervised,       // L_seg on the labeled half only
  supervised_sspa,  // L_seg + L_spa on the labeled half only
};

const char* to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& text);

struct TrainConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t max_iters = 2000;
  double poly_power = 0.9;
  std::size_t batch_size = 4;  // half labeled, half unlabeled
  std::size_t val_every = 100;
  LossWeights weights;
  std::uint64_t master_seed = 0;
  TrainMode mode = TrainMode::icl;

  // Throws ConfigError.
  void validate() const;
};

// lr0 * (1 - iter / max_iters)^power. Throws ArgumentError outside
// [0, max_iters].
double poly_lr(std::size_t iter, const TrainConfig& config);

struct TrainState {
  IclModel model;
  std::map<std::string, std::vector<double>> momentum;  // keyed by parameter name
  std::size_t iteration = 0;
  double best_mean_dsc = -1.0;
  std::size_t best_iteration = 0;
};

// Forward both halves, compute the objective for the configured mode,
// backpropagate and apply one SGD step at poly_lr(state.iteration). Throws
// NumericError naming the first non-finite loss term.
LossReport train_step(TrainState& state, const Batch& batch, const TrainConfig& config);

// SGD with momentum and L2 weight decay:
//   buf = momentum * buf + (grad + weight_decay * p);  p -= lr * buf
void sgd_update(const ParameterList& params, std::map<std::string, std::vector<double>>& momentum, double lr,
                const TrainConfig& config);

// Backbone-only inference: per-pixel argmax of the main prediction.
LabelMap predict(const Backbone& backbone, const SegSample& sample);

// Evaluates the backbone on labeled samples.
VolumeMetrics validate(const Backbone& backbone, const std::vector<SegSample>& samples);

// Metrics CSV, header "iter,class,dsc,hd95": one row per foreground class
// then a "mean" row.
inline constexpr const char* kMetricsCsvHeader = "iter,class,dsc,hd95";
std::string metrics_csv_rows(std::size_t iteration, const VolumeMetrics& metrics);

// Checkpoint contents: every model parameter, "momentum/<name>" buffers,
// "meta/iteration", "meta/best_mean_dsc", "meta/best_iteration" and
// "meta/model_config" ([H, W, Z, C, N]).
Checkpoint capture_checkpoint(const TrainState& state);
TrainState restore_checkpoint(const Checkpoint& checkpoint);
ModelConfig checkpoint_model_config(const Checkpoint& checkpoint);
// Rebuilds only the backbone; other tensors are neither needed nor read.
Backbone restore_backbone(const Checkpoint& checkpoint);

void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

struct TrainResult {
  std::vector<LossReport> losses;  // one per iteration
  std::string metrics_csv;         // header included
  VolumeMetrics best;
  std::size_t best_iteration = 0;
  VolumeMetrics last;
  TrainState final_state;
};

struct TrainHooks {
  // When non-empty: metrics.csv, best.ckpt and final.ckpt are written here.
  std::string out_dir;
  std::function<void(std::size_t iteration, const LossReport&)> on_step;
  std::function<void(std::size_t iteration, const VolumeMetrics&)> on_validate;
};

// Full run: model initialised from the master seed, validation every
// val_every iterations and at the end, best model by mean foreground DSC.
TrainResult train(const ModelConfig& model, const TrainConfig& config, const DatasetSplit& split,
                  const TrainHooks& hooks = {});

}  // namespace icl
