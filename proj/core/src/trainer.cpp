#include "icl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "icl/errors.hpp"
#include "icl/ops.hpp"

namespace icl {

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::icl:
      return "icl";
    case TrainMode::supervised:
      return "supervised";
    case TrainMode::supervised_sspa:
      return "supervised-sspa";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& text) {
  if (text == "icl") return TrainMode::icl;
  if (text == "supervised") return TrainMode::supervised;
  if (text == "supervised-sspa") return TrainMode::supervised_sspa;
  throw ConfigError("unknown training mode '" + text + "' (expected icl, supervised or supervised-sspa)");
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (max_iters < 1) throw ConfigError("max_iters must be at least 1");
  if (batch_size == 0 || batch_size % 2 != 0) throw ConfigError("batch_size must be even and positive");
  if (val_every == 0) throw ConfigError("val_every must be positive");
  if (momentum < 0.0 || weight_decay < 0.0 || poly_power < 0.0) {
    throw ConfigError("momentum, weight_decay and poly_power must be non-negative");
  }
  if (weights.alpha < 0.0 || weights.beta < 0.0) throw ConfigError("alpha and beta must be non-negative");
}

double poly_lr(std::size_t iter, const TrainConfig& config) {
  if (iter > config.max_iters) {
    throw ArgumentError("poly_lr: iteration " + std::to_string(iter) + " beyond max_iters " +
                        std::to_string(config.max_iters));
  }
  const double progress = static_cast<double>(iter) / static_cast<double>(config.max_iters);
  return config.lr0 * std::pow(1.0 - progress, config.poly_power);
}

void sgd_update(const ParameterList& params, std::map<std::string, std::vector<double>>& momentum, double lr,
                const TrainConfig& config) {
  for (const auto& [name, tensor] : params) {
    Tensor p = tensor;
    auto values = p.mutable_data();
    auto grad = p.grad();
    auto& buf = momentum[name];
    if (buf.size() != values.size()) buf.assign(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = (grad.empty() ? 0.0 : grad[i]) + config.weight_decay * values[i];
      buf[i] = config.momentum * buf[i] + g;
      values[i] -= lr * buf[i];
    }
  }
}

LossReport train_step(TrainState& state, const Batch& batch, const TrainConfig& config) {
  const IclModel& model = state.model;
  const ParameterList params = model.parameters();
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  const bool use_sspa = config.mode != TrainMode::supervised;
  const bool use_unlabeled = config.mode == TrainMode::icl;

  std::vector<LabeledForward> labeled;
  std::vector<ScaleMaps> labeled_proxies;
  for (const auto& sample : batch.labeled) {
    if (!sample.has_mask()) throw ArgumentError("train_step: labeled sample without a mask");
    auto out = model.backbone.forward(sample.image_tensor());
    LabeledForward item{out.logits, {}, &sample.mask};
    if (use_sspa) {
      auto sspa = model.sspa.forward(out.features, Stream::labeled);
      item.sspa = sspa.segmentation;
      labeled_proxies.push_back(sspa.proxies);
    }
    labeled.push_back(std::move(item));
  }
  std::vector<UnlabeledForward> unlabeled;
  if (use_unlabeled) {
    if (labeled_proxies.empty()) throw ArgumentError("train_step: unlabeled half needs labeled proxies");
    for (std::size_t j = 0; j < batch.unlabeled.size(); ++j) {
      auto out = model.backbone.forward(batch.unlabeled[j].image_tensor());
      auto sspa = model.sspa.forward(out.features, Stream::unlabeled);
      // Unlabeled item j is guided by the proxies of labeled item j (mod count).
      auto uscl = model.uscl.forward(out.features, labeled_proxies[j % labeled_proxies.size()]);
      unlabeled.push_back({out.logits, sspa.segmentation, uscl.guided});
    }
  }

  const LossWeights weights = use_unlabeled ? config.weights : LossWeights{0.0, 0.0};
  LossTerms terms = loss_total(labeled, unlabeled, weights);
  const LossReport report = terms.report();
  const std::pair<const char*, double> named[] = {
      {"L_seg", report.seg}, {"L_spa", report.spa}, {"L_usc", report.usc}, {"L_con", report.con},
      {"L_total", report.total}};
  for (auto [name, value] : named) {
    if (!std::isfinite(value)) {
      throw NumericError(std::string("non-finite ") + name + " at iteration " + std::to_string(state.iteration));
    }
  }
  terms.total.backward();
  sgd_update(params, state.momentum, poly_lr(state.iteration, config), config);
  ++state.iteration;
  return report;
}

LabelMap predict(const Backbone& backbone, const SegSample& sample) {
  return argmax_labels(backbone.forward(sample.image_tensor()).logits);
}

VolumeMetrics validate(const Backbone& backbone, const std::vector<SegSample>& samples) {
  std::vector<LabelMap> pred, gt;
  for (const auto& s : samples) {
    if (!s.has_mask()) throw ArgumentError("validate: sample without a mask");
    pred.push_back(predict(backbone, s));
    gt.push_back(s.mask);
  }
  return evaluate_volume(pred, gt, backbone.config().classes);
}

std::string metrics_csv_rows(std::size_t iteration, const VolumeMetrics& metrics) {
  std::string out;
  char line[128];
  for (const auto& m : metrics.per_class) {
    std::snprintf(line, sizeof line, "%zu,%zu,%.6f,%.6f\n", iteration, m.cls, m.dsc, m.hd95);
    out += line;
  }
  std::snprintf(line, sizeof line, "%zu,mean,%.6f,%.6f\n", iteration, metrics.mean_dsc, metrics.mean_hd95);
  out += line;
  return out;
}

namespace {

CheckpointTensor scalar_entry(const std::string& name, double v) { return {name, {1}, {v}, DType::f64}; }

double scalar_value(const Checkpoint& ck, const std::string& name) {
  const auto& t = ck.at(name);
  if (t.values.size() != 1) throw FormatError("checkpoint entry '" + name + "' is not a scalar", 0);
  return t.values[0];
}

void copy_into(const ParameterList& params, const Checkpoint& ck) {
  for (const auto& [name, tensor] : params) {
    const auto& entry = ck.at(name);
    if (entry.shape != tensor.shape()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " + to_string(entry.shape) + ", model expects " +
                        to_string(tensor.shape()), 0);
    }
    Tensor t = tensor;
    auto dst = t.mutable_data();
    std::copy(entry.values.begin(), entry.values.end(), dst.begin());
  }
}

}  // namespace

Checkpoint capture_checkpoint(const TrainState& state) {
  Checkpoint ck;
  const auto& c = state.model.config;
  ck.tensors.push_back({"meta/model_config", {5},
                        {static_cast<double>(c.height), static_cast<double>(c.width), static_cast<double>(c.classes),
                         static_cast<double>(c.base_channels), static_cast<double>(c.heads)},
                        DType::f64});
  ck.tensors.push_back(scalar_entry("meta/iteration", static_cast<double>(state.iteration)));
  ck.tensors.push_back(scalar_entry("meta/best_mean_dsc", state.best_mean_dsc));
  ck.tensors.push_back(scalar_entry("meta/best_iteration", static_cast<double>(state.best_iteration)));
  for (const auto& [name, tensor] : state.model.parameters()) {
    ck.tensors.push_back({name, tensor.shape(), {tensor.data().begin(), tensor.data().end()}, DType::f64});
  }
  for (const auto& [name, buf] : state.momentum) {
    ck.tensors.push_back({"momentum/" + name, {buf.size()}, buf, DType::f64});
  }
  return ck;
}

ModelConfig checkpoint_model_config(const Checkpoint& checkpoint) {
  const auto& meta = checkpoint.at("meta/model_config");
  if (meta.values.size() != 5) throw FormatError("meta/model_config must hold 5 values", 0);
  ModelConfig c;
  c.height = static_cast<std::size_t>(meta.values[0]);
  c.width = static_cast<std::size_t>(meta.values[1]);
  c.classes = static_cast<std::size_t>(meta.values[2]);
  c.base_channels = static_cast<std::size_t>(meta.values[3]);
  c.heads = static_cast<std::size_t>(meta.values[4]);
  c.validate();
  return c;
}

TrainState restore_checkpoint(const Checkpoint& checkpoint) {
  TrainState state;
  state.model = IclModel(checkpoint_model_config(checkpoint), 0);
  copy_into(state.model.parameters(), checkpoint);
  state.iteration = static_cast<std::size_t>(scalar_value(checkpoint, "meta/iteration"));
  state.best_mean_dsc = scalar_value(checkpoint, "meta/best_mean_dsc");
  state.best_iteration = static_cast<std::size_t>(scalar_value(checkpoint, "meta/best_iteration"));
  const std::string prefix = "momentum/";
  for (const auto& t : checkpoint.tensors) {
    if (t.name.rfind(prefix, 0) == 0) state.momentum[t.name.substr(prefix.size())] = t.values;
  }
  return state;
}

Backbone restore_backbone(const Checkpoint& checkpoint) {
  Rng rng(0);
  Backbone backbone(checkpoint_model_config(checkpoint), rng);
  ParameterList params;
  backbone.collect(kBackbonePrefix, params);
  copy_into(params, checkpoint);
  return backbone;
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  write_checkpoint(path, capture_checkpoint(state));
}

TrainState load_checkpoint(const std::string& path) { return restore_checkpoint(read_checkpoint(path)); }

TrainResult train(const ModelConfig& model, const TrainConfig& config, const DatasetSplit& split,
                  const TrainHooks& hooks) {
  model.validate();
  config.validate();
  TrainResult result;
  TrainState& state = result.final_state;
  state.model = IclModel(model, mix_seed(config.master_seed, 0x30de1));
  result.metrics_csv = std::string(kMetricsCsvHeader) + "\n";

  namespace fs = std::filesystem;
  const bool write = !hooks.out_dir.empty();
  if (write) fs::create_directories(hooks.out_dir);

  const std::size_t half = config.batch_size / 2;
  const bool use_unlabeled = config.mode == TrainMode::icl;
  while (state.iteration < config.max_iters) {
    BatchPlan plan{config.master_seed, state.iteration, half, use_unlabeled ? half : 0};
    const Batch batch = compose_batch(split, plan);
    const auto report = train_step(state, batch, config);
    result.losses.push_back(report);
    if (hooks.on_step) hooks.on_step(state.iteration, report);

    if (state.iteration % config.val_every == 0 || state.iteration == config.max_iters) {
      const auto metrics = validate(state.model.backbone, split.val);
      result.metrics_csv += metrics_csv_rows(state.iteration, metrics);
      result.last = metrics;
      if (metrics.mean_dsc > state.best_mean_dsc) {
        state.best_mean_dsc = metrics.mean_dsc;
        state.best_iteration = state.iteration;
        result.best = metrics;
        result.best_iteration = state.iteration;
        if (write) save_checkpoint(state, (fs::path(hooks.out_dir) / "best.ckpt").string());
      }
      if (hooks.on_validate) hooks.on_validate(state.iteration, metrics);
    }
  }
  if (write) {
    save_checkpoint(state, (fs::path(hooks.out_dir) / "final.ckpt").string());
    std::ofstream csv(fs::path(hooks.out_dir) / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw Error("cannot write metrics.csv in '" + hooks.out_dir + "'");
    csv << result.metrics_csv;
  }
  return result;
}

}  // namespace icl
