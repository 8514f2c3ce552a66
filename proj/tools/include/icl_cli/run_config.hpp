#pragma once

#include <string>
#include <utility>
#include <vector>

#include "icl/backbone.hpp"
#include "icl/data_synth.hpp"
#include "icl/trainer.hpp"

namespace icl::cli {

// Everything a training run depends on. The text form is a sequence of
// "[section]" headers followed by "key = value" lines; '#' starts a comment.
//
//   [model]  height width classes base_channels heads
//   [train]  lr0 momentum weight_decay max_iters poly_power batch_size
//            val_every alpha beta master_seed mode
//   [data]   n_labeled n_unlabeled n_val noise_sigma dir
//   [run]    out_dir
//
// The data split is drawn from train.master_seed unless data.dir names a
// directory written by `icl gen-data`.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::size_t n_labeled = 4;
  std::size_t n_unlabeled = 60;
  std::size_t n_val = 20;
  double noise_sigma = 0.05;
  std::string data_dir;
  std::string out_dir;

  SplitConfig split_config() const;
  PhantomConfig phantom_config() const;
  // Throws ConfigError.
  void validate() const;
};

// Every accepted key, as "section.key".
std::vector<std::string> run_config_keys();

// Throws ConfigError naming every unknown key, and for malformed lines or
// values.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Sets one "section.key" to a textual value. Throws ConfigError.
void set_run_config_value(RunConfig& config, const std::string& key, const std::string& value);

// Canonical text form; parse_run_config(format_run_config(c)) reproduces c
// exactly (doubles use shortest round-trip formatting).
std::string format_run_config(const RunConfig& config);

}  // namespace icl::cli
