#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "timae/data.hpp"
#include "timae/evaluation.hpp"
#include "timae/model.hpp"
#include "timae/training.hpp"

namespace timae {

struct DataConfig {
  std::string csv;                      // empty -> synthetic
  std::string synthetic = SyntheticSpec{}.str();
  std::string split = "6:2:2";
  bool timestamp_col = false;
  bool forward_fill = false;
  bool normalize = true;
  std::size_t target_channels = 1;      // n, the last n columns
  std::size_t max_len = 0;              // equidistant subsample cap, 0 = off
};

struct EvalConfig {
  std::size_t history = 100;            // h
  std::size_t horizon = 100;            // k
  std::size_t stride = 10;              // between test origins
  std::string mode = "direct";          // direct | finetune | ridge
  std::string pooling = "mean";         // ridge/classify: mean | max | none
  std::size_t probe_stride = 1;         // ridge train/val origin stride
  std::string head_pooling = "flatten"; // finetune head: flatten | mean
  std::size_t ft_epochs = 30;
  double ft_lr = 1e-3;
  std::size_t ft_batch = 64;
  std::size_t transfer_history = 400;
  std::size_t transfer_horizon = 400;
  std::size_t transfer_stride = 50;
};

/// Every setting of a run. Text form: one `section.key = value` per line
/// (sections model, train, data, eval; `seed` is train.seed), `#` comments.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;

  /// Sets one key; unknown keys and bad values raise ConfigError.
  void set(const std::string& key, const std::string& value);
  /// Applies a `key = value` text (later lines win).
  void parse(const std::string& text);
  void load(const std::filesystem::path& path);
  /// Every key in a fixed order, as parse() accepts it.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;
  void validate() const;

  /// The experiment view used by run_experiment / ablation_matrix.
  ExperimentConfig experiment() const;
  FinetuneConfig finetune() const;
  SplitSpec split_spec() const { return SplitSpec::parse(data.split); }
};

/// Loads the configured dataset (CSV or synthetic), subsamples if asked,
/// splits and normalizes it. The model's window must fit the train block.
Dataset load_dataset(const RunConfig& cfg);

}  // namespace timae
