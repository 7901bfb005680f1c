#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include "smpcl/dataset.hpp"
#include "smpcl/trainer.hpp"

namespace smpcl {

/// Everything `smpcl train` needs. Written as line-based `key = value` text;
/// `#` starts a comment. Keys are listed by config_keys_help().
struct ExperimentConfig {
  std::string dataset;      // directory for load_dataset; empty: synthesize
  SynthSpec synth;
  int train_count = 64;     // leading cases used for training
  int val_count = 16;       // following cases used for validation
  int resize = 0;           // >0: resample loaded cases to resize x resize
  std::string output = "run";
  TrainConfig train;

  /// Range checks plus existence of the dataset path.
  void validate() const;
  std::string to_text() const;
};

/// Applies one `key = value` assignment. Throws ValidationError naming the key.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// `origin` prefixes error messages (file name, "--set", ...).
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

std::string config_keys_help();

/// (train, validation) according to the config.
std::pair<Dataset, Dataset> experiment_data(const ExperimentConfig& config);

}  // namespace smpcl
