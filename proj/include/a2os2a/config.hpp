#pragma once

// Experiment configuration files: flat "key = value" lines, '#' starts a
// comment, blank lines ignored, unknown keys rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "a2os2a/model.hpp"

namespace a2os2a {

enum class OptimizerKind { sgd, adamw };
enum class Schedule { cosine, constant };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.1;
  double momentum = 0.9;  ///< SGD momentum; Adam β1
  double beta2 = 0.999;   ///< Adam only
  double weight_decay = 1e-4;
  Schedule schedule = Schedule::cosine;
  std::size_t warmup_epochs = 0;
};

struct ExperimentConfig {
  ModelConfig model{};
  OptimizerConfig optimizer{};
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;

  /// "synthetic", or a path to an SPKT / CIFAR binary file.
  std::string dataset = "synthetic";
  /// "auto", "spkt" or "cifar10".
  std::string dataset_format = "auto";
  /// Optional validation file; synthetic runs generate their own split.
  std::string val_dataset;
  std::size_t synthetic_train = 512;
  std::size_t synthetic_val = 128;
  double synthetic_noise = 0.05;

  std::filesystem::path output_dir = "runs";
  /// Stop once the epoch's train accuracy reaches this value; 0 disables.
  double target_train_accuracy = 0.0;

  /// Semantic checks plus resolvability of dataset paths.
  void validate() const;
  std::string to_text() const;
};

ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace a2os2a
