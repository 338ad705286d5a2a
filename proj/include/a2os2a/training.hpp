#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "a2os2a/analysis.hpp"
#include "a2os2a/config.hpp"
#include "a2os2a/dataset.hpp"
#include "a2os2a/model.hpp"

namespace a2os2a {

struct MetricsRecord {
  std::size_t epoch = 0;
  std::string split;        ///< "train", "val", "eval" or "diverged"
  double loss = 0.0;
  double accuracy = 0.0;    ///< top-1, in [0,1]
  std::size_t correct = 0;
  std::size_t samples = 0;
  double wall_time = 0.0;   ///< seconds since the run started
  double spike_rate = 0.0;  ///< mean firing rate over all neurons

  /// One JSON object, no trailing newline.
  std::string to_json() const;
};

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  std::filesystem::path checkpoint;  ///< best.ckpt in the output directory
  double best_val_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  double final_train_accuracy = 0.0;
  bool reached_target = false;
};

/// Called after each epoch's records have been written.
using EpochCallback = std::function<void(const MetricsRecord& train, const MetricsRecord* val)>;

/// Datasets named by the config: the synthetic generator or files on disk.
/// The validation split may be empty.
std::pair<Dataset, Dataset> load_experiment_data(const ExperimentConfig& cfg);

/// Minibatch training with the surrogate-gradient backward. Writes
/// metrics.jsonl (flushed per epoch) and best.ckpt into cfg.output_dir.
/// A non-finite loss writes a "diverged" record and throws DivergenceError.
TrainResult train(const ExperimentConfig& cfg, const Dataset& train_data, const Dataset& val_data,
                  const EpochCallback& on_epoch = {});
TrainResult train(const ExperimentConfig& cfg, const EpochCallback& on_epoch = {});

/// Eval-mode accuracy over a whole split. Never touches weights or BN stats.
template <typename R>
MetricsRecord evaluate(SpikingTransformer<R>& model, const Dataset& data,
                       std::size_t batch_size = 64);

/// Loads a checkpoint and evaluates it. Image shape or label range that does
/// not fit the stored config raises CompatibilityError.
MetricsRecord evaluate(const std::filesystem::path& checkpoint, const Dataset& data,
                       std::size_t batch_size = 64);

/// Estimates BN running statistics with train-mode forwards (no gradients)
/// over up to `max_batches` batches; weights are untouched.
template <typename R>
void calibrate_batch_norm(SpikingTransformer<R>& model, const Dataset& data,
                          std::size_t batch_size = 64, std::size_t max_batches = 8);

/// Throws CompatibilityError if the data cannot feed the model.
void check_compatible(const ModelConfig& cfg, const Dataset& data);

struct ComparisonRow {
  std::string variant;
  std::size_t parameters = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::size_t epochs_run = 0;
  OpRecord attention;  ///< attention-product additions / multiplications
  OpRecord total;      ///< all layers, one sample
};

struct ReferenceRow {
  std::string model;
  std::string dataset;
  double baseline_accuracy;
  double a2os2a_accuracy;
};

struct ComparisonTable {
  std::string model_name;
  std::vector<ComparisonRow> rows;
  /// Published full-scale numbers, kept for context only.
  std::vector<ReferenceRow> references;

  std::string to_text() const;
  std::string to_jsonl() const;
};

std::vector<ReferenceRow> published_reference_rows();

/// Trains every variant with the same seed, data and schedule. Each run
/// writes into output_dir/<variant>.
ComparisonTable compare_variants(const ExperimentConfig& cfg,
                                 const std::vector<AttentionVariant>& variants,
                                 const EpochCallback& on_epoch = {});

}  // namespace a2os2a
