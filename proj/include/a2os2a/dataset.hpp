#pragma once

// Labelled image datasets.
//
// SPKT file (little-endian):
//   "SPKT" | u32 count | u32 C | u32 H | u32 W
//   count × ( u16 label | C·H·W f32 values, CHW order, in [0,1] )
// CIFAR binary: records of 1 label byte + 3·32·32 pixel bytes (CHW).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "a2os2a/tensor.hpp"

namespace a2os2a {

struct Sample {
  std::vector<float> image;  ///< C·H·W, CHW order
  int label = 0;
};

struct Dataset {
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t num_classes = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t image_size() const { return channels * height * width; }
};

enum class DatasetFormat { automatic, spkt, cifar10 };
DatasetFormat parse_dataset_format(const std::string& text);

/// Labels >= num_classes raise DataError; malformed bytes raise FormatError
/// carrying the byte offset.
Dataset read_spkt(const std::vector<std::uint8_t>& bytes, std::size_t num_classes);
Dataset read_cifar10(const std::vector<std::uint8_t>& bytes, std::size_t num_classes = 10);
std::vector<std::uint8_t> write_spkt(const Dataset& data);

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     std::size_t num_classes);
void save_spkt(const Dataset& data, const std::filesystem::path& path);

struct SyntheticSpec {
  std::size_t samples = 512;
  std::size_t num_classes = 10;
  std::size_t channels = 3, height = 32, width = 32;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

/// Class-balanced images: each class has its own blob position, colour and
/// stripe orientation, with per-sample jitter and pixel noise.
Dataset make_synthetic(const SyntheticSpec& spec);

/// A permutation of 0..n-1 determined by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Stacks the selected samples into images[B,C,H,W].
template <typename R>
Tensor<R> make_batch(const Dataset& data, std::span<const std::size_t> indices);

std::vector<int> batch_labels(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace a2os2a
