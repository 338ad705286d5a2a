#pragma once

// Checkpoint file layout (all integers little-endian):
//
//   "A2OS2A1"                      7-byte magic / version
//   u64 n, n bytes                 model config as "key=value\n" lines
//   u64 count                      number of tensors
//   count × {
//     u64 n, n bytes               tensor name
//     u64 rank, rank × u64         dims
//     prod(dims) × f32             elements
//   }
//
// Trainable tensors come first in SpikingTransformer::parameters() order,
// followed by "<bn>.running_mean" / "<bn>.running_var" for every BN layer.
// A BN layer that has never seen a training batch stores both with dims (0).

#include <cstdint>
#include <filesystem>
#include <vector>

#include "a2os2a/model.hpp"

namespace a2os2a {

inline constexpr char kCheckpointMagic[] = "A2OS2A1";

template <typename R>
std::vector<std::uint8_t> serialize_checkpoint(SpikingTransformer<R>& model);

template <typename R>
SpikingTransformer<R> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

template <typename R>
void save_checkpoint(SpikingTransformer<R>& model, const std::filesystem::path& path);

/// Throws FormatError (with byte offset) on a malformed file.
template <typename R>
SpikingTransformer<R> load_checkpoint(const std::filesystem::path& path);

/// Reads only the header's model config.
ModelConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace a2os2a
