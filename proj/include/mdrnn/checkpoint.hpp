#pragma once

// Checkpoint file layout:
//
//   mdrnn-checkpoint 1\n
//   key = value\n ...          model config and training metadata, human readable
//   ---\n
//   per array:  u32 name length, name bytes, u32 rank, rank x u32 dims,
//               dims-product x f32 values
//   u32 CRC-32 of every preceding byte
//
// All binary integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "mdrnn/rnn.hpp"

namespace mdrnn {

struct TrainingMeta {
  int epochs_run = 0;
  double best_val_loss = 0.0;
  std::uint64_t rng_seed = 0;

  bool operator==(const TrainingMeta&) const = default;
};

struct Checkpoint {
  Weights<float> weights;
  TrainingMeta meta;

  const ModelConfig& config() const { return weights.config; }
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// With `expected`, the stored architecture must match it exactly.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace mdrnn
