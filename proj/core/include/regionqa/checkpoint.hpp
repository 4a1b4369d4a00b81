#ifndef REGIONQA_CHECKPOINT_HPP_
#define REGIONQA_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include "regionqa/model.hpp"
#include "regionqa/training.hpp"

namespace regionqa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  ModelParameters params;
  std::size_t best_epoch = 0;
  double best_heldout_acc = 0.0;
};

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

/// Binary, little-endian: "FRNK", u32 version, u32 length + JSON header
/// (model config, train config, selection info), u32 tensor count, then per
/// tensor u32 name length + name, u32 rank (2), u32 dims, f64 data.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws DataError on a malformed file or tensors that do not fit the stored
/// config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace regionqa

#endif  // REGIONQA_CHECKPOINT_HPP_
