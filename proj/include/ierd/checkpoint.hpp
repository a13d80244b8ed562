#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "ierd/network.hpp"
#include "ierd/optimizer.hpp"

namespace ierd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training or run inference.
struct Checkpoint {
  ParamStore<float> params;
  std::optional<AdamState<float>> optimizer;
  std::uint64_t step = 0;  // completed training steps
  std::uint64_t seed = 0;  // root seed of the run that produced it
};

/// Binary little-endian file: magic "IERDCKPT", format version, network
/// config, step and seed, every layer's name/shape/values, then the optional
/// Adam state. Written to a temporary file and renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ierd
