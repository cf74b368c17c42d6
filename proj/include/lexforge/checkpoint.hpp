#pragma once

#include "lexforge/model.hpp"
#include "lexforge/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace lexforge {

// Persisted model state. `params` are the frozen weights the adapters were
// trained over; a merged checkpoint has no adapters and carries the merged
// stage on `params`.
struct Checkpoint {
    std::uint64_t step_count = 0;
    std::uint64_t seed = 0;
    std::optional<TrainConfig> train_config;
    ModelParameters params;
    std::optional<LoraAdapters> adapters;

    Stage stage() const { return adapters ? adapters->stage : params.stage; }
    const LoraAdapters* adapter_ptr() const { return adapters ? &*adapters : nullptr; }
};

Checkpoint make_checkpoint(const TrainConfig& config, StageResult result);

// Folds the adapters (if any) into the weights.
ModelParameters effective_parameters(const Checkpoint& ckpt);

inline constexpr std::string_view kCheckpointMagic = "lexforge-ckpt-v1";

// Layout: magic line, one-line JSON manifest, raw little-endian float64
// payload, 8-byte little-endian FNV-1a hash of the payload.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace lexforge
