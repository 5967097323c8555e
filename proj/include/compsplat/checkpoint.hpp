#pragma once

#include "compsplat/config.hpp"
#include "compsplat/model.hpp"
#include "compsplat/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>

namespace compsplat {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kNetsVersion = 1;
inline constexpr std::uint32_t kOptimizerVersion = 1;

struct Checkpoint {
    SceneModel scene;
    TrainConfig config;
    std::int64_t iteration = 0;
};

/// Writes gaussians.ply, nets.bin and meta.json into `dir` (created when
/// missing). Values are stored as float32, so a model that has been snapped
/// survives save→load unchanged.
void save_checkpoint(const std::filesystem::path& dir, const SceneModel& scene, const TrainConfig& config,
                     std::int64_t iteration);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Checkpoint plus optimizer.bin (Adam moments, RNG state, densification
/// accumulators) so training can resume bit-compatibly.
void save_training_state(const std::filesystem::path& dir, Trainer& trainer);
/// Restores optimizer.bin into a trainer built from the matching checkpoint.
void restore_training_state(const std::filesystem::path& dir, Trainer& trainer);

}  // namespace compsplat
