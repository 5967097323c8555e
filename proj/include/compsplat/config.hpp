#pragma once

#include "compsplat/losses.hpp"
#include "compsplat/model.hpp"
#include "compsplat/rasterizer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace compsplat {

struct LearningRates {
    double position_init = 1.6e-4;
    double position_final = 1.6e-6;
    std::int64_t position_decay_steps = 30000;
    /// Multiply position rates by the camera extent of the scene.
    bool position_scale_by_extent = true;
    double rotation = 1e-3;
    double scale = 5e-3;
    double opacity = 5e-2;
    double sh = 2.5e-3;
    /// Appearance nets, hash grid and embeddings: decays 10× over the run.
    double nets_init = 1.6e-3;
    double nets_final = 1.6e-4;
    double pose_translation = 5e-4;
    double pose_rotation = 1e-4;
    double sky = 1e-2;
};

struct DensifyConfig {
    bool enabled = true;
    std::int64_t interval = 100;
    std::int64_t start = 500;
    std::int64_t stop = 15000;
    double grad_threshold = 2e-4;
    double prune_opacity = 0.005;
    /// Gaussians larger than this fraction of the scene extent are split.
    double percent_dense = 0.01;
    double split_factor = 1.6;
    std::size_t max_gaussians = 8000;
};

struct InitConfig {
    double voxel_size = 0.05;
    double opacity = 0.1;
    int knn = 3;
};

struct TrainConfig {
    std::int64_t iterations = 30000;
    std::uint64_t seed = 0;
    int threads = 1;
    /// Every Nth frame is held out for evaluation; 0 trains on all frames.
    int holdout_every = 0;
    ModelConfig model;
    RefinementSwitches refine;
    LossWeights loss;
    LearningRates lr;
    DensifyConfig densify;
    RasterOptions raster;
    InitConfig init;

    /// Throws InvalidParameter listing every violated invariant.
    void validate() const;
};

nlohmann::json config_to_json(const TrainConfig& cfg);
/// Strict: unknown keys and type mismatches are rejected.
TrainConfig config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" onto a config JSON; the key must already exist.
/// Values parse as JSON when possible, otherwise as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// defaults < file < overrides.
TrainConfig resolve_config(const std::filesystem::path* file, const std::vector<std::string>& overrides);

}  // namespace compsplat
