#pragma once

#include "compsplat/config.hpp"
#include "compsplat/model.hpp"
#include "compsplat/scene_io.hpp"
#include "compsplat/trainer.hpp"

#include <json.hpp>

#include <functional>
#include <vector>

namespace compsplat {

/// Initializes a model from the dataset and wraps it in a trainer that sees
/// the training split of `config.holdout_every`.
Trainer make_trainer(const SceneDataset& scene, const TrainConfig& config);

/// Runs `iterations` steps; `on_step` (optional) sees every report.
void run_training(Trainer& trainer, std::int64_t iterations,
                  const std::function<void(const StepReport&)>& on_step = {});

struct FrameMetrics {
    std::size_t index = 0;
    int camera_index = 0;
    double timestamp = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    double actor_psnr = 0.0;  ///< NaN when no actor box is visible
};

struct EvalSummary {
    std::vector<FrameMetrics> frames;
    double psnr = 0.0;        ///< mean over frames, NaN for an empty list
    double ssim = 0.0;        ///< mean over frames
    double actor_psnr = 0.0;  ///< mean over frames with visible actors, NaN if none
};

/// Renders the listed dataset frames through the novel-view path (nearest
/// embedding, interpolated poses) and scores the clamped images.
EvalSummary evaluate_frames(const SceneModel& model, const SceneDataset& scene, const std::vector<std::size_t>& indices,
                            const RenderSettings& settings = {});

nlohmann::json to_json(const EvalSummary& s, bool per_frame = true);

}  // namespace compsplat
