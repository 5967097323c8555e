#pragma once

#include "compsplat/config.hpp"
#include "compsplat/losses.hpp"
#include "compsplat/model.hpp"
#include "compsplat/optim.hpp"
#include "compsplat/scene_io.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace compsplat {

/// Adam state for the five tensors of one Gaussian set.
struct GaussianSetOptim {
    Adam means;
    Adam rotations;
    Adam log_scales;
    Adam opacity;
    Adam sh;

    GaussianSetOptim() = default;
    GaussianSetOptim(std::size_t n, int sh_dimension);
    void select_rows(std::span<const std::size_t> keep);
    void append_rows(std::size_t count);
};

struct OptimizerState {
    GaussianSetOptim background;
    std::vector<GaussianSetOptim> actors;
    std::vector<Adam> key_rotations;
    std::vector<Adam> key_translations;
    Adam sky;
    Adam hash;
    Adam frames;
    std::vector<Adam> local;
    std::vector<Adam> global;
    std::vector<Adam> encoder;
    std::vector<Adam> head;
    Adam classes;
    std::vector<Adam> class_encoder;

    OptimizerState() = default;
    explicit OptimizerState(const SceneModel& scene);
    /// Every Adam in a fixed order, for serialization.
    std::vector<Adam*> all();
};

/// Per-set accumulators feeding densification.
struct DensifyStats {
    std::vector<std::vector<double>> grad_sum;
    std::vector<std::vector<std::uint32_t>> count;
    std::vector<MatX3> position_grad;  ///< summed parameter-space position gradients

    void reset(const SceneModel& scene);
};

struct DensifyReport {
    std::size_t before = 0;
    std::size_t clones = 0;
    std::size_t splits = 0;
    std::size_t pruned = 0;
    std::size_t after = 0;
};

struct StepReport {
    std::int64_t iteration = 0;
    std::size_t frame = 0;
    LossTerms loss;
    double psnr = 0.0;
    std::size_t gaussians = 0;
    double lr_position = 0.0;
    double millis = 0.0;
    bool densified = false;
    DensifyReport densify;
};

nlohmann::json to_json(const StepReport& r);

class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& what, nlohmann::json diagnostic)
        : NumericError(what), diagnostic(std::move(diagnostic)) {}
    nlohmann::json diagnostic;
};

/// Camera-extent radius used to scale position learning rates and the
/// clone/split threshold: 1.1 × the largest camera distance from the mean
/// camera center (1 when all cameras coincide).
double camera_extent(const std::vector<CameraFrame>& frames);

class Trainer {
public:
    /// `frames` are the training frames, in embedding-row order.
    Trainer(SceneModel scene, std::vector<CameraFrame> frames, TrainConfig config);

    /// One iteration on a uniformly sampled frame.
    StepReport step();
    /// One iteration on a given training frame.
    StepReport step_on(std::size_t frame);

    /// Clone/split/prune using the accumulated statistics.
    DensifyReport densify_and_prune();

    [[nodiscard]] const SceneModel& scene() const { return scene_; }
    SceneModel& scene() { return scene_; }
    [[nodiscard]] const TrainConfig& config() const { return config_; }
    [[nodiscard]] const std::vector<CameraFrame>& frames() const { return frames_; }
    [[nodiscard]] std::int64_t iteration() const { return iteration_; }
    [[nodiscard]] double extent() const { return extent_; }
    [[nodiscard]] RenderSettings render_settings() const;

    // Checkpoint access.
    OptimizerState& optimizer() { return optim_; }
    DensifyStats& densify_stats() { return stats_; }
    std::mt19937_64& rng() { return rng_; }
    void set_iteration(std::int64_t it) { iteration_ = it; }

private:
    void apply_gradients(const ModelGrads& g);
    void accumulate_stats(const ModelGrads& g);

    SceneModel scene_;
    std::vector<CameraFrame> frames_;
    TrainConfig config_;
    OptimizerState optim_;
    DensifyStats stats_;
    std::mt19937_64 rng_;
    std::int64_t iteration_ = 0;
    double extent_ = 1.0;
};

/// Renders an arbitrary view: the embedding comes from the nearest training
/// frame, actor poses from interpolation, and the camera can be shifted
/// laterally (meters, positive = right).
RenderOutput render_novel(const SceneModel& scene, const Camera& cam, int camera_index, double timestamp,
                          const RenderSettings& settings = {}, double lateral_shift = 0.0);

/// Clamps an image to [0,1] (outputs and metrics only).
Image clamp01(const Image& img);

}  // namespace compsplat
