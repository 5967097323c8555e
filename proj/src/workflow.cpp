#include "compsplat/workflow.hpp"

#include <cmath>
#include <limits>

namespace compsplat {

using nlohmann::json;

Trainer make_trainer(const SceneDataset& scene, const TrainConfig& config) {
    config.validate();
    const std::vector<std::size_t> train = train_indices(scene.frames.size(), config.holdout_every);
    if (train.empty()) throw InvalidParameter("the training split is empty");
    std::mt19937_64 rng(config.seed);
    SceneModel model = init_scene_model(scene, train, config.model, config.init, rng);
    std::vector<CameraFrame> frames;
    frames.reserve(train.size());
    for (const std::size_t i : train) frames.push_back(scene.frames[i]);
    return Trainer(std::move(model), std::move(frames), config);
}

void run_training(Trainer& trainer, std::int64_t iterations, const std::function<void(const StepReport&)>& on_step) {
    for (std::int64_t i = 0; i < iterations; ++i) {
        const StepReport r = trainer.step();
        if (on_step) on_step(r);
    }
}

EvalSummary evaluate_frames(const SceneModel& model, const SceneDataset& scene, const std::vector<std::size_t>& indices,
                            const RenderSettings& settings) {
    EvalSummary s;
    double actor_sum = 0.0;
    std::size_t actor_n = 0;
    for (const std::size_t i : indices) {
        if (i >= scene.frames.size()) throw InvalidParameter("evaluate_frames: frame index out of range");
        const CameraFrame& f = scene.frames[i];
        if (f.rgb.data.empty()) throw InvalidParameter("evaluate_frames: images are not loaded");
        const RenderOutput out = render_novel(model, f.camera, f.camera_index, f.timestamp, settings);
        const Image img = clamp01(out.rgb);
        FrameMetrics m;
        m.index = i;
        m.camera_index = f.camera_index;
        m.timestamp = f.timestamp;
        m.psnr = psnr(img, f.rgb);
        m.ssim = ssim(img, f.rgb);
        m.actor_psnr = std::numeric_limits<double>::quiet_NaN();
        if (!scene.actors.empty()) {
            const std::vector<OrientedBox> boxes = boxes_at(scene, f.timestamp);
            m.actor_psnr = psnr_masked(img, f.rgb, box_mask(f.camera, boxes));
            if (std::isfinite(m.actor_psnr)) {
                actor_sum += m.actor_psnr;
                ++actor_n;
            }
        }
        s.psnr += m.psnr;
        s.ssim += m.ssim;
        s.frames.push_back(m);
    }
    if (!s.frames.empty()) {
        s.psnr /= static_cast<double>(s.frames.size());
        s.ssim /= static_cast<double>(s.frames.size());
    } else {
        s.psnr = s.ssim = std::numeric_limits<double>::quiet_NaN();
    }
    s.actor_psnr = actor_n > 0 ? actor_sum / static_cast<double>(actor_n) : std::numeric_limits<double>::quiet_NaN();
    return s;
}

namespace {
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
}  // namespace

json to_json(const EvalSummary& s, bool per_frame) {
    json j;
    j["frames"] = s.frames.size();
    j["psnr"] = number_or_null(s.psnr);
    j["ssim"] = number_or_null(s.ssim);
    j["actor_psnr"] = number_or_null(s.actor_psnr);
    if (per_frame) {
        json rows = json::array();
        for (const auto& m : s.frames) {
            rows.push_back({{"index", m.index},
                            {"camera_index", m.camera_index},
                            {"timestamp", m.timestamp},
                            {"psnr", number_or_null(m.psnr)},
                            {"ssim", number_or_null(m.ssim)},
                            {"actor_psnr", number_or_null(m.actor_psnr)}});
        }
        j["per_frame"] = std::move(rows);
    }
    return j;
}

}  // namespace compsplat
