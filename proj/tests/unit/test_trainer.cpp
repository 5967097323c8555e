#include "compsplat/trainer.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace compsplat;

namespace {

Camera tiny_camera() {
    Camera cam;
    cam.fx = cam.fy = 16;
    cam.cx = cam.cy = 8;
    cam.width = cam.height = 16;
    return cam;
}

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.hash = HashGridConfig{2, 2, 8, 4, 2.0};
    cfg.embedding_dim = 4;
    cfg.hidden_width = 16;
    cfg.sky_size = 4;
    return cfg;
}

SceneModel one_gaussian_scene(const Vec3& dc_color, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    SceneModel s;
    s.config = tiny_model();
    s.background = GaussianSet(1, 1);
    s.background.means.row(0) = Vec3(0, 0, 3).transpose();
    s.background.log_scales.row(0) = Vec3::Constant(std::log(0.6)).transpose();
    s.background.opacity_logits[0] = logit(0.8);
    s.background.sh.setZero();
    for (int c = 0; c < 3; ++c) s.background.sh(0, c) = (dc_color[c] - 0.5) / kShC0;
    s.sky = SkyCubemap(s.config.sky_size, 0.5);
    s.aabb_min = Vec3(-2, -2, 0);
    s.aabb_max = Vec3(2, 2, 6);
    s.frames = {{0, 0.0}};
    s.nets = AppearanceNets(s.config, 1, 0, rng);
    s.snap();
    return s;
}

TrainConfig quiet_config(std::int64_t iterations) {
    TrainConfig c;
    c.iterations = iterations;
    c.model = tiny_model();
    c.densify.enabled = false;
    c.densify.start = 0;
    c.densify.stop = iterations;
    return c;
}

std::vector<CameraFrame> target_frames(const SceneModel& truth) {
    CameraFrame f;
    f.camera = tiny_camera();
    f.rgb = clamp01(render(truth, f.camera, 0.0, 0).rgb);
    return {f};
}

/// Sets every Gaussian's accumulated gradient so that it counts as a
/// densification candidate (or not).
void fill_stats(Trainer& t, double grad) {
    DensifyStats& st = t.densify_stats();
    for (std::size_t s = 0; s < st.grad_sum.size(); ++s) {
        for (std::size_t i = 0; i < st.grad_sum[s].size(); ++i) {
            st.grad_sum[s][i] = grad;
            st.count[s][i] = 1;
        }
        st.position_grad[s].setConstant(1.0);
    }
}

Trainer densify_fixture(const std::vector<double>& scales, const std::vector<double>& opacities) {
    SceneModel s = one_gaussian_scene(Vec3(0.5, 0.5, 0.5));
    GaussianSet set(scales.size(), 1);
    for (std::size_t i = 0; i < scales.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        set.means.row(r) = Vec3(0.1 * static_cast<double>(i), 0, 3).transpose();
        set.log_scales.row(r) = Vec3::Constant(std::log(scales[i])).transpose();
        set.opacity_logits[r] = logit(opacities[i]);
    }
    s.background = set;
    s.snap();
    TrainConfig c = quiet_config(100);
    c.densify.enabled = true;
    c.densify.start = 0;
    c.densify.stop = 100;
    return Trainer(s, target_frames(s), c);
}

}  // namespace

TEST(Trainer, ConvergesOnSingleGaussian) {
    const SceneModel truth = one_gaussian_scene(Vec3(0.9, 0.2, 0.1));
    Trainer t(one_gaussian_scene(Vec3(0.3, 0.6, 0.7)), target_frames(truth), quiet_config(200));
    const double first = t.step().loss.rgb;
    double last = first;
    for (int i = 1; i < 200; ++i) last = t.step().loss.rgb;
    EXPECT_LE(last, 0.5 * first) << "first " << first << " last " << last;
    EXPECT_EQ(t.iteration(), 200);
}

TEST(Trainer, FixedSeedIsBitwiseDeterministic) {
    const SceneModel truth = one_gaussian_scene(Vec3(0.9, 0.2, 0.1));
    auto run = [&] {
        Trainer t(one_gaussian_scene(Vec3(0.3, 0.6, 0.7)), target_frames(truth), quiet_config(30));
        std::vector<double> losses;
        for (int i = 0; i < 30; ++i) losses.push_back(t.step().loss.total);
        return losses;
    };
    EXPECT_EQ(run(), run());
}

TEST(Trainer, RejectsMismatchedFrames) {
    SceneModel s = one_gaussian_scene(Vec3(0.5, 0.5, 0.5));
    auto frames = target_frames(s);
    frames.push_back(frames[0]);
    EXPECT_THROW(Trainer(s, frames, quiet_config(10)), InvalidParameter);
    frames.pop_back();
    frames[0].rgb = Image();
    EXPECT_THROW(Trainer(s, frames, quiet_config(10)), InvalidParameter);
}

TEST(Trainer, NonFiniteLossRaisesDivergence) {
    SceneModel s = one_gaussian_scene(Vec3(0.5, 0.5, 0.5));
    auto frames = target_frames(s);
    s.background.sh(0, 0) = std::numeric_limits<double>::quiet_NaN();
    Trainer t(s, frames, quiet_config(10));
    try {
        t.step();
        FAIL() << "expected divergence";
    } catch (const TrainingDiverged& e) {
        EXPECT_TRUE(e.diagnostic.contains("iteration"));
    }
}

TEST(Trainer, StepReportJson) {
    const SceneModel s = one_gaussian_scene(Vec3(0.5, 0.5, 0.5));
    Trainer t(s, target_frames(s), quiet_config(10));
    const nlohmann::json j = to_json(t.step());
    for (const char* key : {"iteration", "frame", "loss", "l1", "ssim_loss", "psnr", "gaussians", "lr_position", "ms"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_TRUE(j["depth_loss"].is_null());
    EXPECT_FALSE(j.contains("densify"));
}

TEST(Densify, LowGradientsOnlyPrune) {
    Trainer t = densify_fixture({0.5, 0.005, 0.3}, {0.5, 0.5, 0.001});
    fill_stats(t, 1e-6);
    const DensifyReport r = t.densify_and_prune();
    EXPECT_EQ(r.clones, 0u);
    EXPECT_EQ(r.splits, 0u);
    EXPECT_EQ(r.pruned, 1u);
    ASSERT_EQ(t.scene().background.size(), 2u);
    EXPECT_NEAR(std::exp(t.scene().background.log_scales(1, 0)), 0.005, 1e-8);
}

TEST(Densify, SplitChildrenShrinkByFactor) {
    Trainer t = densify_fixture({0.5}, {0.5});
    fill_stats(t, 1.0);
    const DensifyReport r = t.densify_and_prune();
    EXPECT_EQ(r.splits, 1u);
    ASSERT_EQ(t.scene().background.size(), 2u);
    for (int i = 0; i < 2; ++i)
        EXPECT_NEAR(std::exp(t.scene().background.log_scales(i, 0)), 0.5 / 1.6, 1e-6);
}

TEST(Densify, SmallGaussiansAreCloned) {
    Trainer t = densify_fixture({0.005}, {0.5});
    fill_stats(t, 1.0);
    const DensifyReport r = t.densify_and_prune();
    EXPECT_EQ(r.clones, 1u);
    ASSERT_EQ(t.scene().background.size(), 2u);
    EXPECT_EQ(t.scene().background.log_scales.row(0), t.scene().background.log_scales.row(1));
    EXPECT_NE(t.scene().background.means.row(0), t.scene().background.means.row(1));
}

TEST(Densify, CountIsConserved) {
    Trainer t = densify_fixture({0.5, 0.005, 0.3, 0.002, 0.4}, {0.5, 0.5, 0.001, 0.5, 0.5});
    fill_stats(t, 1.0);
    const DensifyReport r = t.densify_and_prune();
    EXPECT_EQ(r.after, r.before + r.clones + r.splits - r.pruned);
    EXPECT_EQ(r.after, t.scene().gaussian_count());
    EXPECT_EQ(t.optimizer().background.means.size(), 3 * r.after);
}

TEST(Densify, CapKeepsStrongestCandidates) {
    Trainer t = densify_fixture({0.005, 0.005, 0.005}, {0.5, 0.5, 0.5});
    fill_stats(t, 1.0);
    t.densify_stats().grad_sum[0][1] = 5.0;
    const_cast<TrainConfig&>(t.config()).densify.max_gaussians = 4;
    const DensifyReport r = t.densify_and_prune();
    EXPECT_EQ(r.clones, 1u);
    EXPECT_EQ(r.after, 4u);
    // the clone of row 1 is appended last
    EXPECT_EQ(t.scene().background.log_scales.row(3), t.scene().background.log_scales.row(1));
}

TEST(Densify, RunsOnSchedule) {
    SceneModel s = one_gaussian_scene(Vec3(0.5, 0.5, 0.5));
    TrainConfig c = quiet_config(20);
    c.densify.enabled = true;
    c.densify.start = 4;
    c.densify.stop = 15;
    c.densify.interval = 5;
    Trainer t(s, target_frames(s), c);
    std::vector<std::int64_t> when;
    for (int i = 0; i < 20; ++i) {
        const StepReport r = t.step();
        if (r.densified) when.push_back(r.iteration);
    }
    // reports carry the zero-based step index; densification follows the
    // 5th and 10th completed steps, and the 15th is past the stop
    EXPECT_EQ(when, (std::vector<std::int64_t>{4, 9}));
}

TEST(CameraExtent, SpreadOfCenters) {
    std::vector<CameraFrame> frames(2);
    frames[0].camera.world_from_camera(0, 3) = -1.0;
    frames[1].camera.world_from_camera(0, 3) = 1.0;
    EXPECT_NEAR(camera_extent(frames), 1.1, 1e-12);
    frames.pop_back();
    EXPECT_EQ(camera_extent(frames), 1.0);
}
