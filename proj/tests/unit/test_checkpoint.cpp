#include "compsplat/checkpoint.hpp"
#include "compsplat/datagen.hpp"
#include "compsplat/workflow.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

using namespace compsplat;
using compsplat::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// A small generated dataset shared by every test in this file.
const SceneDataset& dataset() {
    static const SceneDataset d = [] {
        SyntheticSpec s;
        s.width = s.height = 24;
        s.timestamps = 3;
        s.supersample = 1;
        s.ground_points = 200;
        s.box_points = 40;
        s.actors[0].points = 60;
        const fs::path dir = fs::temp_directory_path() / "compsplat_tests" / "checkpoint_scene";
        fs::remove_all(dir);
        generate_scene(s, dir);
        return load_scene(dir);
    }();
    return d;
}

TrainConfig short_config() {
    TrainConfig c;
    c.iterations = 12;
    c.seed = 5;
    c.model.hash = HashGridConfig{4, 2, 10, 8, 1.5};
    c.model.hidden_width = 16;
    c.model.sky_size = 8;
    c.densify.start = 3;
    c.densify.stop = 10;
    c.densify.interval = 3;
    c.densify.grad_threshold = 1e-6;
    c.holdout_every = 4;
    return c;
}

double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

std::vector<std::string> checkpoint_files(const fs::path& dir) {
    return {slurp(dir / "gaussians.ply"), slurp(dir / "nets.bin"), slurp(dir / "meta.json")};
}

}  // namespace

TEST(Checkpoint, RenderSurvivesRoundTrip) {
    const fs::path dir = scratch_dir();
    Trainer t = make_trainer(dataset(), short_config());
    run_training(t, 6);
    save_checkpoint(dir, t.scene(), t.config(), t.iteration());
    const Checkpoint ck = load_checkpoint(dir);
    EXPECT_EQ(ck.iteration, 6);
    EXPECT_EQ(config_to_json(ck.config), config_to_json(t.config()));
    const CameraFrame& f = dataset().frames[1];
    const RenderOutput a = render_novel(t.scene(), f.camera, f.camera_index, f.timestamp);
    const RenderOutput b = render_novel(ck.scene, f.camera, f.camera_index, f.timestamp);
    EXPECT_LE(max_abs_diff(a.rgb, b.rgb), 1e-7);
    EXPECT_LE(max_abs_diff(a.depth, b.depth), 1e-7);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const fs::path dir = scratch_dir();
    Trainer t = make_trainer(dataset(), short_config());
    run_training(t, 4);
    save_checkpoint(dir / "a", t.scene(), t.config(), t.iteration());
    const Checkpoint ck = load_checkpoint(dir / "a");
    save_checkpoint(dir / "b", ck.scene, ck.config, ck.iteration);
    EXPECT_EQ(checkpoint_files(dir / "a"), checkpoint_files(dir / "b"));
}

TEST(Checkpoint, WrongMagicIsRejected) {
    const fs::path dir = scratch_dir();
    Trainer t = make_trainer(dataset(), short_config());
    save_checkpoint(dir, t.scene(), t.config(), 0);
    std::string bytes = slurp(dir / "nets.bin");
    bytes[0] = 'X';
    std::ofstream(dir / "nets.bin", std::ios::binary) << bytes;
    EXPECT_THROW(load_checkpoint(dir), CheckpointError);
}

TEST(Checkpoint, VersionMismatchIsRejected) {
    const fs::path dir = scratch_dir();
    Trainer t = make_trainer(dataset(), short_config());
    save_checkpoint(dir, t.scene(), t.config(), 0);
    std::string bytes = slurp(dir / "nets.bin");
    bytes[4] = static_cast<char>(kNetsVersion + 1);
    std::ofstream(dir / "nets.bin", std::ios::binary) << bytes;
    EXPECT_THROW(load_checkpoint(dir), CheckpointError);
}

TEST(Checkpoint, TruncatedFilesAreRejected) {
    const fs::path dir = scratch_dir();
    Trainer t = make_trainer(dataset(), short_config());
    save_checkpoint(dir, t.scene(), t.config(), 0);
    save_training_state(dir, t);
    for (const char* name : {"nets.bin", "gaussians.ply"}) {
        const std::string keep = slurp(dir / name);
        fs::resize_file(dir / name, keep.size() - 7);
        EXPECT_ANY_THROW(load_checkpoint(dir)) << name;
        std::ofstream(dir / name, std::ios::binary) << keep;
    }
    fs::resize_file(dir / "optimizer.bin", fs::file_size(dir / "optimizer.bin") - 3);
    Trainer u = make_trainer(dataset(), short_config());
    EXPECT_THROW(restore_training_state(dir, u), CheckpointError);
}

TEST(Checkpoint, MissingDirectoryIsAnError) {
    EXPECT_ANY_THROW(load_checkpoint(scratch_dir() / "nothing_here"));
}

TEST(Checkpoint, ResumeIsBitCompatible) {
    const fs::path dir = scratch_dir();
    const TrainConfig cfg = short_config();
    const std::vector<std::size_t> train = train_indices(dataset().frames.size(), cfg.holdout_every);

    Trainer straight = make_trainer(dataset(), cfg);
    std::vector<double> reference;
    run_training(straight, cfg.iterations, [&](const StepReport& r) { reference.push_back(r.loss.total); });

    Trainer first = make_trainer(dataset(), cfg);
    std::vector<double> resumed;
    run_training(first, 5, [&](const StepReport& r) { resumed.push_back(r.loss.total); });
    save_checkpoint(dir / "mid", first.scene(), first.config(), first.iteration());
    save_training_state(dir / "mid", first);

    Checkpoint ck = load_checkpoint(dir / "mid");
    std::vector<CameraFrame> frames;
    for (const std::size_t i : train) frames.push_back(dataset().frames[i]);
    Trainer second(std::move(ck.scene), std::move(frames), ck.config);
    restore_training_state(dir / "mid", second);
    EXPECT_EQ(second.iteration(), 5);
    run_training(second, cfg.iterations - 5, [&](const StepReport& r) { resumed.push_back(r.loss.total); });

    EXPECT_EQ(resumed, reference);
    save_checkpoint(dir / "a", straight.scene(), straight.config(), straight.iteration());
    save_checkpoint(dir / "b", second.scene(), second.config(), second.iteration());
    EXPECT_EQ(checkpoint_files(dir / "a"), checkpoint_files(dir / "b"));
}

TEST(Workflow, EvaluationOfTestSplit) {
    const TrainConfig cfg = short_config();
    Trainer t = make_trainer(dataset(), cfg);
    const auto test = test_indices(dataset().frames.size(), cfg.holdout_every);
    const EvalSummary s = evaluate_frames(t.scene(), dataset(), test);
    ASSERT_EQ(s.frames.size(), test.size());
    EXPECT_TRUE(std::isfinite(s.psnr));
    EXPECT_GT(s.ssim, -1.0);
    const nlohmann::json j = to_json(s);
    EXPECT_EQ(j["frames"].get<std::size_t>(), test.size());
    EXPECT_EQ(j["per_frame"].size(), test.size());
}
