#include "compsplat/config.hpp"
#include "compsplat/image_io.hpp"
#include "compsplat/ply.hpp"
#include "compsplat/quaternion.hpp"
#include "compsplat/scene_io.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numbers>

using namespace compsplat;
using compsplat::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

/// Writes a one-camera scene with the given points and actor tracks.
SceneDataset write_minimal_scene(const fs::path& dir, const PointCloud& points, std::vector<ActorTrack> actors = {}) {
    SceneDataset s;
    s.root = dir;
    s.aabb_min = Vec3(-5, -5, -5);
    s.aabb_max = Vec3(5, 5, 5);
    CameraFrame f;
    f.camera.fx = f.camera.fy = 8;
    f.camera.cx = f.camera.cy = 4;
    f.camera.width = f.camera.height = 8;
    f.image_path = "images/a.png";
    s.frames.push_back(f);
    s.actors = std::move(actors);
    s.points = points;
    fs::create_directories(dir / "images");
    write_png(dir / "images/a.png", Image(8, 8, 3, 0.5));
    write_point_cloud(dir / "points.ply", points);
    write_scene_json(s, dir / "scene.json");
    return s;
}

PointCloud cube_points() {
    PointCloud c;
    for (int i = 0; i < 8; ++i) {
        c.positions.emplace_back(i & 1 ? 1.0 : -1.0, i & 2 ? 1.0 : -1.0, i & 4 ? 1.0 : -1.0);
        c.colors.push_back(Vec3::Constant(128.0 / 255.0));
    }
    return c;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST(SceneLoad, MinimalScene) {
    const fs::path dir = scratch_dir();
    write_minimal_scene(dir, cube_points());
    const SceneDataset s = load_scene(dir);
    ASSERT_EQ(s.frames.size(), 1u);
    EXPECT_EQ(s.frames[0].rgb.width, 8);
    EXPECT_EQ(s.points.positions.size(), 8u);
    std::mt19937_64 rng(0);
    const SceneModel m = init_scene_model(s, {0}, ModelConfig{}, InitConfig{}, rng);
    EXPECT_EQ(m.background.size(), 8u);
    EXPECT_TRUE(m.actors.empty());
    EXPECT_EQ(m.nets.frames.rows(), 1u);
}

TEST(SceneLoad, GrayPointInitialColor) {
    const fs::path dir = scratch_dir();
    write_minimal_scene(dir, cube_points());
    const SceneDataset s = load_scene(dir);
    std::mt19937_64 rng(0);
    const SceneModel m = init_scene_model(s, {0}, ModelConfig{}, InitConfig{}, rng);
    const double exact = (128.0 / 255.0 - 0.5) / kShC0;
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(m.background.sh(0, c), exact, 1e-8);
        EXPECT_NEAR(m.background.sh(0, c), 0.00697, 3e-5);
    }
    EXPECT_EQ(m.background.sh(0, 3), 0.0);
    EXPECT_NEAR(sigmoid(m.background.opacity_logits[0]), 0.1, 1e-6);
    // kNN scale: the three nearest cube neighbours sit 2 m away
    EXPECT_NEAR(std::exp(m.background.log_scales(0, 0)), 2.0, 1e-6);
}

TEST(SceneLoad, PointInsideActorBoxMovesToActorFrame) {
    const fs::path dir = scratch_dir();
    PointCloud pts = cube_points();
    pts.positions.push_back(Vec3(3.2, 0.0, 1.0));
    pts.colors.push_back(Vec3(1, 0, 0));
    ActorTrack t;
    t.id = 5;
    t.size = Vec3(1, 1, 2);
    t.times = {0.0, 1.0};
    t.rotations = {quat::from_axis_angle(Vec3::UnitY(), std::numbers::pi / 2), quat::identity()};
    t.translations = {Vec3(3, 0, 1), Vec3(3, 0, 3)};
    write_minimal_scene(dir, pts, {t});
    const SceneDataset s = load_scene(dir);
    ASSERT_EQ(s.actors.size(), 1u);
    std::mt19937_64 rng(0);
    const SceneModel m = init_scene_model(s, {0}, ModelConfig{}, InitConfig{}, rng);
    EXPECT_EQ(m.background.size(), 8u);
    ASSERT_EQ(m.actors.size(), 1u);
    ASSERT_EQ(m.actors[0].gaussians.size(), 1u);
    EXPECT_EQ(m.actors[0].id, 5);
    // a quarter turn about y carries local +z onto world +x
    const Vec3 local = m.actors[0].gaussians.means.row(0).transpose();
    EXPECT_TRUE(local.isApprox(Vec3(0, 0, 0.2), 1e-6)) << local.transpose();
}

TEST(SceneLoad, CollectsEveryProblem) {
    const fs::path dir = scratch_dir();
    ActorTrack t;
    t.size = Vec3(1, 1, 1);
    t.times = {0.0};
    t.rotations = {quat::identity()};
    t.translations = {Vec3::Zero()};
    write_minimal_scene(dir, cube_points(), {t});
    nlohmann::json j = read_json(dir / "scene.json");
    j["cameras"][0]["timestamp"] = 1.5;
    j["cameras"][0]["image"] = "images/missing.png";
    j["actors"][0]["keyframes"].push_back(j["actors"][0]["keyframes"][0]);
    j["aabb"]["min"] = {9, 9, 9};
    write_json(dir / "scene.json", j);
    try {
        load_scene(dir);
        FAIL() << "expected a validation error";
    } catch (const SceneValidationError& e) {
        EXPECT_GE(e.problems.size(), 4u);
        auto mentions = [&](const std::string& needle) {
            return std::any_of(e.problems.begin(), e.problems.end(),
                               [&](const std::string& p) { return p.find(needle) != std::string::npos; });
        };
        EXPECT_TRUE(mentions("timestamp must lie in [0, 1]"));
        EXPECT_TRUE(mentions("file not found"));
        EXPECT_TRUE(mentions("strictly increasing"));
        EXPECT_TRUE(mentions("aabb"));
    }
}

TEST(SceneLoad, ImageSizeMismatchIsReported) {
    const fs::path dir = scratch_dir();
    write_minimal_scene(dir, cube_points());
    write_png(dir / "images/a.png", Image(9, 8, 3, 0.5));
    EXPECT_THROW(load_scene(dir), SceneValidationError);
    EXPECT_NO_THROW(load_scene(dir, false));
}

TEST(Splits, EveryNthFrameIsHeldOut) {
    EXPECT_EQ(test_indices(10, 4), (std::vector<std::size_t>{0, 4, 8}));
    EXPECT_EQ(train_indices(10, 4), (std::vector<std::size_t>{1, 2, 3, 5, 6, 7, 9}));
    EXPECT_EQ(train_indices(3, 0).size(), 3u);
    EXPECT_TRUE(test_indices(3, 0).empty());
}

TEST(PointCloud, VoxelDownsampleKeepsFirstPerVoxel) {
    PointCloud c;
    c.positions = {Vec3(0.01, 0.01, 0.01), Vec3(0.02, 0.03, 0.04), Vec3(0.07, 0.0, 0.0)};
    c.colors = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    const PointCloud d = voxel_downsample(c, 0.05);
    ASSERT_EQ(d.positions.size(), 2u);
    EXPECT_EQ(d.colors[0], Vec3(1, 0, 0));
    EXPECT_EQ(d.colors[1], Vec3(0, 0, 1));
}

TEST(PointCloud, KnnMeanDistance) {
    const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0)};
    const auto d = knn_mean_distance(pts, 1);
    EXPECT_DOUBLE_EQ(d[0], 1.0);
    EXPECT_DOUBLE_EQ(d[1], 1.0);
    EXPECT_DOUBLE_EQ(d[2], 2.0);
}

TEST(Ply, BinaryRoundTrip) {
    const fs::path dir = scratch_dir();
    PlyTable t;
    t.properties = {{"x", PlyType::float32}, {"n", PlyType::int32}, {"c", PlyType::uint8}, {"d", PlyType::float64}};
    t.rows = 2;
    t.values = {1.5, -7, 200, 0.1, -2.25, 12, 3, 1e-300};
    write_ply(dir / "t.ply", t);
    const PlyTable r = read_ply(dir / "t.ply");
    ASSERT_EQ(r.rows, 2u);
    EXPECT_EQ(r.values, t.values);
    EXPECT_EQ(r.column("n"), 1);
    EXPECT_EQ(r.column("missing"), -1);
    EXPECT_THROW((void)r.require_column("missing"), PlyError);
}

TEST(Ply, AsciiWithExtraElements) {
    const fs::path dir = scratch_dir();
    std::ofstream(dir / "a.ply") << "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float x\n"
                                    "property float y\nproperty float z\nproperty uchar red\nproperty uchar green\n"
                                    "property uchar blue\nelement face 0\nproperty list uchar int vertex_indices\n"
                                    "end_header\n0 1 2 255 0 0\n3 4 5 0 0 255\n";
    const PointCloud c = read_point_cloud(dir / "a.ply");
    ASSERT_EQ(c.positions.size(), 2u);
    EXPECT_EQ(c.positions[1], Vec3(3, 4, 5));
    EXPECT_EQ(c.colors[0], Vec3(1, 0, 0));
}

TEST(Ply, TruncatedFileFails) {
    const fs::path dir = scratch_dir();
    write_point_cloud(dir / "p.ply", cube_points());
    fs::resize_file(dir / "p.ply", fs::file_size(dir / "p.ply") - 5);
    EXPECT_THROW(read_ply(dir / "p.ply"), PlyError);
}

TEST(ImageIo, PngRoundTripQuantizes) {
    const fs::path dir = scratch_dir();
    Image img(5, 3, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i) / 50.0 - 0.1;
    write_png(dir / "x.png", img);
    const Image back = read_png(dir / "x.png", 3);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        EXPECT_EQ(back.data[i], to_byte(img.data[i]) / 255.0);
    EXPECT_EQ(read_png(dir / "x.png", 1).channels, 1);
}

TEST(ImageIo, PfmRoundTripIsExactAtFloatPrecision) {
    const fs::path dir = scratch_dir();
    std::mt19937_64 rng(1);
    const Image img = compsplat::testing::random_image(7, 4, 1, rng, 0, 50);
    write_pfm(dir / "d.pfm", img);
    const Image back = read_pfm(dir / "d.pfm");
    ASSERT_TRUE(back.same_shape(img));
    for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_EQ(back.data[i], to_storage(img.data[i]));
    EXPECT_THROW(read_pfm(dir / "nope.pfm"), IoError);
}

TEST(Config, DefaultsRoundTripThroughJson) {
    const TrainConfig c;
    const TrainConfig back = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(back), config_to_json(c));
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, UnknownKeysAreRejected) {
    nlohmann::json j = config_to_json(TrainConfig{});
    j["lr"]["bogus"] = 1.0;
    EXPECT_THROW(config_from_json(j), InvalidParameter);
    nlohmann::json k = config_to_json(TrainConfig{});
    k["iterations"] = "many";
    EXPECT_THROW(config_from_json(k), InvalidParameter);
}

TEST(Config, OverridesApplyToExistingKeysOnly) {
    nlohmann::json j = config_to_json(TrainConfig{});
    apply_override(j, "loss.ssim=0.5");
    apply_override(j, "densify.enabled=false");
    EXPECT_EQ(j["loss"]["ssim"], 0.5);
    EXPECT_EQ(j["densify"]["enabled"], false);
    EXPECT_THROW(apply_override(j, "loss.nope=1"), InvalidParameter);
    EXPECT_THROW(apply_override(j, "no_equals_sign"), InvalidParameter);
    const TrainConfig c = resolve_config(nullptr, {"iterations=50", "densify.start=10", "densify.stop=40"});
    EXPECT_EQ(c.iterations, 50);
}

TEST(Config, ValidationListsViolations) {
    TrainConfig c;
    c.iterations = 100;  // densify.stop is still 15000
    EXPECT_THROW(c.validate(), InvalidParameter);
    c.densify.stop = 80;
    c.densify.start = 10;
    EXPECT_NO_THROW(c.validate());
    c.loss.ssim = 1.5;
    EXPECT_THROW(c.validate(), InvalidParameter);
}
