#pragma once

#include "compsplat/config.hpp"
#include "compsplat/geometry.hpp"
#include "compsplat/losses.hpp"
#include "compsplat/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace compsplat {

struct ActorTrack {
    int id = 0;
    std::string class_name = "vehicle";
    Vec3 size = Vec3::Ones();
    std::vector<double> times;
    std::vector<Vec4> rotations;
    std::vector<Vec3> translations;

    /// Box at time t, interpolated like actor poses.
    [[nodiscard]] OrientedBox box_at(double t) const;
};

struct CameraFrame {
    Camera camera;
    int camera_index = 0;
    double timestamp = 0.0;
    std::filesystem::path image_path;
    std::filesystem::path depth_path;  ///< empty when absent
    std::filesystem::path sky_path;    ///< empty when absent
    Image rgb;
    Image depth;
    Image sky;
};

struct PointCloud {
    std::vector<Vec3> positions;
    std::vector<Vec3> colors;  ///< [0,1]
};

struct SceneDataset {
    std::filesystem::path root;
    std::vector<CameraFrame> frames;
    std::vector<ActorTrack> actors;
    Vec3 aabb_min = Vec3::Zero();
    Vec3 aabb_max = Vec3::Ones();
    PointCloud points;
    nlohmann::json generator;  ///< free-form provenance block, may be null
};

/// Lists every violated dataset invariant.
class SceneValidationError : public std::runtime_error {
public:
    explicit SceneValidationError(std::vector<std::string> problems);
    std::vector<std::string> problems;
};

/// Parses and validates a scene directory. With `load_images` the PNG/PFM
/// payloads are decoded; otherwise only their existence is checked.
SceneDataset load_scene(const std::filesystem::path& dir, bool load_images = true);

/// Writes scene.json for a dataset whose images already exist on disk.
void write_scene_json(const SceneDataset& scene, const std::filesystem::path& path);

PointCloud read_point_cloud(const std::filesystem::path& path);
void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud);

/// Keeps the first point that falls in each voxel, in input order.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size);
/// Mean distance to the k nearest other points, per point.
std::vector<double> knn_mean_distance(const std::vector<Vec3>& points, int k);

/// Boxes of every actor at time t.
std::vector<OrientedBox> boxes_at(const SceneDataset& scene, double t);

/// Frame indices for the every-Nth holdout protocol (index % every == 0 is
/// a test frame). every = 0 puts everything in the training split.
std::vector<std::size_t> train_indices(std::size_t frame_count, int every);
std::vector<std::size_t> test_indices(std::size_t frame_count, int every);

/// Builds the initial learnable scene from the point cloud and tracks. The
/// frame embedding table gets one row per entry of `train_frames`.
SceneModel init_scene_model(const SceneDataset& scene, const std::vector<std::size_t>& train_frames,
                            const ModelConfig& model, const InitConfig& init, std::mt19937_64& rng);

}  // namespace compsplat
