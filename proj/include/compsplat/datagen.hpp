#pragma once

#include "compsplat/geometry.hpp"
#include "compsplat/rasterizer.hpp"
#include "compsplat/scene_io.hpp"
#include "compsplat/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace compsplat {

struct SyntheticBox {
    Vec3 center = Vec3::Zero();
    Vec3 size = Vec3::Ones();
    Vec3 color = Vec3::Constant(0.5);
};

/// A rigid box moving linearly from `start` to `end` over the sequence while
/// yawing from `yaw_start` to `yaw_end` (degrees, about the vertical axis).
/// Its albedo pulses as c₀·(1 + pulse·sin(2πt)).
struct SyntheticActor {
    std::string class_name = "vehicle";
    Vec3 size = Vec3(1.8, 1.5, 4.0);
    Vec3 color = Vec3(0.6, 0.15, 0.1);
    Vec3 start = Vec3(-2.5, 0.75, 8.0);
    Vec3 end = Vec3(-2.5, 0.75, 14.0);
    double yaw_start = 0.0;
    double yaw_end = 10.0;
    double pulse = 0.4;
    int points = 400;
};

/// Procedural street scene: y points down, the ground is the plane
/// y = ground_height, the ego rig drives along +z.
struct SyntheticSpec {
    std::uint64_t seed = 7;
    int width = 96;
    int height = 96;
    int timestamps = 12;
    int cameras = 2;
    double focal_factor = 0.8;           ///< fx = fy = focal_factor · width
    double camera_yaw = 15.0;            ///< degrees; cameras fan out symmetrically
    double camera_pitch = 8.0;           ///< degrees below the horizon
    double camera_baseline = 0.6;        ///< meters between neighbouring cameras
    double ego_travel = 4.0;             ///< meters along +z over the sequence
    double ground_height = 1.5;
    Vec3 ground_color_a = Vec3(0.62, 0.6, 0.55);
    Vec3 ground_color_b = Vec3(0.32, 0.33, 0.36);
    double checker_size = 1.0;
    Vec3 sky_color = Vec3(0.55, 0.7, 0.9);
    std::vector<SyntheticBox> boxes = {
        {Vec3(4.0, 0.5, 12.0), Vec3(2.0, 2.0, 2.0), Vec3(0.8, 0.3, 0.25)},
        {Vec3(-7.0, 0.0, 18.0), Vec3(3.0, 3.0, 3.0), Vec3(0.25, 0.55, 0.3)},
        {Vec3(6.5, -0.5, 22.0), Vec3(2.5, 4.0, 2.5), Vec3(0.3, 0.35, 0.75)},
    };
    std::vector<SyntheticActor> actors = {SyntheticActor{}};
    double gain_jitter = 0.2;  ///< g ∈ [1 - j, 1 + j] per image
    double tint = 0.15;        ///< per-image spatial tint amplitude, 0 disables
    int supersample = 3;
    int ground_points = 2500;
    int box_points = 300;
    Vec3 aabb_min = Vec3(-16.0, -6.0, -4.0);
    Vec3 aabb_max = Vec3(16.0, 2.0, 36.0);

    /// Throws InvalidParameter listing every problem.
    void validate() const;
};

nlohmann::json spec_to_json(const SyntheticSpec& spec);
/// Missing keys keep their defaults; unknown keys are rejected.
SyntheticSpec spec_from_json(const nlohmann::json& j);

/// Per-image appearance perturbation: output = clamp(g · mean_s[c_s ⊙ tint(x_s)])
/// where tint(x) = 1 + a ⊙ tanh(x/2) on surfaces and 1 on sky.
struct FrameAppearance {
    double gain = 1.0;
    Vec3 tint = Vec3::Zero();
};

std::vector<FrameAppearance> frame_appearance(const SyntheticSpec& spec);

struct SyntheticFrame {
    Camera camera;
    int camera_index = 0;
    int timestamp_index = 0;
    double timestamp = 0.0;
    FrameAppearance appearance;
    Image rgb;    ///< [0,1], before 8-bit quantization
    Image depth;  ///< camera z of the center ray, 0 on sky
    Image sky;    ///< 1 where the center ray escapes
};

/// Total image count (timestamps × cameras), ordered timestamp-major.
std::size_t synthetic_frame_count(const SyntheticSpec& spec);
Camera synthetic_camera(const SyntheticSpec& spec, int timestamp_index, int camera_index);
/// Actor tracks with one keyframe per timestamp.
std::vector<ActorTrack> synthetic_tracks(const SyntheticSpec& spec);

/// Renders image `index` analytically. `appearance` overrides the seeded
/// gain/tint of that image.
SyntheticFrame render_synthetic_frame(const SyntheticSpec& spec, std::size_t index,
                                      const std::optional<FrameAppearance>& appearance = std::nullopt);

/// Writes a complete scene directory (scene.json, images/, depth/, sky/,
/// points.ply). Identical specs produce byte-identical directories.
void generate_scene(const SyntheticSpec& spec, const std::filesystem::path& dir);

/// Reference compositor: every pixel sorts all splats by depth and blends
/// them front to back with no binning, culling or early termination.
RenderOutput brute_force_blend_oracle(std::span<const Splat> splats, int width, int height, const Image& background);

}  // namespace compsplat
