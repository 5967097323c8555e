#pragma once

#include "compsplat/encoders.hpp"
#include "compsplat/geometry.hpp"
#include "compsplat/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace compsplat {

/// A rigid dynamic actor: Gaussians in its own box frame plus one learnable
/// pose per keyframe.
struct ActorModel {
    int id = 0;
    int class_id = 0;
    std::string class_name = "vehicle";
    Vec3 box_size = Vec3::Ones();  ///< full box extents, meters
    GaussianSet gaussians;         ///< object-centric
    std::vector<double> key_times;
    MatX4 key_rotations;
    MatX3 key_translations;

    [[nodiscard]] std::size_t keyframe_count() const { return key_times.size(); }
    /// Scale that maps object-centric coordinates into roughly [-1, 1].
    [[nodiscard]] double coordinate_scale() const { return 0.5 * box_size.maxCoeff(); }
    void snap();
};

struct ActorPose {
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    Vec3 translation = Vec3::Zero();
    std::size_t k0 = 0;
    std::size_t k1 = 0;
    double weight = 0.0;  ///< interpolation weight of k1
};

/// Slerp/lerp between bracketing keyframes; clamped to the keyframe range.
/// A query exactly on a keyframe returns that keyframe's stored pose.
ActorPose interpolate_pose(const ActorModel& actor, double t);

/// Accumulates pose gradients into the bracketing keyframe rows.
void interpolate_pose_backward(const ActorModel& actor, const ActorPose& pose, const Vec4& d_rotation,
                               const Vec3& d_translation, MatX4& d_key_rotations, MatX3& d_key_translations);

/// μ = R_t μᵃ + T_t, r = R_t ⊗ rᵃ with R_t normalized.
void actor_to_world(const MatX3& means, const MatX4& rotations, const Vec4& pose_rotation,
                    const Vec3& pose_translation, MatX3& world_means, MatX4& world_rotations);

struct ActorToWorldGrads {
    MatX3 d_means;
    MatX4 d_rotations;
    Vec4 d_pose_rotation = Vec4::Zero();
    Vec3 d_pose_translation = Vec3::Zero();
};

ActorToWorldGrads actor_to_world_backward(const MatX3& means, const MatX4& rotations, const Vec4& pose_rotation,
                                          const MatX3& d_world_means, const MatX4& d_world_rotations);

// ---------------------------------------------------------------------------
// Spatial-temporal deformation (Δμ, Δh) = D^h(D^a(F^a(μ), F^f(t), h))
// ---------------------------------------------------------------------------

struct DeformOptions {
    int position_frequencies = 6;
    int time_frequencies = 6;
    bool class_hash_encoding = false;
    bool deform_all_sh_bands = true;  ///< false restricts Δh to the DC band
};

/// Input width of the shared spatial-temporal encoder.
int deform_input_dim(const DeformOptions& opt, int sh_dimension, const HashGridConfig* class_grid);

struct DeformCache {
    RowMatrix positions;  ///< scaled object-centric means
    RowMatrix class_positions;
    RowMatrix class_tables;
    MlpCache class_mlp;
    RowMatrix input;
    MlpCache encoder;
    MlpCache head;
};

struct DeformResult {
    MatX3 means;
    RowMatrix sh;
};

/// Optional hypernetwork inputs for the class-wise hash encoding variant.
struct ClassEncoding {
    const ClassHashEncoder* encoder = nullptr;
    VecX embedding;
};

DeformResult deform_actor(const ActorModel& actor, double t, const Mlp& da, const Mlp& dh, const DeformOptions& opt,
                          const ClassEncoding* class_encoding = nullptr, DeformCache* cache = nullptr);

struct DeformGrads {
    MatX3 d_means;
    RowMatrix d_sh;
    VecX d_class_embedding;
};

DeformGrads deform_actor_backward(const ActorModel& actor, const DeformCache& cache, const Mlp& da, const Mlp& dh,
                                  const DeformOptions& opt, const MatX3& d_deformed_means,
                                  const RowMatrix& d_deformed_sh, std::vector<RowMatrix>& d_da,
                                  std::vector<RowMatrix>& d_dh, const ClassEncoding* class_encoding = nullptr,
                                  std::vector<RowMatrix>* d_class_encoder = nullptr);

// ---------------------------------------------------------------------------
// Sky cubemap
// ---------------------------------------------------------------------------

struct TexelWeight {
    std::size_t index = 0;  ///< texel index (not channel index)
    double weight = 0.0;
};

/// Six S×S RGB faces, texel layout ((face·S + row)·S + col)·3 + channel.
/// Faces follow the OpenGL order +X, -X, +Y, -Y, +Z, -Z.
struct SkyCubemap {
    int size = 64;
    std::vector<double> texels;

    SkyCubemap() = default;
    explicit SkyCubemap(int face_size, double init = 0.5);

    [[nodiscard]] std::size_t texel_count() const { return 6u * static_cast<std::size_t>(size) * size; }
    /// Up to four bilinear taps for a unit direction.
    [[nodiscard]] std::vector<TexelWeight> taps(const Vec3& dir) const;
    void snap() { snap_to_storage(texels); }
};

Vec3 sky_color(const Vec3& dir, const SkyCubemap& sky);
/// Accumulates into d_texels (same layout as texels).
void sky_color_backward(const Vec3& dir, const SkyCubemap& sky, const Vec3& d_color, std::span<double> d_texels);

}  // namespace compsplat
