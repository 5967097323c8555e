#pragma once

#include "compsplat/actors.hpp"
#include "compsplat/appearance.hpp"
#include "compsplat/encoders.hpp"
#include "compsplat/geometry.hpp"
#include "compsplat/losses.hpp"
#include "compsplat/rasterizer.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace compsplat {

struct ModelConfig {
    int sh_degree = 1;
    HashGridConfig hash;
    int embedding_dim = 16;
    int class_embedding_dim = 8;
    int hidden_width = 64;
    DeformOptions deform;
    /// Grid generated by the class hypernetwork; kept small so the
    /// hypernetwork output layer stays tractable on a CPU.
    HashGridConfig class_hash{4, 2, 10, 16, 1.5};
    int sky_size = 64;
    double near_plane = 0.2;
};

/// Learnable appearance networks shared by the whole scene.
struct AppearanceNets {
    HashGrid hash;
    EmbeddingTable frames;  ///< one row per training frame
    Mlp local;              ///< (H(μ), ε, c) → 6
    Mlp global;             ///< (ε, φ) → 12
    Mlp encoder;            ///< spatial-temporal actor encoder
    Mlp head;               ///< (Δμ, Δh)
    EmbeddingTable classes;
    ClassHashEncoder class_encoder;

    AppearanceNets() = default;
    AppearanceNets(const ModelConfig& cfg, std::size_t frame_count, std::size_t class_count, std::mt19937_64& rng);
};

struct SceneModel {
    ModelConfig config;
    GaussianSet background;
    std::vector<ActorModel> actors;
    SkyCubemap sky;
    Vec3 aabb_min = Vec3::Constant(-1.0);
    Vec3 aabb_max = Vec3::Constant(1.0);
    std::vector<FrameKey> frames;  ///< embedding row i belongs to training frame i
    AppearanceNets nets;

    [[nodiscard]] std::size_t gaussian_count() const;
    [[nodiscard]] std::size_t class_count() const;
    /// Rounds every learnable value to checkpoint storage precision.
    void snap();
};

enum class RenderMode { full, background, actors, raw };

const char* to_string(RenderMode mode);
RenderMode parse_render_mode(const std::string& s);

struct RefinementSwitches {
    bool local = true;
    bool global = true;
    bool actor = true;
};

struct RenderSettings {
    RenderMode mode = RenderMode::full;
    RefinementSwitches refine;
    RasterOptions raster;
};

/// Everything the backward pass needs from one forward render.
struct PipelineCache {
    Camera camera;
    double timestamp = 0.0;
    std::size_t embedding_row = 0;
    RenderSettings settings;
    bool use_local = false;
    bool use_global = false;
    bool use_deform = false;
    bool use_sky = false;

    // flattened world-space Gaussians; set 0 is the background, set k+1 actor k
    std::vector<int> owner_set;
    std::vector<std::size_t> owner_row;
    std::vector<int> included_sets;
    MatX3 means;
    MatX4 rotations;
    MatX3 scales;
    VecX opacities;
    RowMatrix sh;

    std::vector<std::size_t> actor_offset;
    std::vector<DeformCache> deform;
    std::vector<DeformResult> deformed;
    std::vector<ActorPose> poses;

    std::vector<Mat3> cov;
    std::vector<Projected2D> projected;
    MatX3 view_dirs;
    MatX3 colors;
    MatX3 base_colors;
    MatX3 active_colors;  ///< SH colors of the splatted Gaussians, splat order
    MatX3 positions01;    ///< normalized centers of the splatted Gaussians
    LocalRefineCache local;

    std::vector<Splat> splats;
    std::vector<std::size_t> splat_source;
    TileBins bins;
    PixelTotals raster_totals;
    Image background;
    Image composited;
    GlobalRefineCache global;
    GlobalTransform transform;
};

/// Runs deform → pose → SH → local refine → rasterize → sky → global refine.
/// The returned rgb is the refined image (unclamped).
RenderOutput render(const SceneModel& scene, const Camera& cam, double timestamp, std::size_t embedding_row,
                    const RenderSettings& settings = {}, PipelineCache* cache = nullptr);

/// Gradient buffers mirroring every learnable tensor of a SceneModel.
struct ModelGrads {
    GaussianSet background;
    std::vector<GaussianSet> actors;
    std::vector<MatX4> key_rotations;
    std::vector<MatX3> key_translations;
    std::vector<double> sky;
    RowMatrix hash;
    RowMatrix frames;
    std::vector<RowMatrix> local;
    std::vector<RowMatrix> global;
    std::vector<RowMatrix> encoder;
    std::vector<RowMatrix> head;
    RowMatrix classes;
    std::vector<RowMatrix> class_encoder;
    /// Per set (0 = background, k+1 = actor k): screen-space positional
    /// gradient norm in NDC units and whether the Gaussian was rasterized.
    std::vector<std::vector<double>> screen_grad;
    std::vector<std::vector<std::uint8_t>> visible;
};

ModelGrads zero_grads(const SceneModel& scene);

/// Accumulates the gradients of a scalar loss into `grads`, given dL/d(render
/// channels) for the render held in `cache`.
void render_backward(const SceneModel& scene, const PipelineCache& cache, const LossGrads& upstream,
                     ModelGrads& grads);

/// Per-pixel sky colors for a camera.
Image sky_background(const SkyCubemap& sky, const Camera& cam);

}  // namespace compsplat
