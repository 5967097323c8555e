#pragma once

#include "compsplat/encoders.hpp"
#include "compsplat/geometry.hpp"
#include "compsplat/types.hpp"

#include <span>
#include <vector>

namespace compsplat {

// ---------------------------------------------------------------------------
// Local (per-Gaussian) refinement: c' = (1 + a) ⊙ c + b, (a, b) = D^l(H(μ), ε, c_dc)
// ---------------------------------------------------------------------------

struct LocalRefineCache {
    MatX3 positions;
    RowMatrix features;
    RowMatrix raw;  ///< N×6: raw scale residual then offset
    MlpCache mlp;
};

/// Builds the per-Gaussian feature rows in fixed order (H(μ), ε, c_dc).
RowMatrix local_features(const MatX3& positions01, const VecX& embedding, const MatX3& base_colors,
                         const HashGrid& hash);

/// `colors` are the colors that enter blending, `base_colors` the
/// view-independent DC colors used as network input, `positions01` the
/// Gaussian centers normalized into the scene box.
MatX3 local_refine(const MatX3& colors, const MatX3& base_colors, const MatX3& positions01, const VecX& embedding,
                   const HashGrid& hash, const Mlp& dl, LocalRefineCache* cache = nullptr);

struct LocalRefineGrads {
    MatX3 d_colors;
    MatX3 d_base_colors;
    MatX3 d_positions;
    VecX d_embedding;
};

/// Accumulates into d_tables / d_mlp; returns the remaining input gradients.
LocalRefineGrads local_refine_backward(const LocalRefineCache& cache, const MatX3& colors, const HashGrid& hash,
                                       const Mlp& dl, const MatX3& d_refined, RowMatrix& d_tables,
                                       std::vector<RowMatrix>& d_mlp);

// ---------------------------------------------------------------------------
// Global (per-image) refinement: C' = (I + A)·C + b, (A, b) = D^g(ε, φ)
// ---------------------------------------------------------------------------

using Vec6 = Eigen::Matrix<double, 6, 1>;

/// φ = (camera center, unit optical axis).
Vec6 camera_viewpoint_code(const Camera& cam);

struct GlobalTransform {
    Mat3 matrix = Mat3::Identity();
    Vec3 offset = Vec3::Zero();
};

struct GlobalRefineCache {
    RowMatrix input;  ///< 1×(E+6)
    MlpCache mlp;
};

GlobalTransform global_transform(const VecX& embedding, const Vec6& viewpoint, const Mlp& dg,
                                 GlobalRefineCache* cache = nullptr);

/// Applies the affine color transform to every pixel of a 3-channel image.
Image global_refine(const Image& image, const GlobalTransform& t);

struct GlobalRefineGrads {
    Image d_image;
    VecX d_embedding;
};

GlobalRefineGrads global_refine_backward(const GlobalRefineCache& cache, const Image& image, const GlobalTransform& t,
                                         const Mlp& dg, const Image& d_refined, std::vector<RowMatrix>& d_mlp);

// ---------------------------------------------------------------------------
// Novel-view embedding lookup
// ---------------------------------------------------------------------------

struct FrameKey {
    int camera_index = 0;
    double timestamp = 0.0;
};

/// Nearest training frame by timestamp among frames with the same camera
/// index (all frames when none match). Ties go to the earlier frame.
std::size_t lookup_embedding(int camera_index, double timestamp, std::span<const FrameKey> frames);

}  // namespace compsplat
