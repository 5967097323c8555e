#pragma once

#include "compsplat/types.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace compsplat {

constexpr int kTileSize = 16;
constexpr double kAlphaClamp = 0.99;
constexpr double kAlphaSkip = 1.0 / 255.0;
constexpr double kMinAccumulation = 1e-6;
constexpr int kBackgroundTag = -1;

/// A projected Gaussian ready for blending. `opacity` is already sigmoid'ed.
struct Splat {
    Vec2 center = Vec2::Zero();
    Mat2 conic = Mat2::Identity();  ///< inverse of the 2D covariance
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    double depth = 0.0;
    double radius = 0.0;  ///< screen-space extent used for tile binning
    int actor = kBackgroundTag;
    /// Exponent below which α is certainly under the skip threshold; lets
    /// blending reject a pixel before evaluating exp. -inf disables it.
    double min_power = -std::numeric_limits<double>::infinity();
};

/// Radius beyond which α = opacity·exp(-½dᵀΣ⁻¹d) is guaranteed below the
/// 1/255 skip threshold, so culling outside it never changes the image.
/// Returns 0 when the splat can never reach the threshold.
double splat_extent(const Mat2& cov2d, double opacity);

/// Builds a splat from a 2D covariance (conic and extent derived).
Splat make_splat(const Vec2& center, const Mat2& cov2d, double opacity, const Vec3& color, double depth,
                 int actor = kBackgroundTag);

/// α_i before clamping/skipping, and the Gaussian falloff it came from.
struct SplatAlpha {
    double alpha = 0.0;    ///< min(0.99, opacity·falloff), or 0 when skipped
    double falloff = 0.0;  ///< exp(power)
    bool clamped = false;
    bool skipped = true;
};

SplatAlpha splat_alpha(const Splat& s, const Vec2& pixel);

struct TileBins {
    int tiles_x = 0;
    int tiles_y = 0;
    int tile_size = kTileSize;
    std::vector<std::vector<std::uint32_t>> lists;  ///< per tile, depth-ascending, stable

    [[nodiscard]] const std::vector<std::uint32_t>& tile(int tx, int ty) const {
        return lists[static_cast<std::size_t>(ty) * tiles_x + tx];
    }
};

/// Assigns each splat to every tile its extent rectangle overlaps and sorts
/// each tile by ascending depth (ties keep input order).
TileBins bin_and_sort(std::span<const Splat> splats, int width, int height, int tile_size = kTileSize);

struct PixelResult {
    Vec3 rgb = Vec3::Zero();     ///< composited with the background
    double acc_alpha = 0.0;
    double actor_alpha = 0.0;
    double depth = 0.0;          ///< alpha-weighted, normalized; 0 below 1e-6 coverage
    double transmittance = 1.0;  ///< residual Π(1-α_i)
};

/// Front-to-back blending of already depth-ordered splats at one pixel
/// center. Blending stops once transmittance would fall below
/// `stop_transmittance` (0 disables early termination).
PixelResult alpha_blend_pixel(std::span<const Splat> ordered, const Vec2& pixel, const Vec3& background,
                              double stop_transmittance = 0.0);

struct RasterOptions {
    int tile_size = kTileSize;
    double stop_transmittance = 0.0;
};

struct RenderOutput {
    int width = 0;
    int height = 0;
    Image rgb;          ///< 3 channels
    Image depth;        ///< 1 channel, meters
    Image acc_alpha;    ///< 1 channel
    Image actor_alpha;  ///< 1 channel

    RenderOutput() = default;
    RenderOutput(int w, int h)
        : width(w), height(h), rgb(w, h, 3), depth(w, h, 1), acc_alpha(w, h, 1), actor_alpha(w, h, 1) {}
};

/// Per-pixel blending state kept from the forward pass so the backward pass
/// can skip its recomputation sweep.
struct PixelTotals {
    std::vector<double> sums;         ///< 6 per pixel: rgb, coverage, actor coverage, depth numerator
    std::vector<std::uint32_t> ends;  ///< one past the last tile-list entry that contributed
};

struct RasterResult {
    RenderOutput output;
    TileBins bins;
    PixelTotals totals;
};

/// `background` is a W×H×3 image composited with weight (1 - acc_alpha).
RasterResult rasterize_forward(std::span<const Splat> splats, int width, int height, const Image& background,
                               const RasterOptions& options = {});

/// Upstream gradients; an empty Image stands for all-zero.
struct RasterUpstream {
    Image d_rgb;
    Image d_acc_alpha;
    Image d_actor_alpha;
    Image d_depth;
};

struct RasterGrads {
    std::vector<Vec2> d_center;
    std::vector<Mat2> d_conic;  ///< entries treated independently
    std::vector<double> d_opacity;
    std::vector<Vec3> d_color;
    std::vector<double> d_depth;
    Image d_background;

    explicit RasterGrads(std::size_t n = 0, int width = 0, int height = 0)
        : d_center(n, Vec2::Zero()), d_conic(n, Mat2::Zero()), d_opacity(n, 0.0), d_color(n, Vec3::Zero()),
          d_depth(n, 0.0), d_background(width, height, 3) {}
};

/// Recomputes each pixel's blending and propagates upstream gradients to
/// every splat input. The per-splat suffix sums are formed as
/// total − prefix, so no division by transmittance is needed.
/// `forward` (optional) must come from the matching forward call.
RasterGrads rasterize_backward(std::span<const Splat> splats, const TileBins& bins, int width, int height,
                               const Image& background, const RasterUpstream& upstream,
                               const RasterOptions& options = {}, const PixelTotals* forward = nullptr);

}  // namespace compsplat
