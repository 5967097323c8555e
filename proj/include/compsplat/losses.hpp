#pragma once

#include "compsplat/geometry.hpp"
#include "compsplat/rasterizer.hpp"
#include "compsplat/types.hpp"

#include <limits>
#include <span>

namespace compsplat {

struct LossWeights {
    double ssim = 0.2;     ///< λ₁, blends L1 and SSIM
    double depth = 0.01;   ///< λ₂
    double sky = 0.05;     ///< λ₃
    double entropy = 0.1;  ///< λ₄

    void validate() const;
};

/// Optional supervision for one frame. Absent terms are skipped.
struct LossTargets {
    const Image* rgb = nullptr;       ///< required, 3 channels
    const Image* depth = nullptr;     ///< 1 channel, 0 = invalid
    const Image* sky_mask = nullptr;  ///< 1 channel, 1 = sky
    bool actor_entropy = false;       ///< apply the actor-alpha entropy term
};

struct LossTerms {
    double rgb = 0.0;
    double ssim = 0.0;  ///< 1 - SSIM
    double depth = 0.0;
    double sky = 0.0;
    double entropy = 0.0;
    double total = 0.0;
    bool has_depth = false;
    bool has_sky = false;
    bool has_entropy = false;
};

/// dL/d(render channels); empty images where a term was skipped.
struct LossGrads {
    Image d_rgb;
    Image d_depth;
    Image d_acc_alpha;
    Image d_actor_alpha;
};

constexpr double kProbabilityClamp = 1e-6;

/// `render.rgb` is the image the loss sees (after all refinement).
LossTerms loss_total(const RenderOutput& render, const LossTargets& targets, const LossWeights& weights,
                     LossGrads* grads = nullptr);

/// Binary cross entropy between (1 - acc_alpha) and the sky mask.
double sky_bce(const Image& acc_alpha, const Image& sky_mask, Image* d_acc_alpha = nullptr);
/// Mean binary entropy of the actor alpha.
double alpha_entropy(const Image& actor_alpha, Image* d_actor_alpha = nullptr);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

double mse(const Image& a, const Image& b);
/// +inf when the images are identical.
double psnr(const Image& img, const Image& gt);
/// PSNR over pixels where mask (1 channel) is nonzero. NaN for an empty mask.
double psnr_masked(const Image& img, const Image& gt, const Image& mask);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

/// Mean SSIM over all fully-contained windows and channels. The window
/// shrinks to the smaller image side when the image is smaller than it.
/// When `d_img` is given it receives dSSIM/dimg.
double ssim(const Image& img, const Image& gt, Image* d_img = nullptr, const SsimOptions& opt = {});

struct OrientedBox {
    Vec3 center = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    Vec3 size = Vec3::Ones();

    [[nodiscard]] bool contains(const Vec3& p) const;
    [[nodiscard]] Vec3 to_local(const Vec3& p) const;
};

/// Union of the convex hulls of each box's projected corners, evaluated at
/// pixel centers. Corners behind the near plane are ignored.
Image box_mask(const Camera& cam, std::span<const OrientedBox> boxes);

}  // namespace compsplat
