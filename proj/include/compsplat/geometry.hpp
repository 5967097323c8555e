#pragma once

#include "compsplat/types.hpp"

#include <span>

namespace compsplat {

/// SH coefficient count per channel for a given degree.
constexpr int sh_bands(int degree) { return (degree + 1) * (degree + 1); }
/// Total SH coefficient count d = 3·(degree+1)². Layout is band-major:
/// coefficient b of channel ch lives at index 3·b + ch.
constexpr int sh_dim(int degree) { return 3 * sh_bands(degree); }

constexpr double kShC0 = 0.28209479177387814;

/// One Gaussian in parameter space. Scale is stored as log, opacity as logit.
struct Gaussian {
    Vec3 mean = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    VecX sh;
};

/// Structure-of-arrays Gaussian storage; row i of each matrix is Gaussian i.
struct GaussianSet {
    int sh_degree = 1;
    MatX3 means;
    MatX4 rotations;
    MatX3 log_scales;
    VecX opacity_logits;
    RowMatrix sh;

    GaussianSet() = default;
    GaussianSet(std::size_t n, int degree);

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(means.rows()); }
    [[nodiscard]] int sh_dimension() const { return sh_dim(sh_degree); }
    [[nodiscard]] Gaussian at(std::size_t i) const;
    void set(std::size_t i, const Gaussian& g);
    void append(const Gaussian& g);
    /// Keeps rows in `keep` order.
    [[nodiscard]] GaussianSet select(std::span<const std::size_t> keep) const;
    void append(const GaussianSet& other);
    /// Renormalizes every rotation quaternion to unit length.
    void normalize_rotations();
    void snap();
};

Mat3 build_covariance(const Vec4& rotation, const Vec3& scale);

struct CovarianceGrad {
    Vec4 d_rotation = Vec4::Zero();
    Vec3 d_scale = Vec3::Zero();
};

/// Pulls dL/dΣ (full 3×3, entries treated independently) back to the raw
/// quaternion and the linear scale.
CovarianceGrad build_covariance_backward(const Vec4& rotation, const Vec3& scale, const Mat3& d_cov);

/// exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ)); Σ is regularized by 1e-8·I when not invertible.
double evaluate_gaussian(const Vec3& x, const Vec3& mean, const Mat3& cov);
double evaluate_gaussian(const Vec3& x, const Gaussian& g);

/// Pinhole camera, OpenCV axes (x right, y down, z forward).
struct Camera {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    int width = 0, height = 0;
    Mat4 world_from_camera = Mat4::Identity();
    double near_plane = 0.01;

    [[nodiscard]] Mat3 rotation_camera_to_world() const { return world_from_camera.topLeftCorner<3, 3>(); }
    [[nodiscard]] Mat3 rotation_world_to_camera() const { return rotation_camera_to_world().transpose(); }
    [[nodiscard]] Vec3 center() const { return world_from_camera.block<3, 1>(0, 3); }
    [[nodiscard]] Vec3 optical_axis() const { return rotation_camera_to_world().col(2).normalized(); }
    [[nodiscard]] Vec3 to_camera(const Vec3& world) const { return rotation_world_to_camera() * (world - center()); }
    /// Unit world-space ray through the center of pixel (x, y).
    [[nodiscard]] Vec3 pixel_ray(int x, int y) const;
    /// Copy shifted along the camera's own x axis (positive = right).
    [[nodiscard]] Camera shifted_laterally(double meters) const;
    [[nodiscard]] bool valid() const { return fx > 0 && fy > 0 && width > 0 && height > 0; }
};

struct Projected2D {
    Vec2 center = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    double depth = 0.0;
    bool culled = true;
};

constexpr double kCov2dBlur = 0.3;

/// EWA projection: cov2d = J·W·Σ·Wᵀ·Jᵀ + 0.3·I. Culled when z ≤ near.
Projected2D project_gaussian(const Vec3& mean, const Mat3& cov, const Camera& cam);
Projected2D project_gaussian(const Gaussian& g, const Camera& cam);

struct ProjectionGrad {
    Vec3 d_mean = Vec3::Zero();
    Mat3 d_cov = Mat3::Zero();
};

ProjectionGrad project_gaussian_backward(const Vec3& mean, const Mat3& cov, const Camera& cam, const Vec2& d_center,
                                         const Mat2& d_cov2d, double d_depth);

/// Real SH basis values Y_b(dir) for b < (degree+1)², 3DGS sign convention.
void sh_basis(const Vec3& dir, int degree, std::span<double> out);

/// c = max(0.5 + Σ_b Y_b(dir)·h_b, 0) per channel.
Vec3 eval_sh_color(std::span<const double> sh, const Vec3& view_dir, int degree);

/// Accumulates into d_sh; returns dL/d(view_dir).
Vec3 eval_sh_color_backward(std::span<const double> sh, const Vec3& view_dir, int degree, const Vec3& d_color,
                            std::span<double> d_sh);

}  // namespace compsplat
