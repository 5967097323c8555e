#include "compsplat/geometry.hpp"

#include "compsplat/quaternion.hpp"

#include <array>
#include <cmath>

namespace compsplat {

GaussianSet::GaussianSet(std::size_t n, int degree)
    : sh_degree(degree),
      means(MatX3::Zero(static_cast<Eigen::Index>(n), 3)),
      rotations(MatX4::Zero(static_cast<Eigen::Index>(n), 4)),
      log_scales(MatX3::Zero(static_cast<Eigen::Index>(n), 3)),
      opacity_logits(VecX::Zero(static_cast<Eigen::Index>(n))),
      sh(RowMatrix::Zero(static_cast<Eigen::Index>(n), sh_dim(degree))) {
    rotations.col(0).setOnes();
}

Gaussian GaussianSet::at(std::size_t i) const {
    const auto r = static_cast<Eigen::Index>(i);
    Gaussian g;
    g.mean = means.row(r).transpose();
    g.rotation = rotations.row(r).transpose();
    g.log_scale = log_scales.row(r).transpose();
    g.opacity_logit = opacity_logits[r];
    g.sh = sh.row(r).transpose();
    return g;
}

void GaussianSet::set(std::size_t i, const Gaussian& g) {
    if (g.sh.size() != sh_dimension()) throw InvalidParameter("Gaussian SH dimension does not match the set");
    const auto r = static_cast<Eigen::Index>(i);
    means.row(r) = g.mean.transpose();
    rotations.row(r) = g.rotation.transpose();
    log_scales.row(r) = g.log_scale.transpose();
    opacity_logits[r] = g.opacity_logit;
    sh.row(r) = g.sh.transpose();
}

void GaussianSet::append(const Gaussian& g) {
    const auto n = static_cast<Eigen::Index>(size());
    means.conservativeResize(n + 1, Eigen::NoChange);
    rotations.conservativeResize(n + 1, Eigen::NoChange);
    log_scales.conservativeResize(n + 1, Eigen::NoChange);
    opacity_logits.conservativeResize(n + 1);
    sh.conservativeResize(n + 1, sh_dimension());
    set(static_cast<std::size_t>(n), g);
}

GaussianSet GaussianSet::select(std::span<const std::size_t> keep) const {
    GaussianSet out(keep.size(), sh_degree);
    for (std::size_t k = 0; k < keep.size(); ++k) {
        const auto src = static_cast<Eigen::Index>(keep[k]);
        const auto dst = static_cast<Eigen::Index>(k);
        out.means.row(dst) = means.row(src);
        out.rotations.row(dst) = rotations.row(src);
        out.log_scales.row(dst) = log_scales.row(src);
        out.opacity_logits[dst] = opacity_logits[src];
        out.sh.row(dst) = sh.row(src);
    }
    return out;
}

void GaussianSet::append(const GaussianSet& other) {
    if (other.sh_degree != sh_degree) throw InvalidParameter("cannot append Gaussian sets of different SH degree");
    const auto n = static_cast<Eigen::Index>(size());
    const auto m = static_cast<Eigen::Index>(other.size());
    means.conservativeResize(n + m, Eigen::NoChange);
    rotations.conservativeResize(n + m, Eigen::NoChange);
    log_scales.conservativeResize(n + m, Eigen::NoChange);
    opacity_logits.conservativeResize(n + m);
    sh.conservativeResize(n + m, sh_dimension());
    means.bottomRows(m) = other.means;
    rotations.bottomRows(m) = other.rotations;
    log_scales.bottomRows(m) = other.log_scales;
    opacity_logits.tail(m) = other.opacity_logits;
    sh.bottomRows(m) = other.sh;
}

void GaussianSet::normalize_rotations() {
    for (Eigen::Index i = 0; i < rotations.rows(); ++i) {
        const double n = rotations.row(i).norm();
        if (n > 0.0) rotations.row(i) /= n;
    }
}

void GaussianSet::snap() {
    snap_to_storage(means);
    snap_to_storage(rotations);
    snap_to_storage(log_scales);
    snap_to_storage(opacity_logits);
    snap_to_storage(sh);
}

Mat3 build_covariance(const Vec4& rotation, const Vec3& scale) {
    if (!rotation.allFinite() || !scale.allFinite()) throw InvalidParameter("build_covariance: non-finite input");
    const Mat3 m = quat::to_rotation(rotation) * scale.asDiagonal();
    return m * m.transpose();
}

CovarianceGrad build_covariance_backward(const Vec4& rotation, const Vec3& scale, const Mat3& d_cov) {
    const Mat3 r = quat::to_rotation(rotation);
    const Mat3 m = r * scale.asDiagonal();
    // Σ = M Mᵀ  =>  dM = (G + Gᵀ) M
    const Mat3 d_m = (d_cov + d_cov.transpose()) * m;
    CovarianceGrad g;
    g.d_rotation = quat::to_rotation_backward(rotation, d_m * scale.asDiagonal());
    g.d_scale = (r.transpose() * d_m).diagonal();
    return g;
}

double evaluate_gaussian(const Vec3& x, const Vec3& mean, const Mat3& cov) {
    Mat3 c = cov;
    if (!(std::abs(c.determinant()) > 1e-300)) c += 1e-8 * Mat3::Identity();
    const double det = c.determinant();
    if (!std::isfinite(det) || std::abs(det) <= 1e-300) throw NumericError("evaluate_gaussian: singular covariance");
    const Vec3 d = x - mean;
    return std::exp(-0.5 * d.dot(c.inverse() * d));
}

double evaluate_gaussian(const Vec3& x, const Gaussian& g) {
    return evaluate_gaussian(x, g.mean, build_covariance(g.rotation, g.log_scale.array().exp().matrix()));
}

Vec3 Camera::pixel_ray(int x, int y) const {
    const Vec3 d_cam((x + 0.5 - cx) / fx, (y + 0.5 - cy) / fy, 1.0);
    return (rotation_camera_to_world() * d_cam).normalized();
}

Camera Camera::shifted_laterally(double meters) const {
    Camera c = *this;
    if (meters != 0.0) c.world_from_camera.block<3, 1>(0, 3) += meters * rotation_camera_to_world().col(0);
    return c;
}

Projected2D project_gaussian(const Vec3& mean, const Mat3& cov, const Camera& cam) {
    Projected2D out;
    const Mat3 w = cam.rotation_world_to_camera();
    const Vec3 p = w * (mean - cam.center());
    out.depth = p.z();
    if (!(p.z() > cam.near_plane)) {
        out.culled = true;
        return out;
    }
    const double z = p.z();
    const double iz = 1.0 / z;
    out.center = Vec2(cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy);
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
    const Eigen::Matrix<double, 2, 3> t = j * w;
    out.cov2d = t * cov * t.transpose() + kCov2dBlur * Mat2::Identity();
    out.culled = false;
    return out;
}

Projected2D project_gaussian(const Gaussian& g, const Camera& cam) {
    return project_gaussian(g.mean, build_covariance(g.rotation, g.log_scale.array().exp().matrix()), cam);
}

ProjectionGrad project_gaussian_backward(const Vec3& mean, const Mat3& cov, const Camera& cam, const Vec2& d_center,
                                         const Mat2& d_cov2d, double d_depth) {
    ProjectionGrad g;
    const Mat3 w = cam.rotation_world_to_camera();
    const Vec3 p = w * (mean - cam.center());
    if (!(p.z() > cam.near_plane)) return g;
    const double x = p.x(), y = p.y(), z = p.z();
    const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * iz, 0.0, -cam.fx * x * iz2, 0.0, cam.fy * iz, -cam.fy * y * iz2;
    const Eigen::Matrix<double, 2, 3> t = j * w;

    g.d_cov = t.transpose() * d_cov2d * t;
    const Eigen::Matrix<double, 2, 3> d_t = d_cov2d * t * cov.transpose() + d_cov2d.transpose() * t * cov;
    const Eigen::Matrix<double, 2, 3> d_j = d_t * w.transpose();

    Vec3 d_p = Vec3::Zero();
    d_p.z() += -cam.fx * iz2 * d_j(0, 0);
    d_p.x() += -cam.fx * iz2 * d_j(0, 2);
    d_p.z() += 2.0 * cam.fx * x * iz3 * d_j(0, 2);
    d_p.z() += -cam.fy * iz2 * d_j(1, 1);
    d_p.y() += -cam.fy * iz2 * d_j(1, 2);
    d_p.z() += 2.0 * cam.fy * y * iz3 * d_j(1, 2);

    d_p.x() += cam.fx * iz * d_center.x();
    d_p.z() += -cam.fx * x * iz2 * d_center.x();
    d_p.y() += cam.fy * iz * d_center.y();
    d_p.z() += -cam.fy * y * iz2 * d_center.y();
    d_p.z() += d_depth;

    g.d_mean = w.transpose() * d_p;
    return g;
}

namespace {

constexpr double kShC1 = 0.4886025119029199;
constexpr std::array<double, 5> kShC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                         -1.0925484305920792, 0.5462742152960396};
constexpr std::array<double, 7> kShC3 = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                                         0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                         -0.5900435899266435};

/// Basis values and, when `jac` is non-null, their gradients w.r.t. dir
/// (row b = ∂Y_b/∂dir).
void sh_basis_impl(const Vec3& dir, int degree, double* y_out, Eigen::Matrix<double, 16, 3>* jac) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    const double xx = x * x, yy = y * y, zz = z * z;
    y_out[0] = kShC0;
    if (jac) jac->setZero();
    if (degree < 1) return;
    y_out[1] = -kShC1 * y;
    y_out[2] = kShC1 * z;
    y_out[3] = -kShC1 * x;
    if (jac) {
        jac->row(1) << 0.0, -kShC1, 0.0;
        jac->row(2) << 0.0, 0.0, kShC1;
        jac->row(3) << -kShC1, 0.0, 0.0;
    }
    if (degree < 2) return;
    y_out[4] = kShC2[0] * x * y;
    y_out[5] = kShC2[1] * y * z;
    y_out[6] = kShC2[2] * (2.0 * zz - xx - yy);
    y_out[7] = kShC2[3] * x * z;
    y_out[8] = kShC2[4] * (xx - yy);
    if (jac) {
        jac->row(4) << kShC2[0] * y, kShC2[0] * x, 0.0;
        jac->row(5) << 0.0, kShC2[1] * z, kShC2[1] * y;
        jac->row(6) << -2.0 * kShC2[2] * x, -2.0 * kShC2[2] * y, 4.0 * kShC2[2] * z;
        jac->row(7) << kShC2[3] * z, 0.0, kShC2[3] * x;
        jac->row(8) << 2.0 * kShC2[4] * x, -2.0 * kShC2[4] * y, 0.0;
    }
    if (degree < 3) return;
    y_out[9] = kShC3[0] * y * (3.0 * xx - yy);
    y_out[10] = kShC3[1] * x * y * z;
    y_out[11] = kShC3[2] * y * (4.0 * zz - xx - yy);
    y_out[12] = kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    y_out[13] = kShC3[4] * x * (4.0 * zz - xx - yy);
    y_out[14] = kShC3[5] * z * (xx - yy);
    y_out[15] = kShC3[6] * x * (xx - 3.0 * yy);
    if (jac) {
        jac->row(9) << 6.0 * kShC3[0] * x * y, kShC3[0] * (3.0 * xx - 3.0 * yy), 0.0;
        jac->row(10) << kShC3[1] * y * z, kShC3[1] * x * z, kShC3[1] * x * y;
        jac->row(11) << -2.0 * kShC3[2] * x * y, kShC3[2] * (4.0 * zz - xx - 3.0 * yy), 8.0 * kShC3[2] * y * z;
        jac->row(12) << -6.0 * kShC3[3] * x * z, -6.0 * kShC3[3] * y * z, kShC3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy);
        jac->row(13) << kShC3[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * kShC3[4] * x * y, 8.0 * kShC3[4] * x * z;
        jac->row(14) << 2.0 * kShC3[5] * x * z, -2.0 * kShC3[5] * y * z, kShC3[5] * (xx - yy);
        jac->row(15) << kShC3[6] * (3.0 * xx - 3.0 * yy), -6.0 * kShC3[6] * x * y, 0.0;
    }
}

void check_degree(int degree) {
    if (degree < 0 || degree > 3) throw InvalidParameter("SH degree must be in [0, 3]");
}

}  // namespace

void sh_basis(const Vec3& dir, int degree, std::span<double> out) {
    check_degree(degree);
    if (out.size() < static_cast<std::size_t>(sh_bands(degree))) throw InvalidParameter("sh_basis: output too small");
    std::array<double, 16> tmp{};
    sh_basis_impl(dir, degree, tmp.data(), nullptr);
    for (int b = 0; b < sh_bands(degree); ++b) out[static_cast<std::size_t>(b)] = tmp[static_cast<std::size_t>(b)];
}

Vec3 eval_sh_color(std::span<const double> sh, const Vec3& view_dir, int degree) {
    check_degree(degree);
    std::array<double, 16> basis{};
    sh_basis_impl(view_dir, degree, basis.data(), nullptr);
    Vec3 c = Vec3::Constant(0.5);
    for (int b = 0; b < sh_bands(degree); ++b) {
        for (int ch = 0; ch < 3; ++ch) c[ch] += basis[static_cast<std::size_t>(b)] * sh[static_cast<std::size_t>(3 * b + ch)];
    }
    return c.cwiseMax(0.0);
}

Vec3 eval_sh_color_backward(std::span<const double> sh, const Vec3& view_dir, int degree, const Vec3& d_color,
                            std::span<double> d_sh) {
    check_degree(degree);
    std::array<double, 16> basis{};
    Eigen::Matrix<double, 16, 3> jac;
    sh_basis_impl(view_dir, degree, basis.data(), &jac);
    const int bands = sh_bands(degree);
    Vec3 raw = Vec3::Constant(0.5);
    for (int b = 0; b < bands; ++b) {
        for (int ch = 0; ch < 3; ++ch) raw[ch] += basis[static_cast<std::size_t>(b)] * sh[static_cast<std::size_t>(3 * b + ch)];
    }
    Vec3 g = d_color;
    for (int ch = 0; ch < 3; ++ch) {
        if (raw[ch] < 0.0) g[ch] = 0.0;
    }
    Vec3 d_dir = Vec3::Zero();
    for (int b = 0; b < bands; ++b) {
        double s = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
            const auto k = static_cast<std::size_t>(3 * b + ch);
            d_sh[k] += basis[static_cast<std::size_t>(b)] * g[ch];
            s += sh[k] * g[ch];
        }
        d_dir += s * jac.row(b).transpose();
    }
    return d_dir;
}

}  // namespace compsplat
