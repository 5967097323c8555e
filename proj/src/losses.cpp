#include "compsplat/losses.hpp"

#include "compsplat/quaternion.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace compsplat {

void LossWeights::validate() const {
    if (!(ssim >= 0.0 && ssim <= 1.0)) throw InvalidParameter("loss weight ssim must lie in [0, 1]");
    if (!(depth >= 0.0) || !(sky >= 0.0) || !(entropy >= 0.0)) {
        throw InvalidParameter("loss weights must be nonnegative");
    }
}

namespace {

void require_shape(const Image& a, int w, int h, int c, const char* what) {
    if (a.width != w || a.height != h || a.channels != c) {
        throw InvalidParameter(std::string("resolution mismatch: ") + what);
    }
}

double clamp_probability(double p, bool& clamped) {
    const double lo = kProbabilityClamp;
    const double hi = 1.0 - kProbabilityClamp;
    clamped = p < lo || p > hi;
    return std::clamp(p, lo, hi);
}

// Separable "valid" Gaussian filtering for SSIM.
std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const double c = 0.5 * (size - 1);
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[static_cast<std::size_t>(i)] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (double& v : k) v /= sum;
    return k;
}

struct Plane {
    int w = 0;
    int h = 0;
    std::vector<double> v;
    Plane(int width, int height) : w(width), h(height), v(static_cast<std::size_t>(width) * height, 0.0) {}
    double& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
    [[nodiscard]] double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane filter_valid(const Plane& in, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    Plane tmp(in.w - n + 1, in.h);
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < tmp.w; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * in.at(x + i, y);
            tmp.at(x, y) = s;
        }
    }
    Plane out(tmp.w, in.h - n + 1);
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp.at(x, y + i);
            out.at(x, y) = s;
        }
    }
    return out;
}

/// Adjoint of filter_valid.
Plane filter_valid_adjoint(const Plane& d_out, const std::vector<double>& k, int w, int h) {
    const int n = static_cast<int>(k.size());
    Plane tmp(d_out.w, h);
    for (int y = 0; y < d_out.h; ++y) {
        for (int x = 0; x < d_out.w; ++x) {
            for (int i = 0; i < n; ++i) tmp.at(x, y + i) += k[static_cast<std::size_t>(i)] * d_out.at(x, y);
        }
    }
    Plane out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < tmp.w; ++x) {
            for (int i = 0; i < n; ++i) out.at(x + i, y) += k[static_cast<std::size_t>(i)] * tmp.at(x, y);
        }
    }
    return out;
}

Plane channel_plane(const Image& img, int c) {
    Plane p(img.width, img.height);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        p.v[i] = img.data[i * static_cast<std::size_t>(img.channels) + static_cast<std::size_t>(c)];
    }
    return p;
}

}  // namespace

double sky_bce(const Image& acc_alpha, const Image& sky_mask, Image* d_acc_alpha) {
    const std::size_t n = acc_alpha.pixel_count();
    if (d_acc_alpha) *d_acc_alpha = Image(acc_alpha.width, acc_alpha.height, 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        bool clamped = false;
        const double p = clamp_probability(1.0 - acc_alpha.data[i], clamped);
        const double m = sky_mask.data[i];
        sum -= m * std::log(p) + (1.0 - m) * std::log(1.0 - p);
        if (d_acc_alpha && !clamped) {
            const double d_p = -(m / p - (1.0 - m) / (1.0 - p));
            d_acc_alpha->data[i] = -d_p / static_cast<double>(n);
        }
    }
    return sum / static_cast<double>(n);
}

double alpha_entropy(const Image& actor_alpha, Image* d_actor_alpha) {
    const std::size_t n = actor_alpha.pixel_count();
    if (d_actor_alpha) *d_actor_alpha = Image(actor_alpha.width, actor_alpha.height, 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        bool clamped = false;
        const double a = clamp_probability(actor_alpha.data[i], clamped);
        sum -= a * std::log(a) + (1.0 - a) * std::log(1.0 - a);
        if (d_actor_alpha && !clamped) {
            d_actor_alpha->data[i] = std::log((1.0 - a) / a) / static_cast<double>(n);
        }
    }
    return sum / static_cast<double>(n);
}

LossTerms loss_total(const RenderOutput& render, const LossTargets& targets, const LossWeights& weights,
                     LossGrads* grads) {
    weights.validate();
    if (!targets.rgb) throw InvalidParameter("loss_total requires a ground-truth image");
    const int w = render.width;
    const int h = render.height;
    require_shape(render.rgb, w, h, 3, "rendered rgb");
    require_shape(*targets.rgb, w, h, 3, "ground-truth rgb");

    LossTerms terms;
    const std::size_t count = render.rgb.data.size();
    if (grads) *grads = LossGrads{Image(w, h, 3), Image(), Image(), Image()};

    const double l1_weight = 1.0 - weights.ssim;
    double l1 = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double diff = render.rgb.data[i] - targets.rgb->data[i];
        l1 += std::abs(diff);
        if (grads) {
            const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            grads->d_rgb.data[i] = l1_weight * sign / static_cast<double>(count);
        }
    }
    terms.rgb = l1 / static_cast<double>(count);

    Image d_ssim;
    terms.ssim = 1.0 - ssim(render.rgb, *targets.rgb, grads ? &d_ssim : nullptr);
    if (grads) {
        for (std::size_t i = 0; i < count; ++i) grads->d_rgb.data[i] -= weights.ssim * d_ssim.data[i];
    }
    terms.total = l1_weight * terms.rgb + weights.ssim * terms.ssim;

    if (targets.depth) {
        require_shape(*targets.depth, w, h, 1, "ground-truth depth");
        require_shape(render.depth, w, h, 1, "rendered depth");
        std::size_t valid = 0;
        double sum = 0.0;
        for (std::size_t i = 0; i < render.depth.data.size(); ++i) {
            if (targets.depth->data[i] > 0.0 && render.acc_alpha.data[i] >= kMinAccumulation) ++valid;
        }
        if (valid > 0) {
            terms.has_depth = true;
            if (grads) grads->d_depth = Image(w, h, 1);
            for (std::size_t i = 0; i < render.depth.data.size(); ++i) {
                if (!(targets.depth->data[i] > 0.0 && render.acc_alpha.data[i] >= kMinAccumulation)) continue;
                const double diff = render.depth.data[i] - targets.depth->data[i];
                sum += std::abs(diff);
                if (grads) {
                    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                    grads->d_depth.data[i] = weights.depth * sign / static_cast<double>(valid);
                }
            }
            terms.depth = sum / static_cast<double>(valid);
            terms.total += weights.depth * terms.depth;
        }
    }

    if (targets.sky_mask) {
        require_shape(*targets.sky_mask, w, h, 1, "sky mask");
        terms.has_sky = true;
        Image d_acc;
        terms.sky = sky_bce(render.acc_alpha, *targets.sky_mask, grads ? &d_acc : nullptr);
        terms.total += weights.sky * terms.sky;
        if (grads) {
            for (double& v : d_acc.data) v *= weights.sky;
            grads->d_acc_alpha = std::move(d_acc);
        }
    }

    if (targets.actor_entropy) {
        require_shape(render.actor_alpha, w, h, 1, "actor alpha");
        terms.has_entropy = true;
        Image d_actor;
        terms.entropy = alpha_entropy(render.actor_alpha, grads ? &d_actor : nullptr);
        terms.total += weights.entropy * terms.entropy;
        if (grads) {
            for (double& v : d_actor.data) v *= weights.entropy;
            grads->d_actor_alpha = std::move(d_actor);
        }
    }
    return terms;
}

double mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw InvalidParameter("mse: image shapes differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.data.size());
}

double psnr(const Image& img, const Image& gt) {
    const double m = mse(img, gt);
    if (m == 0.0) return kPsnrInfinite;
    return 10.0 * std::log10(1.0 / m);
}

double psnr_masked(const Image& img, const Image& gt, const Image& mask) {
    if (!img.same_shape(gt)) throw InvalidParameter("psnr_masked: image shapes differ");
    if (mask.width != img.width || mask.height != img.height || mask.channels != 1) {
        throw InvalidParameter("psnr_masked: mask shape differs from image");
    }
    double sum = 0.0;
    std::size_t count = 0;
    const auto ch = static_cast<std::size_t>(img.channels);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        if (mask.data[p] == 0.0) continue;
        for (std::size_t c = 0; c < ch; ++c) {
            const double d = img.data[p * ch + c] - gt.data[p * ch + c];
            sum += d * d;
        }
        count += ch;
    }
    if (count == 0) return std::numeric_limits<double>::quiet_NaN();
    if (sum == 0.0) return kPsnrInfinite;
    return 10.0 * std::log10(static_cast<double>(count) / sum);
}

double ssim(const Image& img, const Image& gt, Image* d_img, const SsimOptions& opt) {
    if (!img.same_shape(gt)) throw InvalidParameter("ssim: image shapes differ");
    const int w = img.width;
    const int h = img.height;
    const int ws = std::min({opt.window, w, h});
    if (ws < 1) throw InvalidParameter("ssim: empty image");
    const auto k = gaussian_kernel(ws, opt.sigma);
    const int ow = w - ws + 1;
    const int oh = h - ws + 1;
    const double norm = 1.0 / (static_cast<double>(ow) * oh * img.channels);
    if (d_img) *d_img = Image(w, h, img.channels);

    double total = 0.0;
    for (int c = 0; c < img.channels; ++c) {
        const Plane x = channel_plane(img, c);
        const Plane y = channel_plane(gt, c);
        Plane xx(w, h);
        Plane yy(w, h);
        Plane xy(w, h);
        for (std::size_t i = 0; i < x.v.size(); ++i) {
            xx.v[i] = x.v[i] * x.v[i];
            yy.v[i] = y.v[i] * y.v[i];
            xy.v[i] = x.v[i] * y.v[i];
        }
        const Plane mx = filter_valid(x, k);
        const Plane my = filter_valid(y, k);
        const Plane exx = filter_valid(xx, k);
        const Plane eyy = filter_valid(yy, k);
        const Plane exy = filter_valid(xy, k);

        Plane d_mx(ow, oh);
        Plane d_exx(ow, oh);
        Plane d_exy(ow, oh);
        for (std::size_t i = 0; i < mx.v.size(); ++i) {
            const double ux = mx.v[i];
            const double uy = my.v[i];
            const double vx = exx.v[i] - ux * ux;
            const double vy = eyy.v[i] - uy * uy;
            const double cxy = exy.v[i] - ux * uy;
            const double a1 = 2.0 * ux * uy + opt.c1;
            const double a2 = 2.0 * cxy + opt.c2;
            const double b1 = ux * ux + uy * uy + opt.c1;
            const double b2 = vx + vy + opt.c2;
            const double s = a1 * a2 / (b1 * b2);
            total += s;
            if (d_img) {
                d_mx.v[i] = norm * s * (2.0 * uy / a1 - 2.0 * uy / a2 - 2.0 * ux / b1 + 2.0 * ux / b2);
                d_exx.v[i] = norm * s * (-1.0 / b2);
                d_exy.v[i] = norm * s * (2.0 / a2);
            }
        }
        if (d_img) {
            const Plane g_mx = filter_valid_adjoint(d_mx, k, w, h);
            const Plane g_exx = filter_valid_adjoint(d_exx, k, w, h);
            const Plane g_exy = filter_valid_adjoint(d_exy, k, w, h);
            const auto ch = static_cast<std::size_t>(img.channels);
            for (std::size_t i = 0; i < x.v.size(); ++i) {
                d_img->data[i * ch + static_cast<std::size_t>(c)] =
                    g_mx.v[i] + 2.0 * x.v[i] * g_exx.v[i] + y.v[i] * g_exy.v[i];
            }
        }
    }
    return total * norm;
}

bool OrientedBox::contains(const Vec3& p) const {
    const Vec3 local = to_local(p);
    return (local.cwiseAbs().array() <= 0.5 * size.array()).all();
}

Vec3 OrientedBox::to_local(const Vec3& p) const {
    return quat::to_rotation(rotation).transpose() * (p - center);
}

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

/// Andrew's monotone chain; counter-clockwise, no collinear points.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(),
              [](const Vec2& a, const Vec2& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
    if (pts.size() < 3) return pts;
    std::vector<Vec2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
        hull[k++] = p;
    }
    const std::size_t lower = k + 1;
    for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0.0) --k;
        hull[k++] = *it;
    }
    hull.resize(k - 1);
    return hull;
}

}  // namespace

Image box_mask(const Camera& cam, std::span<const OrientedBox> boxes) {
    Image mask(cam.width, cam.height, 1);
    for (const auto& box : boxes) {
        const Mat3 r = quat::to_rotation(box.rotation);
        std::vector<Vec2> pts;
        for (int corner = 0; corner < 8; ++corner) {
            const Vec3 local(((corner & 1) ? 0.5 : -0.5) * box.size.x(), ((corner & 2) ? 0.5 : -0.5) * box.size.y(),
                             ((corner & 4) ? 0.5 : -0.5) * box.size.z());
            const Vec3 pc = cam.to_camera(box.center + r * local);
            if (pc.z() <= cam.near_plane) continue;
            pts.emplace_back(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy);
        }
        const auto hull = convex_hull(pts);
        if (hull.size() < 3) continue;
        double xmin = hull[0].x(), xmax = xmin, ymin = hull[0].y(), ymax = ymin;
        for (const auto& p : hull) {
            xmin = std::min(xmin, p.x());
            xmax = std::max(xmax, p.x());
            ymin = std::min(ymin, p.y());
            ymax = std::max(ymax, p.y());
        }
        const int x0 = std::max(0, static_cast<int>(std::floor(xmin)));
        const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(xmax)));
        const int y0 = std::max(0, static_cast<int>(std::floor(ymin)));
        const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(ymax)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const Vec2 p(x + 0.5, y + 0.5);
                bool inside = true;
                for (std::size_t i = 0; i < hull.size() && inside; ++i) {
                    inside = cross(hull[i], hull[(i + 1) % hull.size()], p) >= 0.0;
                }
                if (inside) mask.at(x, y) = 1.0;
            }
        }
    }
    return mask;
}

}  // namespace compsplat
