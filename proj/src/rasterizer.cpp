#include "compsplat/rasterizer.hpp"

#include "compsplat/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace compsplat {

double splat_extent(const Mat2& cov2d, double opacity) {
    const double level = 255.0 * opacity;
    if (!(level > 1.0)) return 0.0;
    const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
    const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(1, 0);
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    return std::sqrt(2.0 * std::log(level) * lambda_max) + 1e-6;
}

Splat make_splat(const Vec2& center, const Mat2& cov2d, double opacity, const Vec3& color, double depth, int actor) {
    Splat s;
    s.center = center;
    s.conic = cov2d.inverse();
    s.opacity = opacity;
    s.color = color;
    s.depth = depth;
    s.radius = splat_extent(cov2d, opacity);
    s.actor = actor;
    // The margin keeps the shortcut strictly conservative under rounding.
    if (opacity > 0.0) s.min_power = std::log(kAlphaSkip / opacity) - 1e-9;
    return s;
}

SplatAlpha splat_alpha(const Splat& s, const Vec2& pixel) {
    SplatAlpha out;
    const Vec2 d = pixel - s.center;
    const double power = -0.5 * d.dot(s.conic * d);
    if (power > 0.0 || power < s.min_power) return out;
    out.falloff = std::exp(power);
    const double a = s.opacity * out.falloff;
    if (a < kAlphaSkip) return out;
    out.skipped = false;
    if (a > kAlphaClamp) {
        out.alpha = kAlphaClamp;
        out.clamped = true;
    } else {
        out.alpha = a;
    }
    return out;
}

TileBins bin_and_sort(std::span<const Splat> splats, int width, int height, int tile_size) {
    TileBins bins;
    bins.tile_size = tile_size;
    bins.tiles_x = (width + tile_size - 1) / tile_size;
    bins.tiles_y = (height + tile_size - 1) / tile_size;
    bins.lists.assign(static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y, {});
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const Splat& s = splats[i];
        const double r = s.radius;
        if (!(r > 0.0) || !s.center.allFinite()) continue;
        if (s.center.x() + r < 0.0 || s.center.y() + r < 0.0 || s.center.x() - r > width ||
            s.center.y() - r > height)
            continue;
        const int x0 = std::max(0, static_cast<int>(std::floor((s.center.x() - r) / tile_size)));
        const int x1 = std::min(bins.tiles_x - 1, static_cast<int>(std::floor((s.center.x() + r) / tile_size)));
        const int y0 = std::max(0, static_cast<int>(std::floor((s.center.y() - r) / tile_size)));
        const int y1 = std::min(bins.tiles_y - 1, static_cast<int>(std::floor((s.center.y() + r) / tile_size)));
        for (int ty = y0; ty <= y1; ++ty) {
            for (int tx = x0; tx <= x1; ++tx) {
                bins.lists[static_cast<std::size_t>(ty) * bins.tiles_x + tx].push_back(static_cast<std::uint32_t>(i));
            }
        }
    }
    for (auto& list : bins.lists) {
        std::stable_sort(list.begin(), list.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return splats[a].depth < splats[b].depth; });
    }
    return bins;
}

namespace {

/// Per-splat blended quantities: rgb, coverage, actor coverage, depth.
using Value6 = Eigen::Matrix<double, 6, 1>;

Value6 splat_value(const Splat& s) {
    Value6 v;
    v << s.color, 1.0, (s.actor >= 0 ? 1.0 : 0.0), s.depth;
    return v;
}

struct Totals {
    Value6 sum = Value6::Zero();
    std::size_t end = 0;
};

template <typename Fetch>
Totals accumulate(std::size_t count, Fetch&& fetch, const Vec2& pixel, double stop_t) {
    Totals t;
    double trans = 1.0;
    for (std::size_t k = 0; k < count; ++k) {
        const Splat& s = fetch(k);
        const SplatAlpha a = splat_alpha(s, pixel);
        if (a.skipped) continue;
        const double next = trans * (1.0 - a.alpha);
        if (stop_t > 0.0 && next < stop_t) break;
        t.sum += splat_value(s) * (a.alpha * trans);
        t.end = k + 1;
        trans = next;
    }
    return t;
}

PixelResult finish_pixel(const Totals& t, const Vec3& background) {
    PixelResult r;
    r.acc_alpha = t.sum[3];
    r.actor_alpha = t.sum[4];
    r.transmittance = 1.0 - r.acc_alpha;
    r.rgb = t.sum.head<3>() + (1.0 - r.acc_alpha) * background;
    r.depth = r.acc_alpha >= kMinAccumulation ? t.sum[5] / r.acc_alpha : 0.0;
    return r;
}

double pixel_value(const Image& img, int x, int y, int c = 0) { return img.data.empty() ? 0.0 : img.at(x, y, c); }

}  // namespace

PixelResult alpha_blend_pixel(std::span<const Splat> ordered, const Vec2& pixel, const Vec3& background,
                              double stop_transmittance) {
    const Totals t = accumulate(
        ordered.size(), [&](std::size_t k) -> const Splat& { return ordered[k]; }, pixel, stop_transmittance);
    return finish_pixel(t, background);
}

RasterResult rasterize_forward(std::span<const Splat> splats, int width, int height, const Image& background,
                               const RasterOptions& options) {
    RasterResult result;
    result.output = RenderOutput(width, height);
    result.bins = bin_and_sort(splats, width, height, options.tile_size);
    const TileBins& bins = result.bins;
    RenderOutput& out = result.output;
    PixelTotals& totals = result.totals;
    totals.sums.assign(static_cast<std::size_t>(width) * height * 6, 0.0);
    totals.ends.assign(static_cast<std::size_t>(width) * height, 0);
    const std::size_t tiles = bins.lists.size();
    parallel_for(tiles, [&](std::size_t begin, std::size_t end, int) {
        for (std::size_t t = begin; t < end; ++t) {
            const int tx = static_cast<int>(t % static_cast<std::size_t>(bins.tiles_x));
            const int ty = static_cast<int>(t / static_cast<std::size_t>(bins.tiles_x));
            const auto& list = bins.lists[t];
            const int xe = std::min(width, (tx + 1) * bins.tile_size);
            const int ye = std::min(height, (ty + 1) * bins.tile_size);
            for (int y = ty * bins.tile_size; y < ye; ++y) {
                for (int x = tx * bins.tile_size; x < xe; ++x) {
                    const Vec2 p(x + 0.5, y + 0.5);
                    const Totals tot = accumulate(
                        list.size(), [&](std::size_t k) -> const Splat& { return splats[list[k]]; }, p,
                        options.stop_transmittance);
                    const Vec3 bg(pixel_value(background, x, y, 0), pixel_value(background, x, y, 1),
                                  pixel_value(background, x, y, 2));
                    const PixelResult r = finish_pixel(tot, bg);
                    const std::size_t pix = static_cast<std::size_t>(y) * width + x;
                    for (int c = 0; c < 6; ++c) totals.sums[6 * pix + c] = tot.sum[c];
                    totals.ends[pix] = static_cast<std::uint32_t>(tot.end);
                    for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = r.rgb[c];
                    out.acc_alpha.at(x, y) = r.acc_alpha;
                    out.actor_alpha.at(x, y) = r.actor_alpha;
                    out.depth.at(x, y) = r.depth;
                }
            }
        }
    });
    return result;
}

RasterGrads rasterize_backward(std::span<const Splat> splats, const TileBins& bins, int width, int height,
                               const Image& background, const RasterUpstream& up, const RasterOptions& options,
                               const PixelTotals* forward) {
    const std::size_t pixels = static_cast<std::size_t>(width) * height;
    if (forward && (forward->sums.size() != 6 * pixels || forward->ends.size() != pixels)) {
        throw InvalidParameter("rasterize_backward: forward totals do not match the image size");
    }
    const std::size_t n = splats.size();
    const std::size_t tiles = bins.lists.size();
    const int workers = std::max(1, std::min(num_threads(), static_cast<int>(std::max<std::size_t>(tiles, 1))));
    std::vector<RasterGrads> partial;
    partial.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) partial.emplace_back(n, 0, 0);
    Image d_background(width, height, 3);

    parallel_for(tiles, [&](std::size_t begin, std::size_t end, int worker) {
        RasterGrads& g = partial[static_cast<std::size_t>(worker)];
        for (std::size_t t = begin; t < end; ++t) {
            const int tx = static_cast<int>(t % static_cast<std::size_t>(bins.tiles_x));
            const int ty = static_cast<int>(t / static_cast<std::size_t>(bins.tiles_x));
            const auto& list = bins.lists[t];
            const int xe = std::min(width, (tx + 1) * bins.tile_size);
            const int ye = std::min(height, (ty + 1) * bins.tile_size);
            for (int y = ty * bins.tile_size; y < ye; ++y) {
                for (int x = tx * bins.tile_size; x < xe; ++x) {
                    const Vec2 p(x + 0.5, y + 0.5);
                    auto fetch = [&](std::size_t k) -> const Splat& { return splats[list[k]]; };
                    Totals tot;
                    if (forward) {
                        const std::size_t pix = static_cast<std::size_t>(y) * width + x;
                        for (int c = 0; c < 6; ++c) tot.sum[c] = forward->sums[6 * pix + c];
                        tot.end = forward->ends[pix];
                    } else {
                        tot = accumulate(list.size(), fetch, p, options.stop_transmittance);
                    }
                    const double acc = tot.sum[3];
                    const Vec3 bg(pixel_value(background, x, y, 0), pixel_value(background, x, y, 1),
                                  pixel_value(background, x, y, 2));
                    const Vec3 g_rgb(pixel_value(up.d_rgb, x, y, 0), pixel_value(up.d_rgb, x, y, 1),
                                     pixel_value(up.d_rgb, x, y, 2));
                    double g_acc = pixel_value(up.d_acc_alpha, x, y) - g_rgb.dot(bg);
                    double g_num = 0.0;
                    const double g_depth = pixel_value(up.d_depth, x, y);
                    if (acc >= kMinAccumulation && g_depth != 0.0) {
                        g_num = g_depth / acc;
                        g_acc -= g_depth * tot.sum[5] / (acc * acc);
                    }
                    for (int c = 0; c < 3; ++c) d_background.at(x, y, c) += g_rgb[c] * (1.0 - acc);

                    Value6 gv;
                    gv << g_rgb, g_acc, pixel_value(up.d_actor_alpha, x, y), g_num;
                    if (gv.isZero(0.0)) continue;

                    Value6 prefix = Value6::Zero();
                    double trans = 1.0;
                    for (std::size_t k = 0; k < tot.end; ++k) {
                        const std::uint32_t idx = list[k];
                        const Splat& s = splats[idx];
                        const SplatAlpha a = splat_alpha(s, p);
                        if (a.skipped) continue;
                        const double next = trans * (1.0 - a.alpha);
                        if (options.stop_transmittance > 0.0 && next < options.stop_transmittance) break;
                        const double w = a.alpha * trans;
                        const Value6 v = splat_value(s);
                        prefix += v * w;
                        const Value6 suffix = tot.sum - prefix;
                        const double d_alpha = gv.dot(v * trans - suffix / (1.0 - a.alpha));
                        g.d_color[idx] += g_rgb * w;
                        g.d_depth[idx] += g_num * w;
                        if (!a.clamped) {
                            g.d_opacity[idx] += d_alpha * a.falloff;
                            const double d_power = d_alpha * s.opacity * a.falloff;
                            const Vec2 d = p - s.center;
                            g.d_conic[idx] += (-0.5 * d_power) * (d * d.transpose());
                            g.d_center[idx] += (0.5 * d_power) * ((s.conic + s.conic.transpose()) * d);
                        }
                        trans = next;
                    }
                }
            }
        }
    });

    RasterGrads out = std::move(partial.front());
    for (std::size_t w = 1; w < partial.size(); ++w) {
        for (std::size_t i = 0; i < n; ++i) {
            out.d_center[i] += partial[w].d_center[i];
            out.d_conic[i] += partial[w].d_conic[i];
            out.d_opacity[i] += partial[w].d_opacity[i];
            out.d_color[i] += partial[w].d_color[i];
            out.d_depth[i] += partial[w].d_depth[i];
        }
    }
    out.d_background = std::move(d_background);
    return out;
}

}  // namespace compsplat
