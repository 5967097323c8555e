#include "compsplat/datagen.hpp"
#include "compsplat/rasterizer.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>

using namespace compsplat;
using compsplat::testing::central_differences;
using compsplat::testing::expect_gradients_match;

namespace {

/// A splat whose α is exactly `alpha` at `pixel` (flat falloff there).
Splat flat_splat(const Vec2& pixel, double opacity, const Vec3& color, double depth) {
    return make_splat(pixel, Mat2::Identity() * 100.0, opacity, color, depth);
}

std::vector<Splat> random_splats(std::mt19937_64& rng, int count, int width, int height) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Splat> out;
    std::vector<double> depths(static_cast<std::size_t>(count));
    // distinct depths so the depth sort has no ties
    std::iota(depths.begin(), depths.end(), 1.0);
    std::shuffle(depths.begin(), depths.end(), rng);
    for (int i = 0; i < count; ++i) {
        const double sx = 0.5 + 4.0 * u(rng);
        const double sy = 0.5 + 4.0 * u(rng);
        const double rho = 0.8 * (2.0 * u(rng) - 1.0);
        Mat2 cov;
        cov << sx * sx, rho * sx * sy, rho * sx * sy, sy * sy;
        out.push_back(make_splat(Vec2((width + 8) * u(rng) - 4, (height + 8) * u(rng) - 4), cov, u(rng),
                                 Vec3(u(rng), u(rng), u(rng)), 0.5 + 0.1 * depths[static_cast<std::size_t>(i)],
                                 u(rng) < 0.3 ? 1 : kBackgroundTag));
    }
    return out;
}

double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace

TEST(Binning, SmallSplatInsideOneTile) {
    const std::vector<Splat> splats{make_splat(Vec2(24, 24), Mat2::Identity() * (1.0 / 9.0), 1.0, Vec3::Ones(), 1.0)};
    ASSERT_LE(splats[0].radius, 1.5);
    const TileBins bins = bin_and_sort(splats, 64, 64);
    std::size_t hits = 0;
    for (const auto& list : bins.lists) hits += list.size();
    EXPECT_EQ(hits, 1u);
    EXPECT_EQ(bins.tile(1, 1).size(), 1u);
}

TEST(Binning, SplatOnCornerSpansFourTiles) {
    const std::vector<Splat> splats{make_splat(Vec2(32, 32), Mat2::Identity() * 4.0, 1.0, Vec3::Ones(), 1.0)};
    const TileBins bins = bin_and_sort(splats, 64, 64);
    std::size_t hits = 0;
    for (const auto& list : bins.lists) hits += list.size();
    EXPECT_EQ(hits, 4u);
    for (int t = 0; t < 4; ++t) EXPECT_EQ(bins.tile(1 + t % 2, 1 + t / 2).size(), 1u);
}

TEST(Binning, EqualDepthKeepsInputOrder) {
    std::vector<Splat> splats;
    for (int i = 0; i < 5; ++i) splats.push_back(flat_splat(Vec2(8, 8), 0.5, Vec3::Zero(), 2.0));
    splats.push_back(flat_splat(Vec2(8, 8), 0.5, Vec3::Zero(), 1.0));
    const TileBins bins = bin_and_sort(splats, 16, 16);
    const std::vector<std::uint32_t> expected{5, 0, 1, 2, 3, 4};
    EXPECT_EQ(bins.tile(0, 0), expected);
}

TEST(AlphaBlend, SingleOpaqueSplatIsClamped) {
    const Vec2 p(4.5, 4.5);
    const Vec3 c(0.2, 0.4, 0.8);
    const std::vector<Splat> s{flat_splat(p, 1.0, c, 1.0)};
    const PixelResult r = alpha_blend_pixel(s, p, Vec3::Zero());
    EXPECT_TRUE(r.rgb.isApprox(0.99 * c, 1e-12));
    EXPECT_NEAR(r.acc_alpha, 0.99, 1e-12);
}

TEST(AlphaBlend, TwoHalfTransparentSplats) {
    const Vec2 p(4.5, 4.5);
    const Vec3 c1(1, 0, 0), c2(0, 1, 0);
    const std::vector<Splat> s{flat_splat(p, 0.5, c1, 1.0), flat_splat(p, 0.5, c2, 2.0)};
    const PixelResult r = alpha_blend_pixel(s, p, Vec3::Zero());
    EXPECT_TRUE(r.rgb.isApprox(0.5 * c1 + 0.25 * c2, 1e-12));
    EXPECT_NEAR(r.acc_alpha, 0.75, 1e-12);
    EXPECT_NEAR(r.depth, (0.5 * 1.0 + 0.25 * 2.0) / 0.75, 1e-12);
}

TEST(AlphaBlend, EmptyListShowsBackground) {
    const Vec3 b(0.3, 0.6, 0.9);
    const PixelResult r = alpha_blend_pixel({}, Vec2(1, 1), b);
    EXPECT_EQ(r.rgb, b);
    EXPECT_EQ(r.acc_alpha, 0.0);
    EXPECT_EQ(r.depth, 0.0);
}

TEST(AlphaBlend, BelowSkipThresholdContributesNothing) {
    const Vec2 p(4.5, 4.5);
    const std::vector<Splat> s{flat_splat(p, 0.9 / 255.0, Vec3::Ones(), 1.0)};
    EXPECT_EQ(alpha_blend_pixel(s, p, Vec3::Zero()).acc_alpha, 0.0);
}

TEST(AlphaBlend, ActorAlphaCountsTaggedSplatsOnly) {
    const Vec2 p(4.5, 4.5);
    std::vector<Splat> s{flat_splat(p, 0.5, Vec3::Ones(), 1.0), flat_splat(p, 0.5, Vec3::Ones(), 2.0)};
    s[1].actor = 3;
    EXPECT_NEAR(alpha_blend_pixel(s, p, Vec3::Zero()).actor_alpha, 0.25, 1e-12);
}

TEST(Extent, CullingRadiusIsConservative) {
    std::mt19937_64 rng(2);
    for (const Splat& s : random_splats(rng, 100, 32, 32)) {
        // walk past the radius along both principal directions
        Eigen::SelfAdjointEigenSolver<Mat2> eig(s.conic.inverse());
        for (int k = 0; k < 2; ++k) {
            const Vec2 p = s.center + (s.radius + 1e-6) * eig.eigenvectors().col(k);
            EXPECT_LT(s.opacity * std::exp(-0.5 * (p - s.center).dot(s.conic * (p - s.center))), kAlphaSkip);
        }
    }
}

TEST(RasterizeForward, MatchesBruteForceOracle) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const int count = 1 + static_cast<int>(rng() % 200);
        const auto splats = random_splats(rng, count, 32, 32);
        const Image background = compsplat::testing::random_image(32, 32, 3, rng);
        const RasterResult fast = rasterize_forward(splats, 32, 32, background);
        const RenderOutput slow = brute_force_blend_oracle(splats, 32, 32, background);
        EXPECT_LE(max_abs_diff(fast.output.rgb, slow.rgb), 1e-6) << "trial " << trial;
        EXPECT_LE(max_abs_diff(fast.output.acc_alpha, slow.acc_alpha), 1e-6);
        EXPECT_LE(max_abs_diff(fast.output.actor_alpha, slow.actor_alpha), 1e-6);
        EXPECT_LE(max_abs_diff(fast.output.depth, slow.depth), 1e-6);
    }
}

TEST(RasterizeForward, TransparentSplatsShowBackground) {
    std::mt19937_64 rng(4);
    auto splats = random_splats(rng, 50, 32, 32);
    for (Splat& s : splats) s = make_splat(s.center, s.conic.inverse(), sigmoid(-1e9), s.color, s.depth);
    const Image background = compsplat::testing::random_image(32, 32, 3, rng);
    const RasterResult r = rasterize_forward(splats, 32, 32, background);
    EXPECT_EQ(r.output.rgb.data, background.data);
}

TEST(RasterizeForward, InputOrderDoesNotMatter) {
    std::mt19937_64 rng(8);
    auto splats = random_splats(rng, 120, 32, 32);
    const Image background(32, 32, 3, 0.25);
    const RasterResult a = rasterize_forward(splats, 32, 32, background);
    std::shuffle(splats.begin(), splats.end(), rng);
    const RasterResult b = rasterize_forward(splats, 32, 32, background);
    EXPECT_LE(max_abs_diff(a.output.rgb, b.output.rgb), 1e-12);
    EXPECT_LE(max_abs_diff(a.output.depth, b.output.depth), 1e-12);
}

TEST(RasterizeForward, TransmittanceTelescopes) {
    std::mt19937_64 rng(9);
    const auto splats = random_splats(rng, 150, 32, 32);
    const Image black(32, 32, 3, 0.0);
    const RasterResult r = rasterize_forward(splats, 32, 32, black);
    std::vector<Splat> sorted = splats;
    std::stable_sort(sorted.begin(), sorted.end(), [](const Splat& a, const Splat& b) { return a.depth < b.depth; });
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const PixelResult p = alpha_blend_pixel(sorted, Vec2(x + 0.5, y + 0.5), Vec3::Zero());
            EXPECT_NEAR(r.output.acc_alpha.at(x, y) + p.transmittance, 1.0, 1e-6);
            EXPECT_LE(r.output.actor_alpha.at(x, y), r.output.acc_alpha.at(x, y) + 1e-12);
        }
    }
}

TEST(RasterizeBackward, MatchesFiniteDifferences) {
    // Two broad splats on an 8×8 image: every pixel is covered well above
    // the skip threshold and below the clamp, so the image is smooth in all
    // parameters.
    std::vector<Splat> splats{
        make_splat(Vec2(3.2, 4.1), (Mat2() << 9.0, 2.0, 2.0, 6.0).finished(), 0.6, Vec3(0.9, 0.2, 0.4), 2.0, 1),
        make_splat(Vec2(5.3, 3.6), (Mat2() << 7.0, -1.5, -1.5, 10.0).finished(), 0.5, Vec3(0.1, 0.7, 0.3), 3.0),
    };
    for (Splat& s : splats) s.radius = 100.0;
    std::mt19937_64 rng(12);
    Image background = compsplat::testing::random_image(8, 8, 3, rng);
    RasterUpstream up;
    up.d_rgb = compsplat::testing::random_image(8, 8, 3, rng, -1, 1);
    up.d_acc_alpha = compsplat::testing::random_image(8, 8, 1, rng, -1, 1);
    up.d_actor_alpha = compsplat::testing::random_image(8, 8, 1, rng, -1, 1);
    up.d_depth = compsplat::testing::random_image(8, 8, 1, rng, -1, 1);

    auto loss = [&] {
        const RenderOutput o = rasterize_forward(splats, 8, 8, background).output;
        using compsplat::testing::dot;
        return dot(o.rgb, up.d_rgb) + dot(o.acc_alpha, up.d_acc_alpha) + dot(o.actor_alpha, up.d_actor_alpha) +
               dot(o.depth, up.d_depth);
    };
    const RasterResult fwd = rasterize_forward(splats, 8, 8, background);
    const RasterGrads g = rasterize_backward(splats, fwd.bins, 8, 8, background, up, {}, &fwd.totals);
    const RasterGrads g_recompute = rasterize_backward(splats, fwd.bins, 8, 8, background, up);

    const double step = 1e-4;
    for (std::size_t i = 0; i < splats.size(); ++i) {
        Splat& s = splats[i];
        expect_gradients_match(std::span(g.d_center[i].data(), 2),
                               central_differences(std::span(s.center.data(), 2), loss, step), 1e-3, 1e-6, "center");
        expect_gradients_match(std::span(g.d_conic[i].data(), 4),
                               central_differences(std::span(s.conic.data(), 4), loss, step), 1e-3, 1e-6, "conic");
        expect_gradients_match(std::span(&g.d_opacity[i], 1), central_differences(std::span(&s.opacity, 1), loss, step),
                               1e-3, 1e-6, "opacity");
        expect_gradients_match(std::span(g.d_color[i].data(), 3),
                               central_differences(std::span(s.color.data(), 3), loss, step), 1e-3, 1e-6, "color");
        expect_gradients_match(std::span(&g.d_depth[i], 1), central_differences(std::span(&s.depth, 1), loss, step),
                               1e-3, 1e-6, "depth");
        EXPECT_TRUE(g.d_center[i].isApprox(g_recompute.d_center[i], 1e-12));
        EXPECT_NEAR(g.d_opacity[i], g_recompute.d_opacity[i], 1e-12);
    }
    expect_gradients_match(g.d_background.data, central_differences(background.data, loss, step), 1e-3, 1e-6,
                           "background");
}

TEST(RasterizeBackward, ZeroUpstreamGivesZeroGradients) {
    std::mt19937_64 rng(14);
    const auto splats = random_splats(rng, 40, 16, 16);
    const Image background(16, 16, 3, 0.5);
    const RasterResult fwd = rasterize_forward(splats, 16, 16, background);
    RasterUpstream up;
    up.d_rgb = Image(16, 16, 3);
    const RasterGrads g = rasterize_backward(splats, fwd.bins, 16, 16, background, up, {}, &fwd.totals);
    for (std::size_t i = 0; i < splats.size(); ++i) {
        EXPECT_EQ(g.d_center[i], Vec2::Zero());
        EXPECT_EQ(g.d_conic[i], Mat2::Zero());
        EXPECT_EQ(g.d_opacity[i], 0.0);
        EXPECT_EQ(g.d_color[i], Vec3::Zero());
        EXPECT_EQ(g.d_depth[i], 0.0);
    }
}

TEST(RasterizeBackward, UncoveredPixelDoesNotReachSplat) {
    // Splat lives in the left tile; the upstream gradient only touches a
    // pixel in the right tile.
    const std::vector<Splat> splats{make_splat(Vec2(4, 8), Mat2::Identity() * 2.0, 0.8, Vec3::Ones(), 1.0)};
    const Image background(32, 16, 3, 0.5);
    const RasterResult fwd = rasterize_forward(splats, 32, 16, background);
    RasterUpstream up;
    up.d_rgb = Image(32, 16, 3);
    up.d_rgb.at(28, 8, 0) = 1.0;
    const RasterGrads g = rasterize_backward(splats, fwd.bins, 32, 16, background, up, {}, &fwd.totals);
    EXPECT_EQ(g.d_center[0], Vec2::Zero());
    EXPECT_EQ(g.d_opacity[0], 0.0);
    EXPECT_EQ(g.d_background.at(28, 8, 0), 1.0);
}
