#include "edgesplat/densify.hpp"
#include "edgesplat/errors.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace edgesplat;

namespace {

GaussianPrimitive scaled(const Vec3& scales, double opacity = 0.8) {
    GaussianPrimitive g;
    g.log_scale = scales.array().log().matrix();
    g.opacity_logit = inverse_sigmoid(opacity);
    g.color = Vec3(0.2, 0.4, 0.6);
    return g;
}

GaussianScene scene_with_opacities(const std::vector<double>& ops) {
    std::vector<GaussianPrimitive> prims;
    for (double o : ops) prims.push_back(scaled(Vec3(0.1, 0.1, 0.1), o));
    return GaussianScene(prims);
}

DensifyPolicy window_policy(std::int64_t n_max, int start, int end) {
    DensifyPolicy p;
    p.budget_max = n_max;
    p.densify_start_iter = start;
    p.densify_end_iter = end;
    p.rap_iters.clear();
    return p;
}

} // namespace

TEST(Stats, AverageAbsGrad) {
    DensifyStats s;
    EXPECT_EQ(average_abs_grad(s), 0.0);
    s.sum_abs_grad = 0.006;
    s.view_count = 20;
    EXPECT_NEAR(average_abs_grad(s), 0.0003, 1e-18);

    GaussianScene scene(std::vector<GaussianPrimitive>{scaled(Vec3(1, 1, 1))});
    const std::vector<std::uint8_t> hit{1};
    for (double v : {0.001, 0.002, 0.003}) {
        const std::vector<double> g{v / 2}, a{v};
        accumulate_view_stats(scene, hit, g, a);
    }
    EXPECT_NEAR(average_abs_grad(scene.stats[0]), 0.002, 1e-15);
    EXPECT_NEAR(average_grad(scene.stats[0]), 0.001, 1e-15);
}

TEST(Stats, MissedViewsDoNotCount) {
    GaussianScene scene(std::vector<GaussianPrimitive>{scaled(Vec3(1, 1, 1)), scaled(Vec3(1, 1, 1))});
    const std::vector<std::uint8_t> hit{1, 0};
    const std::vector<double> g{0.1, 0.0}, a{0.2, 0.0};
    accumulate_view_stats(scene, hit, g, a);
    EXPECT_EQ(scene.stats[0].view_count, 1);
    EXPECT_EQ(scene.stats[1].view_count, 0);
}

TEST(Eas, ZeroEdgeMapsGiveZero) {
    std::mt19937_64 rng(1);
    const ViewCamera cam = testkit::axis_camera(16, 16, 20.0);
    GaussianScene scene(testkit::random_primitives(rng, 6));
    const EdgeWeightMap zero{16, 16, std::vector<double>(256, 0.0)};
    const std::vector<EasView> views{{&cam, &zero}, {&cam, &zero}};
    for (double v : accumulate_eas(scene, views, 8, rng)) EXPECT_EQ(v, 0.0);
}

TEST(Eas, SinglePixelExample) {
    // Opacity 0.5 at the centre pixel, edge weight 2 there only.
    const ViewCamera cam = testkit::axis_camera(16, 16, 20.0);
    GaussianPrimitive g = scaled(Vec3(0.02, 0.02, 0.02), 0.5);
    GaussianScene scene(std::vector<GaussianPrimitive>{g});
    EdgeWeightMap edges{16, 16, std::vector<double>(256, 0.0)};
    edges.weights[8 * 16 + 8] = 2.0;
    const std::vector<EasView> views{{&cam, &edges}};
    std::mt19937_64 rng(2);
    EXPECT_NEAR(accumulate_eas(scene, views, 8, rng)[0], 1.0, 1e-12);
}

TEST(Eas, ExhaustiveSamplingIgnoresRng) {
    std::mt19937_64 rng(3);
    const ViewCamera a = testkit::axis_camera(16, 16, 20.0), b = testkit::axis_camera(16, 16, 24.0);
    GaussianScene scene(testkit::random_primitives(rng, 6));
    const EdgeWeightMap ea = laplacian_edge_map(testkit::random_image(rng, 16, 16));
    const EdgeWeightMap eb = laplacian_edge_map(testkit::random_image(rng, 16, 16));
    const std::vector<EasView> views{{&a, &ea}, {&b, &eb}};
    std::mt19937_64 r1(10), r2(99);
    EXPECT_EQ(accumulate_eas(scene, views, 2, r1), accumulate_eas(scene, views, 5, r2));
    EXPECT_THROW(accumulate_eas(scene, std::span<const EasView>{}, 2, r1), InvalidParameter);
}

TEST(SplitSet, CandidateRules) {
    GaussianScene scene = scene_with_opacities({0.5, 0.5, 0.5, 0.5});
    DensifyPolicy p;
    std::mt19937_64 rng(4);
    const std::vector<double> eas(4, 0.0);
    EXPECT_TRUE(select_split_set(scene, eas, 100, p, rng).empty());

    for (std::size_t i : {0u, 2u, 3u}) {
        scene.stats[i].sum_abs_grad = 0.01;
        scene.stats[i].view_count = 1;
    }
    EXPECT_EQ(select_split_set(scene, eas, 9, p, rng), (std::vector<std::size_t>{0, 2, 3}));
    EXPECT_EQ(select_split_set(scene, eas, 6, p, rng).size(), 2u);
    EXPECT_TRUE(select_split_set(scene, eas, 4, p, rng).empty());
}

TEST(SplitSet, ProportionalToEas) {
    std::vector<double> ops(10, 0.5);
    GaussianScene scene = scene_with_opacities(ops);
    for (auto& s : scene.stats) {
        s.sum_abs_grad = 1.0;
        s.view_count = 1;
    }
    std::vector<double> eas(10, 0.0);
    eas[0] = 9.0;
    eas[1] = 1.0;
    DensifyPolicy p;
    std::mt19937_64 rng(5);
    const int trials = 10000;
    int first = 0;
    for (int t = 0; t < trials; ++t) {
        const auto pick = select_split_set(scene, eas, 11, p, rng);
        ASSERT_EQ(pick.size(), 1u);
        first += pick[0] == 0;
    }
    const double sigma = std::sqrt(trials * 0.9 * 0.1);
    EXPECT_NEAR(first, 0.9 * trials, 3 * sigma);
}

TEST(LongAxisSplit, PaperDistance) {
    const GaussianPrimitive g = scaled(Vec3(2.0, 0.5, 0.3), 0.8);
    const auto [a, b] = long_axis_split(g, 0.45, 0.6);
    EXPECT_NEAR(a.scale()[0], 0.55 * 2.0, 1e-12);
    EXPECT_NEAR(a.scale()[1], 0.5 * std::sqrt(0.7975), 1e-12);
    EXPECT_NEAR(a.scale()[2], 0.3 * 0.893029, 1e-6);
    EXPECT_NEAR(a.opacity(), 0.48, 1e-12);
    EXPECT_NEAR(a.mean.x(), 0.9, 1e-12);
    EXPECT_NEAR(b.mean.x(), -0.9, 1e-12);
    EXPECT_EQ(a.color, g.color);
    EXPECT_EQ(a.rotation, g.rotation);
}

TEST(LongAxisSplit, SmallDistanceLimit) {
    const GaussianPrimitive g = scaled(Vec3(0.4, 1.5, 0.9));
    const auto [a, b] = long_axis_split(g, 1e-9, 1.0);
    EXPECT_NEAR(a.scale()[1], 1.5, 1e-8);
    EXPECT_NEAR(a.scale()[0], 0.4, 1e-12);
    EXPECT_NEAR((a.mean - g.mean).norm(), 0.0, 1e-8);
    EXPECT_NEAR(a.opacity(), g.opacity(), 1e-12);
}

TEST(LongAxisSplit, TangencyAndSurfaceOnRandomParents) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 100; ++t) {
        const GaussianPrimitive g = testkit::random_primitive(rng, 1.0, 0.05, 2.0);
        const AxisInfo u = longest_axis(g);
        const double d = 0.45 * u.semi_length;
        const auto [a, b] = long_axis_split(g, 0.45, 0.6);
        EXPECT_LT((a.mean + (u.semi_length - d) * u.direction - (g.mean + u.semi_length * u.direction)).norm(), 1e-9);
        EXPECT_LT((b.mean - (u.semi_length - d) * u.direction - (g.mean - u.semi_length * u.direction)).norm(), 1e-9);
        for (int rank = 1; rank < 3; ++rank) {
            const AxisInfo v = principal_axis(g, rank);
            const double rs = std::exp(a.log_scale[v.index]);
            for (double sign : {1.0, -1.0}) {
                EXPECT_NEAR(mahalanobis_squared(g, a.mean + sign * rs * v.direction), 1.0, 1e-6);
            }
        }
    }
}

TEST(LongAxisSplit, RejectsBadArguments) {
    const GaussianPrimitive g = scaled(Vec3(1, 1, 1));
    EXPECT_THROW(long_axis_split(g, 0.0, 0.6), InvalidParameter);
    EXPECT_THROW(long_axis_split(g, 0.51, 0.6), InvalidParameter);
    EXPECT_THROW(long_axis_split(g, 0.3, 0.0), InvalidParameter);
}

TEST(LongAxisSplit, MultiplierOverride) {
    const GaussianPrimitive g = scaled(Vec3(2.0, 0.5, 0.3));
    const auto [a, b] = long_axis_split(g, 0.45, 0.6, 0.7);
    EXPECT_NEAR(a.scale()[1], 0.35, 1e-12);
}

TEST(Baseline, CloneIsExactWithFreshState) {
    GaussianScene scene(std::vector<GaussianPrimitive>{scaled(Vec3(0.1, 0.2, 0.3))});
    scene.moments[0].first.setConstant(0.5);
    scene.stats[0].view_count = 3;
    baseline_clone(scene, 0);
    ASSERT_EQ(scene.size(), 2u);
    EXPECT_EQ(scene.primitives[1], scene.primitives[0]);
    EXPECT_EQ(scene.moments[1], AdamMoments{});
    EXPECT_EQ(scene.stats[1], DensifyStats{});
    EXPECT_TRUE(scene.aligned());
}

TEST(Baseline, SplitShrinksAndSamples) {
    const GaussianPrimitive g = scaled(Vec3(1.6, 1.6, 1.6));
    std::mt19937_64 r1(7), r2(7);
    const auto [a, b] = baseline_split(g, r1);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.scale()[k], 1.0, 1e-12);
    const auto [c, d] = baseline_split(g, r2);
    EXPECT_EQ(a.mean, c.mean);
    EXPECT_EQ(b.mean, d.mean);
    EXPECT_NE(a.mean, b.mean);
}

TEST(Baseline, SplitMeansFollowParentCovariance) {
    std::mt19937_64 rng(8);
    GaussianPrimitive g = scaled(Vec3(1.5, 0.7, 0.3));
    g.rotation = testkit::random_quaternion(rng);
    g.mean = Vec3(1, -2, 0.5);
    const int n = 100000;
    Vec3 sum = Vec3::Zero();
    Mat3 outer = Mat3::Zero();
    for (int i = 0; i < n / 2; ++i) {
        const auto [a, b] = baseline_split(g, rng);
        for (const Vec3& m : {a.mean, b.mean}) {
            const Vec3 x = m - g.mean;
            sum += x;
            outer += x * x.transpose();
        }
    }
    const Mat3 cov = outer / n;
    const Mat3 sigma = build_covariance(g);
    EXPECT_LT((cov - sigma).norm() / sigma.norm(), 0.05);
    EXPECT_LT((sum / n).norm(), 0.02);
}

TEST(Growth, Examples) {
    const DensifyPolicy p = window_policy(1000000, 100, 1100);
    EXPECT_EQ(growth_curve(100, p), 0);
    EXPECT_EQ(growth_budget(100, p, 50, 50), 50);
    EXPECT_EQ(growth_curve(1100, p), 1000000);
    EXPECT_EQ(growth_curve(600, p), 707106);
    EXPECT_EQ(growth_curve(5000, p), 1000000);
    EXPECT_EQ(growth_budget(600, p, 800000, 10), 800000);
}

TEST(Growth, MonotoneAndConcave) {
    const DensifyPolicy p = window_policy(50000, 30, 2030);
    std::int64_t prev = -1;
    for (int it = 0; it < 2200; ++it) {
        const std::int64_t b = growth_curve(it, p);
        EXPECT_GE(b, prev);
        prev = b;
    }
    // Second differences of the continuous curve on a coarse grid.
    for (int it = 31 + 100; it + 100 <= 2030; it += 100) {
        const double d2 = static_cast<double>(growth_curve(it + 100, p)) - 2.0 * growth_curve(it, p) +
                          static_cast<double>(growth_curve(it - 100, p));
        EXPECT_LE(d2, 1.0);
    }
}

TEST(Rap, PrunesBottomFraction) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    std::vector<double> ops(100);
    for (double& o : ops) o = u(rng);
    GaussianScene scene = scene_with_opacities(ops);
    const PruneReport rep = recovery_aware_prune(scene, 0.2);
    EXPECT_EQ(rep.removed, 20u);
    EXPECT_EQ(scene.size(), 80u);
    EXPECT_LE(rep.removed_max_opacity, rep.kept_min_opacity);
    for (const auto& g : scene.primitives) EXPECT_GE(g.opacity(), rep.removed_max_opacity);
    EXPECT_TRUE(scene.aligned());

    GaussianScene small = scene_with_opacities({0.1, 0.2, 0.3, 0.4});
    EXPECT_EQ(recovery_aware_prune(small, 0.2).removed, 0u);
}

TEST(Rap, TiesPruneLowerIndexFirst) {
    GaussianScene scene = scene_with_opacities({0.3, 0.3, 0.3, 0.9, 0.9});
    scene.primitives[2].color = Vec3(1, 0, 0);
    recovery_aware_prune(scene, 0.4); // removes two of the three ties
    ASSERT_EQ(scene.size(), 3u);
    EXPECT_EQ(scene.primitives[0].color, Vec3(1, 0, 0));
}

TEST(Reset, Examples) {
    DensifyPolicy p;
    GaussianScene scene = scene_with_opacities({0.9, 0.03});
    scene.moments[0].first.setConstant(1.0);
    scene.moments[1].first.setConstant(1.0);
    EXPECT_EQ(reset_opacity(scene, p), 1u);
    EXPECT_NEAR(scene.primitives[0].opacity(), 0.05, 1e-12);
    EXPECT_NEAR(scene.primitives[1].opacity(), 0.03, 1e-12);
    EXPECT_EQ(scene.moments[0].first[param::kOpacity], 0.0);
    EXPECT_EQ(scene.moments[0].first[param::kMean], 1.0);
    EXPECT_EQ(scene.moments[1].first[param::kOpacity], 1.0);

    GaussianScene low = scene_with_opacities({0.01, 0.04});
    const GaussianScene before = low;
    EXPECT_EQ(reset_opacity(low, p), 0u);
    EXPECT_EQ(low, before);
}

TEST(PruneTransparent, Examples) {
    GaussianScene scene = scene_with_opacities({0.001, 0.5, 0.004, 0.9});
    EXPECT_EQ(prune_transparent(scene, 0.005), 2u);
    EXPECT_EQ(scene.size(), 2u);
    EXPECT_TRUE(scene.aligned());
    EXPECT_EQ(prune_transparent(scene, 0.005), 0u);
}

TEST(Round, ImprovedAtCapOnlyResetsStats) {
    GaussianScene scene = scene_with_opacities({0.5, 0.5, 0.5});
    for (auto& s : scene.stats) {
        s.sum_abs_grad = 1.0;
        s.view_count = 1;
    }
    DensifyPolicy p = window_policy(3, 0, 100);
    DensifyContext ctx;
    ctx.initial_count = 3;
    std::mt19937_64 rng(11);
    const auto rep = densify_round(scene, ctx, 50, p, DensifyMode::improved, rng);
    EXPECT_EQ(rep.splits, 0u);
    EXPECT_EQ(scene.size(), 3u);
    for (const auto& s : scene.stats) EXPECT_EQ(s, DensifyStats{});
}

TEST(Round, ImprovedSplitReplacesParent) {
    GaussianScene scene = scene_with_opacities({0.5, 0.5});
    scene.primitives[1] = scaled(Vec3(0.5, 0.1, 0.1), 0.5);
    scene.stats[1].sum_abs_grad = 1.0;
    scene.stats[1].view_count = 1;
    DensifyPolicy p = window_policy(100, 0, 100);
    DensifyContext ctx;
    ctx.initial_count = 2;
    std::mt19937_64 rng(12);
    const GaussianPrimitive parent = scene.primitives[1];
    const auto rep = densify_round(scene, ctx, 100, p, DensifyMode::improved, rng);
    EXPECT_EQ(rep.splits, 1u);
    ASSERT_EQ(scene.size(), 3u);
    EXPECT_FALSE(scene.primitives[0] == parent || scene.primitives[1] == parent || scene.primitives[2] == parent);
    const auto [a, b] = long_axis_split(parent, 0.45, 0.6);
    EXPECT_EQ(scene.primitives[1], a);
    EXPECT_EQ(scene.primitives[2], b);
}

TEST(Round, BaselineClonesSmallAndSplitsLarge) {
    GaussianScene scene = scene_with_opacities({0.5, 0.5, 0.5});
    scene.primitives[0] = scaled(Vec3(0.001, 0.001, 0.001), 0.5);
    scene.primitives[1] = scaled(Vec3(0.5, 0.5, 0.5), 0.5);
    for (std::size_t i : {0u, 1u}) {
        scene.stats[i].sum_grad = 1.0;
        scene.stats[i].view_count = 1;
    }
    DensifyPolicy p = window_policy(100, 0, 1000);
    DensifyContext ctx;
    ctx.scene_extent = 1.0;
    std::mt19937_64 rng(13);
    const auto rep = densify_round(scene, ctx, 100, p, DensifyMode::baseline_adc, rng);
    EXPECT_EQ(rep.clones, 1u);
    EXPECT_EQ(rep.splits, 1u);
    EXPECT_EQ(scene.size(), 5u);
    EXPECT_TRUE(scene.aligned());
}

TEST(Round, BaselineRespectsBudget) {
    std::vector<double> ops(6, 0.5);
    GaussianScene scene = scene_with_opacities(ops);
    for (std::size_t i = 0; i < 6; ++i) {
        scene.stats[i].sum_grad = 1.0 + static_cast<double>(i);
        scene.stats[i].view_count = 1;
    }
    DensifyPolicy p = window_policy(8, 0, 1000);
    DensifyContext ctx;
    std::mt19937_64 rng(14);
    densify_round(scene, ctx, 100, p, DensifyMode::baseline_adc, rng);
    EXPECT_EQ(scene.size(), 8u);
}

TEST(Round, DeterministicUnderSeed) {
    std::mt19937_64 gen(15);
    const ViewCamera cam = testkit::axis_camera(16, 16, 20.0);
    const EdgeWeightMap edges = laplacian_edge_map(testkit::random_image(gen, 16, 16));
    const std::vector<EasView> views{{&cam, &edges}};
    GaussianScene base(testkit::random_primitives(gen, 20));
    for (auto& s : base.stats) {
        s.sum_abs_grad = 1.0;
        s.view_count = 1;
    }
    DensifyPolicy p = window_policy(25, 0, 100);
    DensifyContext ctx;
    ctx.views = views;
    ctx.initial_count = 20;
    GaussianScene a = base, b = base;
    std::mt19937_64 r1(3), r2(3);
    densify_round(a, ctx, 100, p, DensifyMode::improved, r1);
    densify_round(b, ctx, 100, p, DensifyMode::improved, r2);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), 25u);
}

TEST(Policy, Validation) {
    DensifyPolicy p;
    EXPECT_NO_THROW(p.validate());
    p.las_d_fraction = 0.6;
    EXPECT_THROW(p.validate(), ConfigError);
    p = DensifyPolicy{};
    p.rap_iters = {6300, 3300};
    EXPECT_THROW(p.validate(), ConfigError);
    p = DensifyPolicy{};
    p.rap_iters = {20000};
    EXPECT_THROW(p.validate(), ConfigError);
}
