#include "edgesplat/errors.hpp"
#include "edgesplat/oracle.hpp"
#include "edgesplat/renderer.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace edgesplat;
using testkit::axis_camera;
using testkit::point_like;

namespace {

ViewCamera unit_depth_camera() {
    ViewCamera cam = axis_camera(64, 64, 100.0, 1.0);
    return cam;
}

} // namespace

TEST(Project, OnAxis) {
    const ViewCamera cam = unit_depth_camera();
    const auto p = project(point_like(Vec3(0, 0, 0), 0.5, Vec3(1, 1, 1)), cam);
    ASSERT_TRUE(p.has_value());
    EXPECT_NEAR(p->mean2d.x(), cam.cx, 1e-12);
    EXPECT_NEAR(p->mean2d.y(), cam.cy, 1e-12);
    EXPECT_NEAR(p->depth, 1.0, 1e-12);
    // 1e-4 world variance at depth 1 with f = 100 is 1 px^2, plus dilation.
    EXPECT_NEAR(p->cov2d(0, 0), 1.0 + 0.3, 1e-9);
    EXPECT_NEAR(p->cov2d(0, 1), 0.0, 1e-12);
}

TEST(Project, ShiftedInCameraX) {
    const ViewCamera cam = unit_depth_camera();
    const auto p = project(point_like(Vec3(0.1, 0, 0), 0.5, Vec3(1, 1, 1)), cam);
    ASSERT_TRUE(p.has_value());
    EXPECT_NEAR(p->mean2d.x(), cam.cx + 10.0, 1e-12);
    EXPECT_NEAR(p->mean2d.y(), cam.cy, 1e-12);
}

TEST(Project, CullsBehindAndAtNearPlane) {
    const ViewCamera cam = unit_depth_camera();
    EXPECT_FALSE(project(point_like(Vec3(0, 0, -2), 0.5, Vec3(1, 1, 1)), cam).has_value()); // depth -1
    EXPECT_FALSE(project(point_like(Vec3(0, 0, -0.995), 0.5, Vec3(1, 1, 1)), cam).has_value()); // depth 0.005
    EXPECT_TRUE(project(point_like(Vec3(0, 0, -0.98), 0.5, Vec3(1, 1, 1)), cam).has_value());
}

TEST(Render, EmptySceneIsBlack) {
    const ViewCamera cam = axis_camera(8, 6, 10.0);
    const RenderOutput out = render(std::span<const GaussianPrimitive>{}, cam);
    EXPECT_EQ(out.bundle.image, Image(8, 6));
    EXPECT_TRUE(out.bundle.per_gaussian_eas.empty());
    EXPECT_EQ(out.bundle.mean_blend_length, 0.0);
}

TEST(Render, SingleGaussianCompositing) {
    const ViewCamera cam = axis_camera(16, 16, 20.0);
    const std::vector<GaussianPrimitive> prims{point_like(Vec3(0, 0, 0), 0.5, Vec3(1, 0, 0), 0.05)};
    const Image& img = render(prims, cam).bundle.image;
    EXPECT_NEAR(img.at(8, 8, 0), 0.5, 1e-12);
    EXPECT_NEAR(img.at(8, 8, 1), 0.0, 1e-12);
    EXPECT_NEAR(img.at(8, 8, 2), 0.0, 1e-12);
}

TEST(Render, TwoCoincidentGaussians) {
    const ViewCamera cam = axis_camera(16, 16, 20.0);
    const std::vector<GaussianPrimitive> prims{
        point_like(Vec3(0, 0, 0.5), 0.8, Vec3(0, 1, 0), 0.05), // behind
        point_like(Vec3(0, 0, 0.0), 0.5, Vec3(1, 0, 0), 0.05),
    };
    const Image& img = render(prims, cam).bundle.image;
    EXPECT_NEAR(img.at(8, 8, 0), 0.5, 1e-12);
    EXPECT_NEAR(img.at(8, 8, 1), 0.4, 1e-12);
    EXPECT_NEAR(img.at(8, 8, 2), 0.0, 1e-12);
}

TEST(Render, ChannelsInUnitRange) {
    std::mt19937_64 rng(21);
    const ViewCamera cam = axis_camera(24, 24, 25.0);
    for (int i = 0; i < 5; ++i) {
        const auto prims = testkit::random_primitives(rng, 30);
        for (double v : render(prims, cam).bundle.image.data) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Render, PermutationInvariant) {
    std::mt19937_64 rng(22);
    const ViewCamera cam = axis_camera(16, 16, 20.0);
    auto prims = testkit::random_primitives(rng, 15);
    prims.push_back(prims[3]); // exact depth tie
    const Image ref = render(prims, cam).bundle.image;
    for (int i = 0; i < 5; ++i) {
        std::shuffle(prims.begin(), prims.end(), rng);
        EXPECT_EQ(render(prims, cam).bundle.image, ref);
    }
}

TEST(Render, EasZeroForZeroEdgeMap) {
    std::mt19937_64 rng(23);
    const ViewCamera cam = axis_camera(16, 16, 20.0);
    const auto prims = testkit::random_primitives(rng, 10);
    EdgeWeightMap zero{16, 16, std::vector<double>(256, 0.0)};
    const RenderOutput out = render(prims, cam, &zero);
    for (double v : out.bundle.per_gaussian_eas) EXPECT_EQ(v, 0.0);
    EXPECT_GT(std::count(out.bundle.per_gaussian_hit.begin(), out.bundle.per_gaussian_hit.end(), 1), 0);
}

TEST(Render, EasSumsCompositingWeights) {
    // With a unit edge map the EAS of each splat is its total rendering weight,
    // and summed over splats it equals the accumulated opacity of the image.
    std::mt19937_64 rng(24);
    const ViewCamera cam = axis_camera(16, 16, 20.0);
    std::vector<GaussianPrimitive> prims = testkit::random_primitives(rng, 8);
    for (auto& g : prims) g.color = Vec3(1, 1, 1);
    EdgeWeightMap ones{16, 16, std::vector<double>(256, 1.0)};
    const RenderOutput out = render(prims, cam, &ones);
    double total_eas = 0.0, total_red = 0.0;
    for (double v : out.bundle.per_gaussian_eas) total_eas += v;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) total_red += out.bundle.image.at(x, y, 0);
    EXPECT_NEAR(total_eas, total_red, 1e-9);
}

TEST(Backward, ZeroPixelGradsGiveZero) {
    std::mt19937_64 rng(25);
    const ViewCamera cam = axis_camera(16, 16, 20.0);
    const auto prims = testkit::random_primitives(rng, 10);
    const RenderOutput out = render(prims, cam);
    const BackwardResult b = backward(prims, cam, out.state, std::vector<double>(16 * 16 * 3, 0.0));
    for (const auto& g : b.param_grads) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
    for (double v : b.per_gaussian_grad) EXPECT_EQ(v, 0.0);
    for (double v : b.per_gaussian_abs_grad) EXPECT_EQ(v, 0.0);
}

TEST(Backward, RequiresMatchingForwardState) {
    std::mt19937_64 rng(26);
    const ViewCamera cam = axis_camera(16, 16, 20.0);
    const auto prims = testkit::random_primitives(rng, 4);
    const std::vector<double> grads(16 * 16 * 3, 0.0);
    EXPECT_THROW(backward(prims, cam, ForwardState{}, grads), StateError);
    const RenderOutput out = render(prims, cam);
    const std::vector<GaussianPrimitive> fewer(prims.begin(), prims.begin() + 2);
    EXPECT_THROW(backward(fewer, cam, out.state, grads), StateError);
    EXPECT_THROW(backward(prims, cam, out.state, std::vector<double>(10, 0.0)), InvalidParameter);
}

TEST(Backward, MatchesFiniteDifferencesOnRandomScenes) {
    std::mt19937_64 rng(27);
    const ViewCamera cam = axis_camera(16, 16, 20.0);
    const RenderSettings smooth = RenderSettings::smooth();
    for (int scene = 0; scene < 20; ++scene) {
        const int n = 1 + static_cast<int>(rng() % 20);
        const auto prims = testkit::random_primitives(rng, n);
        const double lambda = scene % 2 == 0 ? 0.0 : 0.2;

        const RenderOutput out = render(prims, cam, nullptr, smooth);
        const Image gt = testkit::offset_target(out.bundle.image, rng);
        const LossResult loss = loss_and_pixel_grads(out.bundle.image, gt, lambda);
        const BackwardResult b = backward(prims, cam, out.state, loss.pixel_grads);
        const auto fd = oracle::finite_diff_gradients(prims, cam, gt, lambda, 1e-4, smooth);
        const auto cmp = oracle::compare_gradients(b.param_grads, fd);
        EXPECT_LT(cmp.max_relative_error, 1e-3)
            << "scene " << scene << " primitive " << cmp.worst_primitive << " param " << cmp.worst_param;
    }
}

TEST(Backward, MatchesFiniteDifferencesWithTrainingSettings) {
    // One wide Gaussian keeps every pixel above the alpha skip threshold and
    // inside the footprint, so the truncated renderer is smooth here too.
    std::mt19937_64 rng(28);
    const ViewCamera cam = axis_camera(16, 16, 20.0);
    for (int trial = 0; trial < 3; ++trial) {
        GaussianPrimitive g = testkit::random_primitive(rng, 0.05, 1.2, 1.8);
        g.opacity_logit = inverse_sigmoid(0.6);
        const std::vector<GaussianPrimitive> prims{g};
        const RenderSettings settings;
        const RenderOutput out = render(prims, cam, nullptr, settings);
        const Image gt = testkit::offset_target(out.bundle.image, rng);
        const LossResult loss = loss_and_pixel_grads(out.bundle.image, gt, 0.2);
        const BackwardResult b = backward(prims, cam, out.state, loss.pixel_grads);
        const auto fd = oracle::finite_diff_gradients(prims, cam, gt, 0.2, 1e-4, settings);
        EXPECT_LT(oracle::compare_gradients(b.param_grads, fd).max_relative_error, 1e-3);
    }
}

TEST(Backward, AbsoluteGradientDominatesSigned) {
    std::mt19937_64 rng(29);
    const ViewCamera cam = axis_camera(16, 16, 20.0);
    const auto prims = testkit::random_primitives(rng, 12);
    const RenderOutput out = render(prims, cam);
    const Image gt = testkit::random_image(rng, 16, 16);
    const LossResult loss = loss_and_pixel_grads(out.bundle.image, gt, 0.2);
    const BackwardResult b = backward(prims, cam, out.state, loss.pixel_grads);
    for (std::size_t i = 0; i < prims.size(); ++i) {
        EXPECT_GE(b.per_gaussian_abs_grad[i], b.per_gaussian_grad[i]);
    }
}

TEST(Backward, GradientConflictAcrossStepEdge) {
    const ViewCamera cam = axis_camera(16, 16, 20.0);
    GaussianPrimitive big = point_like(Vec3(0, 0, 0), 0.7, Vec3(0.5, 0.5, 0.5), 1.0);
    GaussianPrimitive small = point_like(Vec3(-0.4, 0, -0.2), 0.7, Vec3(0.9, 0.1, 0.1), 0.2);
    const std::vector<GaussianPrimitive> prims{big, small};
    const RenderOutput out = render(prims, cam);
    std::vector<double> grads(16 * 16 * 3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) grads[(y * 16 + x) * 3 + c] = x < 8 ? 1.0 : -1.0;
    const BackwardResult b = backward(prims, cam, out.state, grads);
    EXPECT_GT(b.per_gaussian_abs_grad[0], b.per_gaussian_grad[0]);
}

TEST(Render, WorkerCountDoesNotChangeResults) {
    std::mt19937_64 rng(30);
    const ViewCamera cam = axis_camera(40, 33, 40.0);
    const auto prims = testkit::random_primitives(rng, 40);
    const Image gt = testkit::random_image(rng, 40, 33);
    const EdgeWeightMap edges = laplacian_edge_map(gt);
    RenderSettings s1;
    const RenderOutput ref = render(prims, cam, &edges, s1);
    const LossResult loss = loss_and_pixel_grads(ref.bundle.image, gt, 0.2);
    const BackwardResult bref = backward(prims, cam, ref.state, loss.pixel_grads);
    for (int workers : {2, 3, 8}) {
        RenderSettings s = s1;
        s.workers = workers;
        const RenderOutput out = render(prims, cam, &edges, s);
        EXPECT_EQ(out.bundle.image, ref.bundle.image);
        EXPECT_EQ(out.bundle.per_gaussian_eas, ref.bundle.per_gaussian_eas);
        const BackwardResult b = backward(prims, cam, out.state, loss.pixel_grads);
        EXPECT_EQ(b.per_gaussian_abs_grad, bref.per_gaussian_abs_grad);
        for (std::size_t i = 0; i < prims.size(); ++i) EXPECT_EQ(b.param_grads[i], bref.param_grads[i]);
    }
}
