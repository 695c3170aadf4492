#include "edgesplat/checkpoint.hpp"
#include "edgesplat/errors.hpp"
#include "edgesplat/model.hpp"
#include "edgesplat/scene.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <fstream>
#include <sstream>

using namespace edgesplat;

namespace {

GaussianPrimitive with_scales(double a, double b, double c) {
    GaussianPrimitive g;
    g.log_scale = Vec3(std::log(a), std::log(b), std::log(c));
    return g;
}

} // namespace

TEST(Covariance, IdentityRotationScalesDiagonal) {
    const Mat3 cov = build_covariance(Vec3(std::log(2.0), 0.0, 0.0), Vec4(1, 0, 0, 0));
    EXPECT_NEAR((cov - Vec3(4, 1, 1).asDiagonal().toDenseMatrix()).norm(), 0.0, 1e-12);
    EXPECT_NEAR((build_covariance(Vec3::Zero(), Vec4(1, 0, 0, 0)) - Mat3::Identity()).norm(), 0.0, 1e-15);
}

TEST(Covariance, QuarterTurnAboutZSwapsAxes) {
    const Vec4 q = quaternion_from_axis_angle(Vec3::UnitZ(), std::numbers::pi / 2);
    const Mat3 cov = build_covariance(Vec3(std::log(3.0), 0.0, 0.0), q);
    EXPECT_NEAR((cov - Vec3(1, 9, 1).asDiagonal().toDenseMatrix()).norm(), 0.0, 1e-12);
}

TEST(Covariance, RejectsNonFinite) {
    EXPECT_THROW(build_covariance(Vec3(std::nan(""), 0, 0), Vec4(1, 0, 0, 0)), InvalidParameter);
    EXPECT_THROW(build_covariance(Vec3::Zero(), Vec4(std::numeric_limits<double>::infinity(), 0, 0, 0)),
                 InvalidParameter);
}

TEST(Covariance, SymmetricPositiveDefiniteForRandomInputs) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 500; ++i) {
        const GaussianPrimitive g = testkit::random_primitive(rng, 1.0, 0.01, 5.0);
        const Mat3 cov = build_covariance(g);
        EXPECT_LE((cov - cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        Eigen::LLT<Mat3> llt(cov);
        EXPECT_EQ(llt.info(), Eigen::Success);
    }
}

TEST(LongestAxis, PicksLargestScale) {
    auto a = longest_axis(with_scales(3, 1, 1));
    EXPECT_NEAR((a.direction - Vec3::UnitX()).norm(), 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(a.semi_length, 3.0);
    auto b = longest_axis(with_scales(1, 1, 5));
    EXPECT_NEAR((b.direction - Vec3::UnitZ()).norm(), 0.0, 1e-15);
    EXPECT_NEAR(b.semi_length, 5.0, 1e-14);
}

TEST(LongestAxis, TieBreaksToLowestIndex) {
    auto a = longest_axis(with_scales(2, 2, 2));
    EXPECT_EQ(a.index, 0);
    EXPECT_NEAR((a.direction - Vec3::UnitX()).norm(), 0.0, 1e-15);
    EXPECT_NEAR(a.semi_length, 2.0, 1e-14);
}

TEST(LongestAxis, SemiLengthIsSqrtOfLargestEigenvalue) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        const GaussianPrimitive g = testkit::random_primitive(rng, 1.0, 0.05, 3.0);
        Eigen::SelfAdjointEigenSolver<Mat3> es(build_covariance(g));
        const AxisInfo ax = longest_axis(g);
        EXPECT_NEAR(ax.semi_length, std::sqrt(es.eigenvalues().maxCoeff()), 1e-9);
        // direction is an eigenvector of the covariance
        const Vec3 mapped = build_covariance(g) * ax.direction;
        EXPECT_NEAR((mapped - ax.semi_length * ax.semi_length * ax.direction).norm(), 0.0, 1e-9);
    }
}

TEST(Density, Examples) {
    GaussianPrimitive g;
    g.mean = Vec3(0.3, -0.2, 1.0);
    EXPECT_DOUBLE_EQ(evaluate_density(g, g.mean), 1.0);
    EXPECT_NEAR(evaluate_density(g, g.mean + Vec3(1, 1, 0)), std::exp(-1.0), 1e-15);
    EXPECT_NEAR(std::exp(-1.0), 0.367879, 1e-6);

    GaussianPrimitive h = with_scales(2, 1, 1);
    EXPECT_NEAR(evaluate_density(h, Vec3(2, 0, 0)), std::exp(-0.5), 1e-15);
    EXPECT_NEAR(std::exp(-0.5), 0.606531, 1e-6);
    EXPECT_THROW(evaluate_density(h, Vec3(std::nan(""), 0, 0)), InvalidParameter);
}

TEST(Density, InvariantUnderJointRotation) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 300; ++i) {
        GaussianPrimitive g = testkit::random_primitive(rng);
        const Vec3 offset(n(rng), n(rng), n(rng));
        const double before = evaluate_density(g, g.mean + offset);
        const Vec4 q = testkit::random_quaternion(rng);
        GaussianPrimitive r = g;
        r.rotation = quaternion_multiply(q, g.rotation);
        const double after = evaluate_density(r, r.mean + rotation_from_unit_quaternion(q) * offset);
        EXPECT_NEAR(before, after, 1e-9);
    }
}

TEST(Primitive, PackUnpackIsIdentity) {
    std::mt19937_64 rng(3);
    const GaussianPrimitive g = testkit::random_primitive(rng);
    EXPECT_EQ(GaussianPrimitive::unpack(g.pack()), g);
}

TEST(Scene, RemoveMaskedKeepsArraysAligned) {
    std::mt19937_64 rng(4);
    GaussianScene scene(testkit::random_primitives(rng, 10));
    for (std::size_t i = 0; i < scene.size(); ++i) {
        scene.stats[i].view_count = static_cast<std::int64_t>(i);
        scene.moments[i].first.setConstant(static_cast<double>(i));
    }
    std::vector<std::uint8_t> mask(10, 0);
    mask[1] = mask[4] = mask[9] = 1;
    const auto kept_prim = scene.primitives[5];
    EXPECT_EQ(scene.remove_masked(mask), 3u);
    ASSERT_TRUE(scene.aligned());
    ASSERT_EQ(scene.size(), 7u);
    // index 5 moved to slot 3
    EXPECT_EQ(scene.primitives[3], kept_prim);
    EXPECT_EQ(scene.stats[3].view_count, 5);
    EXPECT_EQ(scene.moments[3].first[0], 5.0);
    scene.append(kept_prim);
    EXPECT_TRUE(scene.aligned());
    EXPECT_EQ(scene.moments.back(), AdamMoments{});
}

TEST(Checkpoint, RoundTripIsBitExact) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        GaussianScene scene(testkit::random_primitives(rng, 1 + trial * 7));
        scene.adam_step = 1234 + trial;
        for (std::size_t i = 0; i < scene.size(); ++i) {
            for (int k = 0; k < kParamCount; ++k) {
                scene.moments[i].first[k] = u(rng);
                scene.moments[i].second[k] = u(rng) * 1e-300;
            }
            scene.stats[i] = DensifyStats{u(rng), u(rng), trial, u(rng), 3};
        }
        std::stringstream ss;
        BinaryWriter w(ss);
        write_scene(w, scene);
        BinaryReader r(ss);
        const GaussianScene back = read_scene(r);
        EXPECT_EQ(back, scene);
    }
}

TEST(Checkpoint, FileRoundTripAndCorruption) {
    const auto dir = std::filesystem::temp_directory_path() / "edgesplat_ckpt_test";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(1);
    GaussianScene scene(testkit::random_primitives(rng, 4));
    save_scene(scene, dir / "a.ckpt");
    EXPECT_EQ(load_scene(dir / "a.ckpt"), scene);
    {
        std::ofstream bad(dir / "b.ckpt", std::ios::binary);
        bad << "not a checkpoint";
    }
    EXPECT_THROW(load_scene(dir / "b.ckpt"), IoError);
    EXPECT_THROW(load_scene(dir / "missing.ckpt"), IoError);
    std::filesystem::remove_all(dir);
}
