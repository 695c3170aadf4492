#include "edgesplat/model.hpp"
#include "edgesplat/errors.hpp"
#include "edgesplat/scene.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace edgesplat {

ParamVec GaussianPrimitive::pack() const {
    ParamVec p;
    p.segment<3>(param::kMean) = mean;
    p.segment<3>(param::kLogScale) = log_scale;
    p.segment<4>(param::kRotation) = rotation;
    p[param::kOpacity] = opacity_logit;
    p.segment<3>(param::kColor) = color;
    return p;
}

GaussianPrimitive GaussianPrimitive::unpack(const ParamVec& p) {
    GaussianPrimitive g;
    g.mean = p.segment<3>(param::kMean);
    g.log_scale = p.segment<3>(param::kLogScale);
    g.rotation = p.segment<4>(param::kRotation);
    g.opacity_logit = p[param::kOpacity];
    g.color = p.segment<3>(param::kColor);
    return g;
}

bool GaussianPrimitive::operator==(const GaussianPrimitive& o) const {
    return mean == o.mean && log_scale == o.log_scale && rotation == o.rotation &&
           opacity_logit == o.opacity_logit && color == o.color;
}

void validate(const GaussianPrimitive& g) {
    if (!g.pack().allFinite()) {
        throw InvalidParameter("gaussian primitive has non-finite parameters");
    }
    if (g.rotation.squaredNorm() == 0.0) {
        throw InvalidParameter("gaussian primitive has a zero quaternion");
    }
}

Mat3 build_covariance(const Vec3& log_scale, const Vec4& rotation) {
    if (!log_scale.allFinite() || !rotation.allFinite() || rotation.squaredNorm() == 0.0) {
        throw InvalidParameter("build_covariance: non-finite scale or rotation");
    }
    const Mat3 r = rotation_from_quaternion(rotation);
    const Vec3 var = (2.0 * log_scale).array().exp().matrix();
    Mat3 cov = r * var.asDiagonal() * r.transpose();
    // exact symmetry
    cov = 0.5 * (cov + cov.transpose()).eval();
    return cov;
}

namespace {

std::array<int, 3> axes_by_scale(const Vec3& log_scale) {
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return log_scale[a] > log_scale[b]; });
    return order;
}

} // namespace

AxisInfo principal_axis(const GaussianPrimitive& g, int rank) {
    validate(g);
    if (rank < 0 || rank > 2) {
        throw InvalidParameter("principal_axis: rank must be 0, 1 or 2");
    }
    const int idx = axes_by_scale(g.log_scale)[static_cast<std::size_t>(rank)];
    const Mat3 r = g.rotation_matrix();
    return AxisInfo{r.col(idx), std::exp(g.log_scale[idx]), idx};
}

AxisInfo longest_axis(const GaussianPrimitive& g) { return principal_axis(g, 0); }

double mahalanobis_squared(const GaussianPrimitive& g, const Vec3& point) {
    if (!point.allFinite()) {
        throw InvalidParameter("evaluate_density: non-finite point");
    }
    validate(g);
    // Sigma^-1 = R S^-2 R^T, so the distance is |S^-1 R^T (p - mean)|^2.
    const Vec3 local = g.rotation_matrix().transpose() * (point - g.mean);
    const Vec3 inv_scale = (-g.log_scale).array().exp().matrix();
    return local.cwiseProduct(inv_scale).squaredNorm();
}

double evaluate_density(const GaussianPrimitive& g, const Vec3& point) {
    return std::exp(-0.5 * mahalanobis_squared(g, point));
}

// scene.hpp

GaussianScene::GaussianScene(std::vector<GaussianPrimitive> prims)
    : primitives(std::move(prims)), moments(primitives.size()), stats(primitives.size()) {}

void GaussianScene::append(const GaussianPrimitive& g) {
    primitives.push_back(g);
    moments.emplace_back();
    stats.emplace_back();
}

std::size_t GaussianScene::remove_masked(std::span<const std::uint8_t> remove) {
    check_aligned();
    if (remove.size() != primitives.size()) {
        throw StateError("remove_masked: mask length does not match scene size");
    }
    std::size_t out = 0;
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        if (remove[i]) {
            continue;
        }
        if (out != i) {
            primitives[out] = primitives[i];
            moments[out] = moments[i];
            stats[out] = stats[i];
        }
        ++out;
    }
    const std::size_t removed = primitives.size() - out;
    primitives.resize(out);
    moments.resize(out);
    stats.resize(out);
    return removed;
}

void GaussianScene::reset_stats() { std::fill(stats.begin(), stats.end(), DensifyStats{}); }

void GaussianScene::check_aligned() const {
    if (!aligned()) {
        throw StateError("gaussian scene arrays are misaligned");
    }
}

bool GaussianScene::operator==(const GaussianScene& o) const {
    return primitives == o.primitives && moments == o.moments && stats == o.stats &&
           adam_step == o.adam_step;
}

} // namespace edgesplat
