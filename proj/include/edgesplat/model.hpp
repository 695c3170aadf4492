#pragma once

#include "edgesplat/math.hpp"

#include <cstddef>

namespace edgesplat {

/// Number of raw optimisable parameters per primitive.
inline constexpr int kParamCount = 14;
using ParamVec = Eigen::Matrix<double, kParamCount, 1>;

/// Offsets of each parameter block inside a ParamVec.
namespace param {
inline constexpr int kMean = 0;
inline constexpr int kLogScale = 3;
inline constexpr int kRotation = 6;
inline constexpr int kOpacity = 10;
inline constexpr int kColor = 11;
} // namespace param

/// One anisotropic 3D Gaussian.
///
/// Parameters are kept in unconstrained form: per-axis standard deviations as
/// logs, opacity as a logit. The quaternion is scalar-first and is renormalised
/// by the optimiser after every step; evaluation always uses q / |q|.
struct GaussianPrimitive {
    Vec3 mean = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    double opacity_logit = 0.0;
    Vec3 color = Vec3::Constant(0.5);

    double opacity() const { return sigmoid(opacity_logit); }
    Vec3 scale() const { return log_scale.array().exp().matrix(); }
    Mat3 rotation_matrix() const { return rotation_from_quaternion(rotation); }

    ParamVec pack() const;
    static GaussianPrimitive unpack(const ParamVec& p);

    bool operator==(const GaussianPrimitive& o) const;
};

/// Throws InvalidParameter if any field is non-finite or the quaternion is zero.
void validate(const GaussianPrimitive& g);

/// R diag(exp(log_scale))^2 R^T.
Mat3 build_covariance(const Vec3& log_scale, const Vec4& rotation);
inline Mat3 build_covariance(const GaussianPrimitive& g) { return build_covariance(g.log_scale, g.rotation); }

struct AxisInfo {
    Vec3 direction;     ///< unit vector in world space
    double semi_length; ///< one standard deviation along that axis
    int index;          ///< local axis index 0..2
};

/// Principal axis with the largest scale; ties go to the lowest axis index.
AxisInfo longest_axis(const GaussianPrimitive& g);

/// Principal axis ordered by scale rank (0 = longest, 2 = shortest), same tie rule.
AxisInfo principal_axis(const GaussianPrimitive& g, int rank);

/// exp(-1/2 (p - mean)^T Sigma^-1 (p - mean)).
double evaluate_density(const GaussianPrimitive& g, const Vec3& point);

/// Squared Mahalanobis distance of `point` from the 1-sigma ellipsoid centre.
double mahalanobis_squared(const GaussianPrimitive& g, const Vec3& point);

} // namespace edgesplat
