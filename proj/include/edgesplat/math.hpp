#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cmath>

namespace edgesplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Logit; the argument must lie strictly inside (0, 1).
inline double inverse_sigmoid(double p) { return std::log(p / (1.0 - p)); }

inline bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v) { return v.allFinite(); }

// Quaternions are stored scalar-first: (w, x, y, z).
inline Mat3 rotation_from_unit_quaternion(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
         2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
         2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

/// Rotation matrix of q / |q|.
inline Mat3 rotation_from_quaternion(const Vec4& q) { return rotation_from_unit_quaternion(q / q.norm()); }

/// Quaternion (w, x, y, z) for a rotation of `angle` radians about unit `axis`.
inline Vec4 quaternion_from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized() * std::sin(0.5 * angle);
    return Vec4(std::cos(0.5 * angle), a.x(), a.y(), a.z());
}

/// Hamilton product a * b.
inline Vec4 quaternion_multiply(const Vec4& a, const Vec4& b) {
    return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

} // namespace edgesplat
