#pragma once

#include "edgesplat/math.hpp"

namespace edgesplat {

/// Pinhole camera in the OpenCV convention (x right, y down, z forward).
/// Pixel (u, v) samples the image plane at exactly (u, v).
struct ViewCamera {
    Mat3 rotation = Mat3::Identity(); // world -> camera
    Vec3 translation = Vec3::Zero();  // world -> camera
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    Vec3 center() const { return -rotation.transpose() * translation; }
    Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }

    /// Throws InvalidParameter unless the rotation is orthonormal to 1e-9,
    /// focal lengths are positive and the resolution is non-empty.
    void validate() const;

    /// Camera at `eye` looking at `target` with `up` as the world up direction.
    /// Throws InvalidParameter for coincident eye/target or up parallel to the view axis.
    static ViewCamera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
                              int height);

    bool operator==(const ViewCamera& o) const {
        return rotation == o.rotation && translation == o.translation && fx == o.fx && fy == o.fy &&
               cx == o.cx && cy == o.cy && width == o.width && height == o.height;
    }
};

} // namespace edgesplat
