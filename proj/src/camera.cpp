#include "edgesplat/camera.hpp"
#include "edgesplat/errors.hpp"

namespace edgesplat {

void ViewCamera::validate() const {
    if (!rotation.allFinite() || !translation.allFinite()) {
        throw InvalidParameter("camera pose is not finite");
    }
    if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        rotation.determinant() < 0.0) {
        throw InvalidParameter("camera rotation is not a proper orthonormal matrix");
    }
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
        throw InvalidParameter("camera focal lengths must be positive");
    }
    if (!std::isfinite(cx) || !std::isfinite(cy)) {
        throw InvalidParameter("camera principal point is not finite");
    }
    if (width <= 0 || height <= 0) {
        throw InvalidParameter("camera resolution must be positive");
    }
}

ViewCamera ViewCamera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
                               int height) {
    const Vec3 fwd_raw = target - eye;
    if (fwd_raw.norm() < 1e-12) {
        throw InvalidParameter("look_at: eye and target coincide");
    }
    const Vec3 forward = fwd_raw.normalized();
    const Vec3 right_raw = forward.cross(up);
    if (right_raw.norm() < 1e-9) {
        throw InvalidParameter("look_at: up direction is parallel to the viewing axis");
    }
    const Vec3 right = right_raw.normalized();
    const Vec3 down = forward.cross(right);

    ViewCamera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.fx = focal;
    cam.fy = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    cam.validate();
    return cam;
}

} // namespace edgesplat
