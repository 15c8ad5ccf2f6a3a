#include "uvatar/camera.hpp"

#include <cmath>

#include <Eigen/Geometry>

namespace uvatar {

Vec3 Camera::ray_direction(double px, double py) const {
    const Vec3 local((px - cx) / fx, (py - cy) / fy, 1.0);
    return (rotation.transpose() * local).normalized();
}

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InputError("camera " + id + ": focal lengths must be positive");
    if (!rotation.allFinite() || !translation.allFinite()) throw InputError("camera " + id + ": non-finite extrinsics");
    if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(rotation.determinant() - 1.0) > 1e-9) {
        throw InputError("camera " + id + ": rotation is not orthonormal");
    }
}

Camera look_at(const Vec3& eye, const Vec3& target, double focal, int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(Vec3::UnitY());
    if (right.norm() < 1e-12) right = Vec3::UnitX();
    right.normalize();
    const Vec3 down = forward.cross(right);
    Camera cam;
    cam.fx = cam.fy = focal;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    return cam;
}

Projection project(const Camera& cam, const PointCloud& points) {
    Projection out;
    out.pixels.setZero(points.rows(), 2);
    out.valid = Mask::Constant(points.rows(), false);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        Vec2 px;
        if (project_point<double>(cam, points.row(i).transpose(), px)) {
            out.pixels.row(i) = px.transpose();
            out.valid(i) = true;
        }
    }
    return out;
}

}  // namespace uvatar
