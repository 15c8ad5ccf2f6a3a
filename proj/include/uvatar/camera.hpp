#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uvatar/types.hpp"

namespace uvatar {

/// Pinhole camera; `rotation`/`translation` map world points into the camera
/// frame (x right, y down, z forward).
struct Camera {
    std::string id;
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    int width = 0;
    int height = 0;

    Vec3 center() const { return -rotation.transpose() * translation; }
    Vec3 optical_axis() const { return rotation.row(2).transpose(); }
    /// Unit world-space direction of the ray through pixel coordinates (px, py).
    Vec3 ray_direction(double px, double py) const;
    void validate() const;
};

/// Camera at `eye` looking at `target` with world +y up.
Camera look_at(const Vec3& eye, const Vec3& target, double focal, int width, int height);

/// Pixel coordinates of X; false when X is at or behind the camera plane.
template <typename Scalar>
bool project_point(const Camera& cam, const Vector3<Scalar>& x, Vector2<Scalar>& pixel) {
    Vector3<Scalar> pc;
    for (int r = 0; r < 3; ++r) {
        pc(r) = cam.rotation(r, 0) * x(0) + cam.rotation(r, 1) * x(1) + cam.rotation(r, 2) * x(2) +
                cam.translation(r);
    }
    if (!(scalar_value(pc(2)) > 1e-12)) return false;
    pixel(0) = cam.fx * pc(0) / pc(2) + cam.cx;
    pixel(1) = cam.fy * pc(1) / pc(2) + cam.cy;
    return true;
}

struct Projection {
    Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> pixels;
    Mask valid;  // false for points at or behind the camera
};

Projection project(const Camera& cam, const PointCloud& points);

}  // namespace uvatar
