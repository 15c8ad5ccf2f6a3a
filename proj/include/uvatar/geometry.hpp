#pragma once

#include <optional>
#include <vector>

#include <Eigen/Geometry>

#include "uvatar/types.hpp"

namespace uvatar {

struct SurfacePoint {
    double distance = 0.0;
    Vec3 point = Vec3::Zero();
    int face = -1;
    Vec3 barycentric = Vec3::Zero();
};

/// Closest point on triangle (a, b, c) to p, with barycentric weights of the result.
SurfacePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct RayHit {
    double t = 0.0;
    int face = -1;
    Vec3 barycentric = Vec3::Zero();
};

/// Moller-Trumbore; returns the hit parameter along `dir` when it lies in [t_min, t_max].
std::optional<RayHit> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                         const Vec3& c, double t_min, double t_max);

/// Bounding volume hierarchy over a triangle soup. Queries are exact: the
/// answers match an exhaustive scan, ties resolved toward the lowest face index.
class TriangleBvh {
public:
    TriangleBvh(const PointCloud& vertices, const Triangles& faces);

    SurfacePoint closest_point(const Vec3& query) const;
    std::optional<RayHit> intersect(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const;

    int num_faces() const { return int(faces_.rows()); }
    const PointCloud& vertices() const { return vertices_; }
    const Triangles& faces() const { return faces_; }

private:
    struct Node {
        Eigen::AlignedBox3d box;
        int left = -1;   // child node, or -1 for leaves
        int right = -1;
        int begin = 0;   // range into order_ for leaves
        int end = 0;
    };

    int build(int begin, int end);
    Vec3 corner(int face, int k) const { return vertices_.row(faces_(face, k)).transpose(); }

    PointCloud vertices_;
    Triangles faces_;
    std::vector<int> order_;
    std::vector<Eigen::AlignedBox3d> face_boxes_;
    std::vector<Vec3> centroids_;
    std::vector<Node> nodes_;
};

}  // namespace uvatar
