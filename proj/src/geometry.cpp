#include "uvatar/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include <Eigen/Geometry>

namespace uvatar {

// Region-based closest point (Ericson, Real-Time Collision Detection 5.1.5).
SurfacePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    SurfacePoint out;
    auto finish = [&](double u, double v, double w) {
        out.barycentric = Vec3(u, v, w);
        out.point = u * a + v * b + w * c;
        out.distance = (p - out.point).norm();
        return out;
    };
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return finish(1, 0, 0);

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return finish(0, 1, 0);

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return finish(1 - v, v, 0);
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return finish(0, 0, 1);

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return finish(1 - w, 0, w);
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return finish(0, 1 - w, w);
    }

    const double denom = va + vb + vc;
    if (denom == 0.0) {
        // Degenerate (zero-area) triangle: fall back to the closest vertex.
        const double da = (p - a).squaredNorm(), db = (p - b).squaredNorm(), dc = (p - c).squaredNorm();
        if (da <= db && da <= dc) return finish(1, 0, 0);
        if (db <= dc) return finish(0, 1, 0);
        return finish(0, 0, 1);
    }
    const double v = vb / denom;
    const double w = vc / denom;
    return finish(1 - v - w, v, w);
}

std::optional<RayHit> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                         const Vec3& c, double t_min, double t_max) {
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (det == 0.0) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 tv = origin - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    const double t = e2.dot(qv) * inv;
    if (t < t_min || t > t_max) return std::nullopt;
    RayHit hit;
    hit.t = t;
    hit.barycentric = Vec3(1.0 - u - v, u, v);
    return hit;
}

TriangleBvh::TriangleBvh(const PointCloud& vertices, const Triangles& faces)
    : vertices_(vertices), faces_(faces) {
    const int m = int(faces_.rows());
    order_.resize(m);
    std::iota(order_.begin(), order_.end(), 0);
    face_boxes_.resize(m);
    centroids_.resize(m);
    for (int f = 0; f < m; ++f) {
        Eigen::AlignedBox3d box;
        for (int k = 0; k < 3; ++k) box.extend(corner(f, k));
        face_boxes_[f] = box;
        centroids_[f] = (corner(f, 0) + corner(f, 1) + corner(f, 2)) / 3.0;
    }
    if (m > 0) {
        nodes_.reserve(2 * m);
        build(0, m);
    }
}

int TriangleBvh::build(int begin, int end) {
    const int index = int(nodes_.size());
    nodes_.emplace_back();
    Eigen::AlignedBox3d box;
    Eigen::AlignedBox3d centroid_box;
    for (int i = begin; i < end; ++i) {
        box.extend(face_boxes_[order_[i]]);
        centroid_box.extend(centroids_[order_[i]]);
    }
    nodes_[index].box = box;
    if (end - begin <= 4) {
        nodes_[index].begin = begin;
        nodes_[index].end = end;
        return index;
    }
    int axis = 0;
    centroid_box.sizes().maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int x, int y) {
        if (centroids_[x][axis] != centroids_[y][axis]) return centroids_[x][axis] < centroids_[y][axis];
        return x < y;
    });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
}

SurfacePoint TriangleBvh::closest_point(const Vec3& query) const {
    if (nodes_.empty()) throw InputError("closest point query on an empty mesh");
    SurfacePoint best;
    best.distance = std::numeric_limits<double>::infinity();
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const Node& node = nodes_[stack.back()];
        stack.pop_back();
        if (node.box.exteriorDistance(query) > best.distance) continue;
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int f = order_[i];
                SurfacePoint cand = closest_point_on_triangle(query, corner(f, 0), corner(f, 1), corner(f, 2));
                if (cand.distance < best.distance || (cand.distance == best.distance && f < best.face)) {
                    cand.face = f;
                    best = cand;
                }
            }
            continue;
        }
        const double dl = nodes_[node.left].box.exteriorDistance(query);
        const double dr = nodes_[node.right].box.exteriorDistance(query);
        // Visit the nearer child first.
        if (dl <= dr) {
            stack.push_back(node.right);
            stack.push_back(node.left);
        } else {
            stack.push_back(node.left);
            stack.push_back(node.right);
        }
    }
    return best;
}

namespace {

bool ray_box(const Eigen::AlignedBox3d& box, const Vec3& origin, const Vec3& inv_dir, double t_min, double t_max) {
    for (int a = 0; a < 3; ++a) {
        double t0 = (box.min()[a] - origin[a]) * inv_dir[a];
        double t1 = (box.max()[a] - origin[a]) * inv_dir[a];
        if (t0 > t1) std::swap(t0, t1);
        // NaN from 0 * inf means the ray lies in the slab plane; keep it.
        if (!(t0 <= t_max)) {
            if (t0 == t0) return false;
        } else {
            t_min = std::max(t_min, t0);
        }
        if (!(t1 >= t_min)) {
            if (t1 == t1) return false;
        } else {
            t_max = std::min(t_max, t1);
        }
        if (t_min > t_max) return false;
    }
    return true;
}

}  // namespace

std::optional<RayHit> TriangleBvh::intersect(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const {
    if (nodes_.empty()) return std::nullopt;
    const Vec3 inv_dir = dir.cwiseInverse();
    std::optional<RayHit> best;
    double limit = t_max;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const Node& node = nodes_[stack.back()];
        stack.pop_back();
        if (!ray_box(node.box, origin, inv_dir, t_min, limit)) continue;
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int f = order_[i];
                auto hit = intersect_triangle(origin, dir, corner(f, 0), corner(f, 1), corner(f, 2), t_min, limit);
                if (!hit) continue;
                if (!best || hit->t < best->t || (hit->t == best->t && f < best->face)) {
                    hit->face = f;
                    best = hit;
                    limit = hit->t;
                }
            }
            continue;
        }
        stack.push_back(node.right);
        stack.push_back(node.left);
    }
    return best;
}

}  // namespace uvatar
