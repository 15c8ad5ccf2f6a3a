#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uvatar/types.hpp"

namespace uvatar {

/// A chain of joints running from the proximal end of a limb to its distal end
/// (shoulder-elbow-wrist, hip-knee-ankle). `group` ties the limb to garment labels.
struct Limb {
    std::string name;
    std::string group;
    std::vector<int> chain;
};

/// Rest-pose body mesh plus everything needed to shape and pose it.
///
/// Shape and pose bases are stored flattened: row 3*v + axis holds the
/// displacement of vertex v along that axis for one unit of the coefficient.
struct BodyTemplate {
    PointCloud vertices;
    Triangles faces;
    Eigen::MatrixXd skin_weights;     // N x K, rows sum to 1
    Eigen::MatrixXd joint_regressor;  // K x N, rows sum to 1
    std::vector<int> parents;         // parents[0] == -1, parents[k] < k
    Eigen::MatrixXd shape_basis;      // 3N x S
    Eigen::MatrixXd pose_basis;       // 3N x 9(K-1), or empty
    std::vector<std::pair<int, int>> symmetry_pairs;
    std::vector<Limb> limbs;
    std::vector<int> extremity_joints;  // hands and feet
    double offset_cap = 0.15;

    int num_vertices() const { return int(vertices.rows()); }
    int num_faces() const { return int(faces.rows()); }
    int num_joints() const { return int(parents.size()); }
    int num_shape() const { return int(shape_basis.cols()); }
    int num_pose_params() const { return 3 * num_joints(); }
    bool has_pose_basis() const { return pose_basis.size() > 0; }

    /// Vertex -> mirrored vertex (identity for vertices on the symmetry plane).
    std::vector<int> mirror_map() const;
    /// Joint with the largest skin weight for each vertex.
    std::vector<int> dominant_joint() const;

    /// Throws InputError naming the first violated invariant.
    void validate() const;
};

struct Mesh {
    PointCloud vertices;
    Triangles faces;
};

/// Axis-angle to rotation matrix. Uses a series expansion near zero so that
/// derivatives stay finite for autodiff scalars.
template <typename Scalar>
Matrix3<Scalar> rodrigues(const Vector3<Scalar>& w) {
    using std::cos;
    using std::sin;
    using std::sqrt;
    const Scalar theta2 = w.squaredNorm();
    Scalar a, b;
    if (scalar_value(theta2) < 1e-8) {
        a = Scalar(1.0) - theta2 / 6.0 + theta2 * theta2 / 120.0;
        b = Scalar(0.5) - theta2 / 24.0 + theta2 * theta2 / 720.0;
    } else {
        const Scalar theta = sqrt(theta2);
        a = sin(theta) / theta;
        b = (Scalar(1.0) - cos(theta)) / theta2;
    }
    Matrix3<Scalar> k;
    k << Scalar(0.0), -w.z(), w.y(),
         w.z(), Scalar(0.0), -w.x(),
         -w.y(), w.x(), Scalar(0.0);
    Matrix3<Scalar> r = Matrix3<Scalar>::Identity();
    r += a * k;
    r += b * (k * k);
    return r;
}

namespace detail {

void check_pose_shape(const BodyTemplate& body, Eigen::Index pose_size, Eigen::Index shape_size);
void check_offsets(const BodyTemplate& body, const PointCloud& offsets);

}  // namespace detail

/// J(beta): joint positions of the unposed, shaped body (K x 3).
template <typename Scalar>
Points<Scalar> joints(const BodyTemplate& body, const VectorX<Scalar>& shape) {
    detail::check_pose_shape(body, body.num_pose_params(), shape.size());
    const int n = body.num_vertices();
    const int k = body.num_joints();
    Points<Scalar> out = Points<Scalar>::Zero(k, 3);
    for (int j = 0; j < k; ++j) {
        for (int v = 0; v < n; ++v) {
            const double w = body.joint_regressor(j, v);
            if (w == 0.0) continue;
            for (int a = 0; a < 3; ++a) {
                Scalar x = Scalar(body.vertices(v, a));
                for (int s = 0; s < body.num_shape(); ++s) {
                    x += body.shape_basis(3 * v + a, s) * shape(s);
                }
                out(j, a) += w * x;
            }
        }
    }
    return out;
}

/// T + B_s beta + B_p(theta) + D, before skinning.
template <typename Scalar>
Points<Scalar> morph(const BodyTemplate& body, const VectorX<Scalar>& pose, const VectorX<Scalar>& shape,
                     const PointCloud& offsets) {
    detail::check_pose_shape(body, pose.size(), shape.size());
    detail::check_offsets(body, offsets);
    const int n = body.num_vertices();
    Points<Scalar> out(n, 3);
    for (int v = 0; v < n; ++v) {
        for (int a = 0; a < 3; ++a) {
            Scalar x = Scalar(body.vertices(v, a) + offsets(v, a));
            for (int s = 0; s < body.num_shape(); ++s) {
                x += body.shape_basis(3 * v + a, s) * shape(s);
            }
            out(v, a) = x;
        }
    }
    if (body.has_pose_basis()) {
        const int k = body.num_joints();
        VectorX<Scalar> features(9 * (k - 1));
        for (int j = 1; j < k; ++j) {
            const Matrix3<Scalar> r = rodrigues<Scalar>(pose.template segment<3>(3 * j));
            for (int row = 0; row < 3; ++row) {
                for (int col = 0; col < 3; ++col) {
                    features(9 * (j - 1) + 3 * row + col) = r(row, col) - (row == col ? 1.0 : 0.0);
                }
            }
        }
        for (int v = 0; v < n; ++v) {
            for (int a = 0; a < 3; ++a) {
                Scalar x = out(v, a);
                for (Eigen::Index f = 0; f < features.size(); ++f) {
                    const double b = body.pose_basis(3 * v + a, f);
                    if (b != 0.0) x += b * features(f);
                }
                out(v, a) = x;
            }
        }
    }
    return out;
}

/// World transforms of every joint after forward kinematics.
template <typename Scalar>
struct Kinematics {
    Points<Scalar> posed_joints;                 // K x 3
    std::vector<Affine34<Scalar>> skinning;      // maps rest-space points to posed space
};

/// Forward kinematics: each joint rotates about its own rest position and
/// inherits its parent's world transform.
template <typename Scalar>
Kinematics<Scalar> forward_kinematics(const BodyTemplate& body, const VectorX<Scalar>& pose,
                                      const Points<Scalar>& rest_joints) {
    const int k = body.num_joints();
    std::vector<Matrix3<Scalar>> rot(k);
    std::vector<Vector3<Scalar>> trans(k);
    std::vector<Vector3<Scalar>> offset(k);
    Kinematics<Scalar> out;
    out.posed_joints.resize(k, 3);
    out.skinning.resize(k);
    for (int j = 0; j < k; ++j) {
        const Matrix3<Scalar> local = rodrigues<Scalar>(pose.template segment<3>(3 * j));
        const Vector3<Scalar> rest = rest_joints.row(j).transpose();
        const int p = body.parents[j];
        const Vector3<Scalar> pivot = rest - local * rest;
        if (p < 0) {
            rot[j] = local;
            trans[j] = rest;
            offset[j] = pivot;
        } else {
            const Vector3<Scalar> bone = rest - rest_joints.row(p).transpose();
            rot[j] = rot[p] * local;
            trans[j] = rot[p] * bone + trans[p];
            offset[j] = rot[p] * pivot + offset[p];
        }
        out.posed_joints.row(j) = trans[j].transpose();
        out.skinning[j].template leftCols<3>() = rot[j];
        out.skinning[j].col(3) = offset[j];
    }
    return out;
}

/// Linear blend skinning of already-morphed vertices, accumulated as
/// p + sum_j w_j ((R_j - I) p + t_j) so the rest pose reproduces p bit for bit.
template <typename Scalar>
Points<Scalar> blend(const BodyTemplate& body, const Points<Scalar>& morphed,
                     const std::vector<Affine34<Scalar>>& transforms) {
    const int n = body.num_vertices();
    const int k = body.num_joints();
    Points<Scalar> out = Points<Scalar>::Zero(n, 3);
    for (int v = 0; v < n; ++v) {
        Affine34<Scalar> m = Affine34<Scalar>::Zero();
        for (int j = 0; j < k; ++j) {
            const double w = body.skin_weights(v, j);
            if (w == 0.0) continue;
            Affine34<Scalar> d = transforms[j];
            for (int a = 0; a < 3; ++a) d(a, a) -= 1.0;
            m += w * d;
        }
        const Vector3<Scalar> p = morphed.row(v).transpose();
        out.row(v) = (p + m.template leftCols<3>() * p + m.col(3)).transpose();
    }
    return out;
}

/// Posed vertex positions M(theta, beta, D) for any scalar type.
template <typename Scalar>
Points<Scalar> skin_vertices(const BodyTemplate& body, const VectorX<Scalar>& pose, const VectorX<Scalar>& shape,
                             const PointCloud& offsets) {
    const Points<Scalar> morphed = morph<Scalar>(body, pose, shape, offsets);
    const Points<Scalar> rest_joints = joints<Scalar>(body, shape);
    const Kinematics<Scalar> kin = forward_kinematics<Scalar>(body, pose, rest_joints);
    return blend<Scalar>(body, morphed, kin.skinning);
}

/// Posed joint positions J(theta, beta).
template <typename Scalar>
Points<Scalar> posed_joints(const BodyTemplate& body, const VectorX<Scalar>& pose, const VectorX<Scalar>& shape) {
    detail::check_pose_shape(body, pose.size(), shape.size());
    return forward_kinematics<Scalar>(body, pose, joints<Scalar>(body, shape)).posed_joints;
}

/// Posed mesh; throws Error when the result is not finite.
Mesh skin(const BodyTemplate& body, const Eigen::VectorXd& pose, const Eigen::VectorXd& shape,
          const PointCloud& offsets);

/// Zero offsets sized for `body`.
PointCloud zero_offsets(const BodyTemplate& body);

/// Maps posed-space deltas back into template space by inverting each vertex's
/// blended rotation, i.e. the D for which skin(theta, beta, D) - skin(theta, beta, 0) == delta.
PointCloud unpose_offsets(const BodyTemplate& body, const Eigen::VectorXd& pose, const Eigen::VectorXd& shape,
                          const PointCloud& posed_delta);

/// Normalized arc length (0 at chain.front(), 1 at chain.back()) of the point
/// on the joint polyline closest to p.
double limb_coordinate(const PointCloud& joint_positions, const Limb& limb, const Vec3& p);

/// Index into body.limbs of the limb whose proximal segment `joint` drives, or -1.
/// The distal joint of a chain (wrist, ankle) belongs to no limb.
int limb_of_joint(const BodyTemplate& body, int joint);

Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> face_normals(const PointCloud& vertices,
                                                                       const Triangles& faces);
PointCloud vertex_normals(const PointCloud& vertices, const Triangles& faces);
Eigen::VectorXd face_areas(const PointCloud& vertices, const Triangles& faces);

}  // namespace uvatar
