#include "uvatar/body_model.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

namespace uvatar {

namespace detail {

void check_pose_shape(const BodyTemplate& body, Eigen::Index pose_size, Eigen::Index shape_size) {
    if (pose_size != body.num_pose_params()) {
        std::ostringstream msg;
        msg << "pose: expected " << body.num_pose_params() << " axis-angle values (3 per joint), got " << pose_size;
        throw InputError(msg.str());
    }
    if (shape_size != body.num_shape()) {
        std::ostringstream msg;
        msg << "shape: expected " << body.num_shape() << " coefficients, got " << shape_size;
        throw InputError(msg.str());
    }
}

void check_offsets(const BodyTemplate& body, const PointCloud& offsets) {
    if (offsets.rows() != body.num_vertices()) {
        std::ostringstream msg;
        msg << "offsets: expected " << body.num_vertices() << " rows, got " << offsets.rows();
        throw InputError(msg.str());
    }
}

}  // namespace detail

std::vector<int> BodyTemplate::mirror_map() const {
    std::vector<int> mirror(num_vertices());
    for (int v = 0; v < num_vertices(); ++v) mirror[v] = v;
    for (const auto& [a, b] : symmetry_pairs) {
        mirror[a] = b;
        mirror[b] = a;
    }
    return mirror;
}

std::vector<int> BodyTemplate::dominant_joint() const {
    std::vector<int> out(num_vertices(), 0);
    for (int v = 0; v < num_vertices(); ++v) {
        Eigen::Index best = 0;
        skin_weights.row(v).maxCoeff(&best);
        out[v] = int(best);
    }
    return out;
}

void BodyTemplate::validate() const {
    const int n = num_vertices();
    const int k = num_joints();
    auto fail = [](const std::string& what) { throw InputError("body template: " + what); };

    if (n == 0) fail("no vertices");
    if (k == 0) fail("no joints");
    if (!vertices.allFinite()) fail("vertices contain non-finite values");
    for (int f = 0; f < num_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            if (faces(f, c) < 0 || faces(f, c) >= n) {
                fail("face " + std::to_string(f) + " references vertex " + std::to_string(faces(f, c)) +
                     " outside [0, " + std::to_string(n) + ")");
            }
        }
    }
    if (skin_weights.rows() != n || skin_weights.cols() != k) fail("skin_weights must be N x K");
    for (int v = 0; v < n; ++v) {
        if ((skin_weights.row(v).array() < 0.0).any()) fail("negative skin weight at vertex " + std::to_string(v));
        if (std::abs(skin_weights.row(v).sum() - 1.0) > 1e-9) {
            fail("skin weights of vertex " + std::to_string(v) + " do not sum to 1");
        }
    }
    if (joint_regressor.rows() != k || joint_regressor.cols() != n) fail("joint_regressor must be K x N");
    for (int j = 0; j < k; ++j) {
        if ((joint_regressor.row(j).array() < 0.0).any()) fail("negative regressor weight for joint " + std::to_string(j));
        if (std::abs(joint_regressor.row(j).sum() - 1.0) > 1e-9) {
            fail("regressor row of joint " + std::to_string(j) + " does not sum to 1");
        }
    }
    if (parents[0] != -1) fail("joint 0 must be the root (parent -1)");
    for (int j = 1; j < k; ++j) {
        if (parents[j] < 0 || parents[j] >= j) {
            fail("parent of joint " + std::to_string(j) + " must precede it (got " + std::to_string(parents[j]) + ")");
        }
    }
    if (shape_basis.rows() != 3 * n) fail("shape_basis must have 3N rows");
    if (has_pose_basis() && (pose_basis.rows() != 3 * n || pose_basis.cols() != 9 * (k - 1))) {
        fail("pose_basis must be 3N x 9(K-1)");
    }
    std::vector<int> mirror(n, -1);
    for (const auto& [a, b] : symmetry_pairs) {
        if (a < 0 || b < 0 || a >= n || b >= n) fail("symmetry pair outside vertex range");
        if ((mirror[a] != -1 && mirror[a] != b) || (mirror[b] != -1 && mirror[b] != a)) {
            fail("symmetry pairing is not an involution at vertex " + std::to_string(a));
        }
        mirror[a] = b;
        mirror[b] = a;
    }
    for (const Limb& limb : limbs) {
        if (limb.chain.size() < 2) fail("limb " + limb.name + " needs at least two joints");
        for (int j : limb.chain) {
            if (j < 0 || j >= k) fail("limb " + limb.name + " references joint " + std::to_string(j));
        }
    }
    for (int j : extremity_joints) {
        if (j < 0 || j >= k) fail("extremity joint " + std::to_string(j) + " out of range");
    }
    if (!(offset_cap > 0.0)) fail("offset cap must be positive");
}

Mesh skin(const BodyTemplate& body, const Eigen::VectorXd& pose, const Eigen::VectorXd& shape,
          const PointCloud& offsets) {
    Mesh mesh;
    mesh.vertices = skin_vertices<double>(body, pose, shape, offsets);
    mesh.faces = body.faces;
    if (!mesh.vertices.allFinite()) throw Error("skinning produced non-finite vertices (degenerate pose or shape?)");
    return mesh;
}

PointCloud zero_offsets(const BodyTemplate& body) { return PointCloud::Zero(body.num_vertices(), 3); }

PointCloud unpose_offsets(const BodyTemplate& body, const Eigen::VectorXd& pose, const Eigen::VectorXd& shape,
                          const PointCloud& posed_delta) {
    detail::check_pose_shape(body, pose.size(), shape.size());
    detail::check_offsets(body, posed_delta);
    const auto kin = forward_kinematics<double>(body, pose, joints<double>(body, shape));
    PointCloud out(body.num_vertices(), 3);
    for (int v = 0; v < body.num_vertices(); ++v) {
        Mat3 r = Mat3::Zero();
        for (int j = 0; j < body.num_joints(); ++j) {
            const double w = body.skin_weights(v, j);
            if (w != 0.0) r += w * kin.skinning[j].leftCols<3>();
        }
        out.row(v) = r.partialPivLu().solve(posed_delta.row(v).transpose()).transpose();
    }
    return out;
}

Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> face_normals(const PointCloud& vertices,
                                                                       const Triangles& faces) {
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> out(faces.rows(), 3);
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const Vec3 a = vertices.row(faces(f, 0));
        const Vec3 b = vertices.row(faces(f, 1));
        const Vec3 c = vertices.row(faces(f, 2));
        const Vec3 n = (b - a).cross(c - a);
        const double len = n.norm();
        out.row(f) = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    }
    return out;
}

PointCloud vertex_normals(const PointCloud& vertices, const Triangles& faces) {
    PointCloud acc = PointCloud::Zero(vertices.rows(), 3);
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const Vec3 a = vertices.row(faces(f, 0));
        const Vec3 b = vertices.row(faces(f, 1));
        const Vec3 c = vertices.row(faces(f, 2));
        const Vec3 n = (b - a).cross(c - a);  // area weighted
        for (int k = 0; k < 3; ++k) acc.row(faces(f, k)) += n.transpose();
    }
    for (Eigen::Index v = 0; v < acc.rows(); ++v) {
        const double len = acc.row(v).norm();
        if (len > 0.0) acc.row(v) /= len;
    }
    return acc;
}

Eigen::VectorXd face_areas(const PointCloud& vertices, const Triangles& faces) {
    Eigen::VectorXd out(faces.rows());
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const Vec3 a = vertices.row(faces(f, 0));
        const Vec3 b = vertices.row(faces(f, 1));
        const Vec3 c = vertices.row(faces(f, 2));
        out(f) = 0.5 * (b - a).cross(c - a).norm();
    }
    return out;
}

double limb_coordinate(const PointCloud& joint_positions, const Limb& limb, const Vec3& p) {
    const auto& chain = limb.chain;
    if (chain.size() < 2) throw InputError("limb " + limb.name + " needs at least two joints");
    std::vector<double> arc(chain.size(), 0.0);
    for (size_t i = 1; i < chain.size(); ++i) {
        arc[i] = arc[i - 1] + (joint_positions.row(chain[i]) - joint_positions.row(chain[i - 1])).norm();
    }
    if (!(arc.back() > 0.0)) throw InputError("limb " + limb.name + " has zero length");
    double best_d = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    for (size_t i = 0; i + 1 < chain.size(); ++i) {
        const Vec3 a = joint_positions.row(chain[i]).transpose();
        const Vec3 b = joint_positions.row(chain[i + 1]).transpose();
        const Vec3 ab = b - a;
        const double len2 = ab.squaredNorm();
        const double s = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        const double d = (a + s * ab - p).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best_s = arc[i] + s * (arc[i + 1] - arc[i]);
        }
    }
    return std::clamp(best_s / arc.back(), 0.0, 1.0);
}

int limb_of_joint(const BodyTemplate& body, int joint) {
    for (size_t l = 0; l < body.limbs.size(); ++l) {
        const auto& chain = body.limbs[l].chain;
        for (size_t i = 0; i + 1 < chain.size(); ++i) {
            if (chain[i] == joint) return int(l);
        }
    }
    return -1;
}

}  // namespace uvatar
