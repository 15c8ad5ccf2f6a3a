#include "uvatar/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "uvatar/completion.hpp"

namespace uvatar {

namespace {

constexpr double kPi = std::numbers::pi;

// One capped tube. Ring i sits at start + t[i] * (end - start); vertex j of a
// ring is centre + ra sin(phi_j) e1 - rb cos(phi_j) e2 with phi_j = 2 pi j / n.
struct TubeSpec {
    Vec3 start;
    Vec3 end;
    Vec3 e1;
    Vec3 e2;
    std::vector<double> t;
    std::vector<double> ra;
    std::vector<double> rb;
    double dome_start = 0.4;  // cap height as a fraction of the ring radius
    double dome_end = 0.4;
    int segments = 16;
    int chart = 0;
    bool central = false;     // symmetric about x = 0, built ring-mirrored
    std::vector<int> joints;  // skin-weight candidates
};

struct BuiltTube {
    int first = 0;      // first vertex
    int rings = 0;
    int segments = 0;
    int cap_start = 0;  // cap centre vertices
    int cap_end = 0;
    int face_begin = 0;
    int face_end = 0;
    int ring_vertex(int i, int j) const { return first + i * segments + j; }
};

struct Cell {
    Vec2 origin;
    double size;
    Vec2 at(double u, double v) const { return origin + size * Vec2(u, v); }
};

constexpr double kStripU0 = 0.04;
constexpr double kStripU1 = 0.96;
constexpr double kStripV0 = 0.04;
constexpr double kStripV1 = 0.56;
constexpr double kCapRadius = 0.2;
constexpr double kCapV = 0.78;

Vec3 mirror_x(const Vec3& p) { return Vec3(-p.x(), p.y(), p.z()); }

class Builder {
public:
    std::vector<Vec3> vertices;
    std::vector<Vec3> radial;  // offset from the tube axis, for the girth basis
    std::vector<int> vertex_part;
    std::vector<std::array<int, 3>> faces;
    std::vector<std::array<Vec2, 3>> uvs;
    std::vector<int> face_chart;
    std::vector<std::pair<int, int>> symmetry;

    BuiltTube add_tube(const TubeSpec& s, const Cell& cell) {
        const int n = s.segments;
        const int m = int(s.t.size());
        BuiltTube b;
        b.first = int(vertices.size());
        b.rings = m;
        b.segments = n;
        const Vec3 axis = (s.end - s.start).normalized();
        for (int i = 0; i < m; ++i) {
            const Vec3 c = s.start + s.t[i] * (s.end - s.start);
            std::vector<Vec3> ring(n);
            for (int j = 0; j < n; ++j) {
                if (s.central && j > n / 2) {
                    ring[j] = mirror_x(ring[n - j]);
                    continue;
                }
                const double phi = 2.0 * kPi * j / n;
                ring[j] = c + s.ra[i] * std::sin(phi) * s.e1 - s.rb[i] * std::cos(phi) * s.e2;
                if (s.central && (j == 0 || j == n / 2)) ring[j].x() = 0.0;
            }
            for (int j = 0; j < n; ++j) {
                vertices.push_back(ring[j]);
                radial.push_back(ring[j] - c);
                vertex_part.push_back(s.chart);
            }
            if (s.central) {
                for (int j = 1; j < n / 2; ++j) symmetry.emplace_back(b.first + i * n + j, b.first + i * n + n - j);
            }
        }
        const Vec3 c0 = s.start + s.t.front() * (s.end - s.start);
        const Vec3 c1 = s.start + s.t.back() * (s.end - s.start);
        const double r0 = 0.5 * (s.ra.front() + s.rb.front());
        const double r1 = 0.5 * (s.ra.back() + s.rb.back());
        b.cap_start = int(vertices.size());
        vertices.push_back(c0 - s.dome_start * r0 * axis);
        b.cap_end = int(vertices.size());
        vertices.push_back(c1 + s.dome_end * r1 * axis);
        for (int k = 0; k < 2; ++k) {
            radial.push_back(Vec3::Zero());
            vertex_part.push_back(s.chart);
        }
        if (s.central) {
            vertices[b.cap_start].x() = 0.0;
            vertices[b.cap_end].x() = 0.0;
        }

        b.face_begin = int(faces.size());
        auto strip_uv = [&](int i, int j) {
            return cell.at(kStripU0 + (kStripU1 - kStripU0) * j / n, kStripV0 + (kStripV1 - kStripV0) * i / (m - 1));
        };
        auto cap_uv = [&](double cu, int j) {
            const double phi = 2.0 * kPi * j / n;
            return cell.at(cu + kCapRadius * std::sin(phi), kCapV + kCapRadius * std::cos(phi));
        };
        for (int i = 0; i + 1 < m; ++i) {
            for (int j = 0; j < n; ++j) {
                const int jn = (j + 1) % n;
                const int a = b.ring_vertex(i, j), bb = b.ring_vertex(i, jn);
                const int c = b.ring_vertex(i + 1, jn), d = b.ring_vertex(i + 1, j);
                const Vec2 ua = strip_uv(i, j), ub = strip_uv(i, j + 1);
                const Vec2 uc = strip_uv(i + 1, j + 1), ud = strip_uv(i + 1, j);
                // Mirror-symmetric triangulation: the diagonal flips halfway round.
                if (j < n / 2) {
                    add_face({a, bb, c}, {ua, ub, uc}, s.chart);
                    add_face({a, c, d}, {ua, uc, ud}, s.chart);
                } else {
                    add_face({a, bb, d}, {ua, ub, ud}, s.chart);
                    add_face({bb, c, d}, {ub, uc, ud}, s.chart);
                }
            }
        }
        const Vec2 centre0 = cell.at(0.25, kCapV);
        const Vec2 centre1 = cell.at(0.75, kCapV);
        for (int j = 0; j < n; ++j) {
            const int jn = (j + 1) % n;
            add_face({b.cap_start, b.ring_vertex(0, jn), b.ring_vertex(0, j)}, {centre0, cap_uv(0.25, j + 1), cap_uv(0.25, j)},
                     s.chart);
            add_face({b.cap_end, b.ring_vertex(m - 1, j), b.ring_vertex(m - 1, jn)},
                     {centre1, cap_uv(0.75, j), cap_uv(0.75, j + 1)}, s.chart);
        }
        b.face_end = int(faces.size());
        orient_outward(b, s);
        return b;
    }

    // Appends the mirror image (x -> -x) of `src`, placed in `cell`.
    BuiltTube add_mirror(const BuiltTube& src, const Cell& src_cell, const Cell& cell, int chart) {
        BuiltTube b = src;
        const int shift = int(vertices.size()) - src.first;
        const int count = src.rings * src.segments + 2;
        for (int v = src.first; v < src.first + count; ++v) {
            vertices.push_back(mirror_x(vertices[v]));
            radial.push_back(mirror_x(radial[v]));
            vertex_part.push_back(chart);
            symmetry.emplace_back(v, v + shift);
        }
        b.first += shift;
        b.cap_start += shift;
        b.cap_end += shift;
        b.face_begin = int(faces.size());
        auto reflect = [&](const Vec2& uv) {
            return Vec2(cell.origin.x() + src_cell.size - (uv.x() - src_cell.origin.x()),
                        cell.origin.y() + (uv.y() - src_cell.origin.y()));
        };
        for (int f = src.face_begin; f < src.face_end; ++f) {
            const auto face = faces[f];
            const auto uv = uvs[f];
            add_face({face[0] + shift, face[2] + shift, face[1] + shift}, {reflect(uv[0]), reflect(uv[2]), reflect(uv[1])},
                     chart);
        }
        b.face_end = int(faces.size());
        return b;
    }

private:
    void add_face(std::array<int, 3> f, std::array<Vec2, 3> uv, int chart) {
        faces.push_back(f);
        uvs.push_back(uv);
        face_chart.push_back(chart);
    }

    void orient_outward(const BuiltTube& b, const TubeSpec& s) {
        const Vec3 axis = (s.end - s.start).normalized();
        for (int f = b.face_begin; f < b.face_end; ++f) {
            auto& face = faces[f];
            const Vec3 p0 = vertices[face[0]], p1 = vertices[face[1]], p2 = vertices[face[2]];
            const Vec3 normal = (p1 - p0).cross(p2 - p0);
            Vec3 outward;
            if (face[0] == b.cap_start) {
                outward = -axis;
            } else if (face[0] == b.cap_end) {
                outward = axis;
            } else {
                const Vec3 centroid = (p0 + p1 + p2) / 3.0;
                const Vec3 rel = centroid - s.start;
                outward = rel - rel.dot(axis) * axis;
            }
            if (normal.dot(outward) < 0.0) {
                std::swap(face[1], face[2]);
                std::swap(uvs[f][1], uvs[f][2]);
            }
        }
    }
};

std::vector<double> ts_from(const std::vector<double>& positions, double a, double b) {
    std::vector<double> t;
    for (double p : positions) t.push_back((p - a) / (b - a));
    return t;
}

std::vector<double> scaled(std::vector<double> r, double s) {
    for (double& x : r) x *= s;
    return r;
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double s = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (a + s * ab - p).norm();
}

struct Skeleton {
    std::vector<Vec3> joint;
    std::vector<Vec3> bone_end;
    std::vector<int> parents;
};

void finish_template(BodyTemplate& body, UvAtlas& atlas, const Builder& b, const Skeleton& skel,
                     const std::vector<std::pair<int, std::vector<int>>>& regressor_rings,
                     const std::vector<std::vector<int>>& part_joints, double falloff) {
    const int n = int(b.vertices.size());
    const int k = int(skel.parents.size());
    body.vertices.resize(n, 3);
    for (int v = 0; v < n; ++v) body.vertices.row(v) = b.vertices[v].transpose();
    body.faces.resize(int(b.faces.size()), 3);
    atlas.corner_uv.resize(int(b.faces.size()), 6);
    for (size_t f = 0; f < b.faces.size(); ++f) {
        for (int c = 0; c < 3; ++c) {
            body.faces(f, c) = b.faces[f][c];
            atlas.corner_uv(f, 2 * c) = b.uvs[f][c].x();
            atlas.corner_uv(f, 2 * c + 1) = b.uvs[f][c].y();
        }
    }
    atlas.face_chart = b.face_chart;
    body.parents = skel.parents;
    body.symmetry_pairs = b.symmetry;

    body.skin_weights = Eigen::MatrixXd::Zero(n, k);
    for (int v = 0; v < n; ++v) {
        const auto& candidates = part_joints[b.vertex_part[v]];
        double total = 0.0;
        for (int j : candidates) {
            const double d = segment_distance(b.vertices[v], skel.joint[j], skel.bone_end[j]);
            const double w = std::exp(-0.5 * (d * d) / (falloff * falloff));
            body.skin_weights(v, j) = w;
            total += w;
        }
        body.skin_weights.row(v) /= total;
    }
    body.joint_regressor = Eigen::MatrixXd::Zero(k, n);
    for (const auto& [joint, ring] : regressor_rings) {
        for (int v : ring) body.joint_regressor(joint, v) = 1.0 / double(ring.size());
    }
}

std::vector<int> ring_of(const BuiltTube& t, int i) {
    std::vector<int> out;
    for (int j = 0; j < t.segments; ++j) out.push_back(t.ring_vertex(i, j));
    return out;
}

ModelDescriptor make_chain(const HumanoidSpec& spec) {
    const double h = spec.height;
    const double g = spec.girth;
    const int n = spec.torso_segments;
    TubeSpec tube;
    tube.start = Vec3(0, 0, 0);
    tube.end = Vec3(0, h, 0);
    tube.e1 = Vec3::UnitX();
    tube.e2 = Vec3::UnitZ();
    tube.t = {0.0, 0.25, 0.5, 0.75, 1.0};
    tube.ra = scaled({0.1, 0.1, 0.1, 0.1, 0.1}, g * h);
    tube.rb = tube.ra;
    tube.segments = n;
    tube.chart = 0;
    tube.central = true;
    Builder b;
    const Cell cell{Vec2(0, 0), 1.0};
    const BuiltTube t = b.add_tube(tube, cell);

    Skeleton skel;
    skel.joint = {Vec3(0, 0, 0), Vec3(0, 0.5 * h, 0)};
    skel.bone_end = {Vec3(0, 0.5 * h, 0), Vec3(0, h, 0)};
    skel.parents = {-1, 0};

    ModelDescriptor model;
    finish_template(model.body, model.atlas, b, skel, {{0, ring_of(t, 0)}, {1, ring_of(t, 2)}}, {{0, 1}},
                    spec.falloff * h);
    model.atlas.num_charts = 1;
    model.parts = {PartChart{Vec2(0, 0), Vec2(1, 1)}};
    const int nv = model.body.num_vertices();
    model.body.shape_basis = Eigen::MatrixXd::Zero(3 * nv, 2);
    for (int v = 0; v < nv; ++v) {
        model.body.shape_basis(3 * v + 1, 0) = 0.1 * b.vertices[v].y();
        for (int a = 0; a < 3; ++a) model.body.shape_basis(3 * v + a, 1) = 0.1 * b.radial[v][a];
    }
    model.palette = default_palette();
    return model;
}

}  // namespace

ModelDescriptor make_humanoid(const HumanoidSpec& spec) {
    if (!(spec.height > 0.0) || !(spec.girth > 0.0) || !(spec.falloff > 0.0)) {
        throw InputError("humanoid: height, girth and falloff must be positive");
    }
    if (!(spec.jitter >= 0.0 && spec.jitter < 0.5)) throw InputError("humanoid: jitter must lie in [0, 0.5)");
    for (int segs : {spec.limb_segments, spec.torso_segments}) {
        if (segs < 6 || segs % 2 != 0) throw InputError("humanoid: ring segment counts must be even and at least 6");
    }
    if (spec.num_joints == 2) return make_chain(spec);
    if (spec.num_joints != 16) throw InputError("humanoid: num_joints must be 16 or 2");

    const double h = spec.height;
    const double g = spec.girth * h;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    auto stretch = [&]() { return 1.0 + spec.jitter * unit(rng); };
    const double upper_arm = 0.27 * stretch();
    const double forearm = 0.25 * stretch();
    const double thigh = 0.42 * stretch();
    const double shin = 0.40 * stretch();

    // Rest joints (T-pose), left side; the right side mirrors them.
    const double shoulder_x = 0.19, arm_y = 1.40;
    const double elbow_x = shoulder_x + upper_arm;
    const double wrist_x = elbow_x + forearm;
    const double hand_tip_x = wrist_x + 0.17;
    const double hip_x = 0.10, hip_y = 0.92;
    const double knee_y = hip_y - thigh;
    const double ankle_y = knee_y - shin;
    const double foot_y = ankle_y - 0.03;

    Skeleton skel;
    skel.parents = {-1, 0, 1, 2, 1, 4, 5, 1, 7, 8, 0, 10, 11, 0, 13, 14};
    skel.joint.resize(16);
    skel.bone_end.resize(16);
    skel.joint[0] = Vec3(0, 0.95, 0);
    skel.joint[1] = Vec3(0, 1.20, 0);
    skel.joint[2] = Vec3(0, 1.45, 0);
    skel.joint[3] = Vec3(0, 1.55, 0);
    skel.joint[4] = Vec3(shoulder_x, arm_y, 0);
    skel.joint[5] = Vec3(elbow_x, arm_y, 0);
    skel.joint[6] = Vec3(wrist_x, arm_y, 0);
    skel.joint[10] = Vec3(hip_x, hip_y, 0);
    skel.joint[11] = Vec3(hip_x, knee_y, 0);
    skel.joint[12] = Vec3(hip_x, ankle_y, 0);
    skel.bone_end[0] = skel.joint[1];
    skel.bone_end[1] = skel.joint[2];
    skel.bone_end[2] = skel.joint[3];
    skel.bone_end[3] = Vec3(0, 1.80, 0);
    skel.bone_end[4] = skel.joint[5];
    skel.bone_end[5] = skel.joint[6];
    skel.bone_end[6] = Vec3(hand_tip_x, arm_y, 0);
    skel.bone_end[10] = skel.joint[11];
    skel.bone_end[11] = skel.joint[12];
    skel.bone_end[12] = Vec3(hip_x, foot_y, 0.17);
    for (int l : {4, 5, 6, 10, 11, 12}) {
        const int r = l + 3;
        skel.joint[r] = mirror_x(skel.joint[l]);
        skel.bone_end[r] = mirror_x(skel.bone_end[l]);
    }
    for (int j = 0; j < 16; ++j) {
        skel.joint[j] *= h;
        skel.bone_end[j] *= h;
    }

    const int nt = spec.torso_segments;
    const int nl = spec.limb_segments;
    const Vec3 X = Vec3::UnitX(), Y = Vec3::UnitY(), Z = Vec3::UnitZ();
    auto cell_of = [](int chart) {
        const int row = chart / 4, col = chart % 4;
        return Cell{Vec2(0.25 * col, 1.0 - 0.25 * (row + 1)), 0.25};
    };
    auto make = [&](Vec3 start, Vec3 end, Vec3 e1, Vec3 e2, const std::vector<double>& positions, double a, double b,
                    std::vector<double> ra, std::vector<double> rb, int segs, int chart, bool central) {
        TubeSpec s;
        s.start = h * start;
        s.end = h * end;
        s.e1 = e1;
        s.e2 = e2;
        s.t = ts_from(positions, a, b);
        s.ra = scaled(std::move(ra), g);
        s.rb = scaled(std::move(rb), g);
        s.segments = segs;
        s.chart = chart;
        s.central = central;
        return s;
    };

    Builder b;
    const BuiltTube torso = b.add_tube(make(Vec3(0, 0.85, 0), Vec3(0, 1.45, 0), X, Z,
                                            {0.85, 0.95, 1.05, 1.20, 1.32, 1.40, 1.45}, 0.85, 1.45,
                                            {0.15, 0.16, 0.15, 0.17, 0.18, 0.16, 0.065},
                                            {0.11, 0.11, 0.10, 0.11, 0.11, 0.10, 0.055}, nt, kTorso, true),
                                       cell_of(kTorso));
    TubeSpec head_spec = make(Vec3(0, 1.47, 0), Vec3(0, 1.77, 0), X, Z, {1.47, 1.55, 1.62, 1.70, 1.77}, 1.47, 1.77,
                              {0.055, 0.085, 0.095, 0.09, 0.065}, {0.06, 0.095, 0.105, 0.10, 0.07}, nt, kHead, true);
    head_spec.dome_start = 0.3;
    head_spec.dome_end = 0.8;
    const BuiltTube head = b.add_tube(head_spec, cell_of(kHead));

    const double ex = elbow_x, wx = wrist_x;
    const TubeSpec upper_arm_spec =
        make(Vec3(0.13, arm_y, 0), Vec3(ex, arm_y, 0), Y, Z,
             {0.13, shoulder_x, 0.27, (0.27 + ex) / 2 + 0.01, ex - 0.04, ex}, 0.13, ex,
             {0.055, 0.055, 0.05, 0.047, 0.045, 0.044}, {0.055, 0.055, 0.05, 0.047, 0.045, 0.044}, nl, kLeftUpperArm,
             false);
    const TubeSpec forearm_spec =
        make(Vec3(ex - 0.02, arm_y, 0), Vec3(wx, arm_y, 0), Y, Z,
             {ex - 0.02, ex + 0.04, ex + 0.11, wx - 0.07, wx}, ex - 0.02, wx, {0.043, 0.042, 0.039, 0.036, 0.033},
             {0.043, 0.042, 0.039, 0.036, 0.033}, nl, kLeftForearm, false);
    const TubeSpec hand_spec = make(Vec3(wx - 0.01, arm_y, 0), Vec3(hand_tip_x, arm_y, 0), Y, Z,
                                    {wx - 0.01, wx + 0.04, wx + 0.10, hand_tip_x}, wx - 0.01, hand_tip_x,
                                    {0.022, 0.025, 0.024, 0.018}, {0.035, 0.042, 0.04, 0.03}, nl, kLeftHand, false);
    const double ky = knee_y, ay = ankle_y;
    const TubeSpec thigh_spec =
        make(Vec3(hip_x, 0.97, 0), Vec3(hip_x, ky, 0), X, Z, {0.97, hip_y, 0.80, 0.68, ky + 0.08, ky}, 0.97, ky,
             {0.075, 0.08, 0.072, 0.064, 0.057, 0.052}, {0.075, 0.08, 0.072, 0.064, 0.057, 0.052}, nl, kLeftThigh,
             false);
    const TubeSpec shin_spec = make(Vec3(hip_x, ky + 0.02, 0), Vec3(hip_x, ay, 0), X, Z,
                                    {ky + 0.02, ky - 0.08, ky - 0.18, ay + 0.12, ay + 0.04, ay}, ky + 0.02, ay,
                                    {0.052, 0.05, 0.045, 0.038, 0.035, 0.034},
                                    {0.052, 0.05, 0.045, 0.038, 0.035, 0.034}, nl, kLeftShin, false);
    const TubeSpec foot_spec =
        make(Vec3(hip_x, foot_y, -0.05), Vec3(hip_x, foot_y, 0.19), X, Y, {-0.05, 0.02, 0.09, 0.15, 0.19}, -0.05, 0.19,
             {0.04, 0.042, 0.043, 0.04, 0.03}, {0.035, 0.033, 0.03, 0.025, 0.02}, nl, kLeftFoot, false);

    std::vector<std::pair<int, std::vector<int>>> regressor = {
        {0, ring_of(torso, 1)}, {1, ring_of(torso, 3)}, {2, ring_of(torso, 6)}, {3, ring_of(head, 1)}};
    for (const auto& [left_spec, right_chart] :
         std::vector<std::pair<TubeSpec, int>>{{upper_arm_spec, kRightUpperArm}, {forearm_spec, kRightForearm},
                                               {hand_spec, kRightHand}, {thigh_spec, kRightThigh},
                                               {shin_spec, kRightShin}, {foot_spec, kRightFoot}}) {
        const BuiltTube left = b.add_tube(left_spec, cell_of(left_spec.chart));
        const BuiltTube right = b.add_mirror(left, cell_of(left_spec.chart), cell_of(right_chart), right_chart);
        auto add_ring = [&](int joint, int ring) {
            regressor.push_back({joint, ring_of(left, ring)});
            regressor.push_back({joint + 3, ring_of(right, ring)});
        };
        switch (left_spec.chart) {
            case kLeftUpperArm:
                add_ring(4, 1);
                add_ring(5, left.rings - 1);
                break;
            case kLeftForearm:
                add_ring(6, left.rings - 1);
                break;
            case kLeftThigh:
                add_ring(10, 1);
                add_ring(11, left.rings - 1);
                break;
            case kLeftShin:
                add_ring(12, left.rings - 1);
                break;
            default:
                break;
        }
    }

    std::vector<std::vector<int>> part_joints(kNumHumanoidParts);
    part_joints[kTorso] = {0, 1, 2};
    part_joints[kHead] = {2, 3};
    part_joints[kLeftUpperArm] = {4, 5};
    part_joints[kRightUpperArm] = {7, 8};
    part_joints[kLeftForearm] = {4, 5, 6};
    part_joints[kRightForearm] = {7, 8, 9};
    part_joints[kLeftHand] = {5, 6};
    part_joints[kRightHand] = {8, 9};
    part_joints[kLeftThigh] = {10, 11};
    part_joints[kRightThigh] = {13, 14};
    part_joints[kLeftShin] = {10, 11, 12};
    part_joints[kRightShin] = {13, 14, 15};
    part_joints[kLeftFoot] = {11, 12};
    part_joints[kRightFoot] = {14, 15};

    ModelDescriptor model;
    BodyTemplate& body = model.body;
    finish_template(body, model.atlas, b, skel, regressor, part_joints, spec.falloff * h);
    model.atlas.num_charts = kNumHumanoidParts;
    for (int c = 0; c < kNumHumanoidParts; ++c) {
        const Cell cell = cell_of(c);
        model.parts.push_back(PartChart{cell.origin, Vec2(cell.size, cell.size)});
    }

    // Shape basis: height, girth, arm length, leg length (0.1 per unit).
    const int nv = body.num_vertices();
    body.shape_basis = Eigen::MatrixXd::Zero(3 * nv, 4);
    for (int v = 0; v < nv; ++v) {
        const Vec3& p = b.vertices[v];
        const int part = b.vertex_part[v];
        body.shape_basis(3 * v + 1, 0) = 0.1 * p.y();
        for (int a = 0; a < 3; ++a) body.shape_basis(3 * v + a, 1) = 0.1 * b.radial[v][a];
        const bool arm = part >= kLeftUpperArm && part <= kRightHand;
        const bool leg = part >= kLeftThigh;
        if (arm) {
            const double sx = p.x() > 0 ? skel.joint[4].x() : skel.joint[7].x();
            body.shape_basis(3 * v, 2) = 0.1 * (p.x() - sx);
        }
        if (leg) body.shape_basis(3 * v + 1, 3) = 0.1 * (p.y() - skel.joint[10].y());
    }
    body.limbs = {{"left_arm", "arm", {4, 5, 6}},
                  {"right_arm", "arm", {7, 8, 9}},
                  {"left_leg", "leg", {10, 11, 12}},
                  {"right_leg", "leg", {13, 14, 15}}};
    body.extremity_joints = {6, 9, 12, 15};
    model.palette = default_palette();
    model.validate();
    return model;
}

namespace {

class LabelRule {
public:
    LabelRule(const ModelDescriptor& model, const GarmentStyle& style)
        : model_(model), style_(style), rest_joints_(joints<double>(model.body, Eigen::VectorXd::Zero(model.body.num_shape()))) {
        const Palette& p = model.palette;
        skin_ = find_label(p, "skin");
        hair_ = find_label(p, "hair");
        upper_ = find_label(p, "upper-garment");
        lower_ = find_label(p, "lower-garment");
        shoes_ = find_label(p, "shoes");
        if (std::min({skin_, hair_, upper_, lower_, shoes_}) < 0) {
            throw InputError("garment labels need a palette with skin, hair, upper-garment, lower-garment and shoes");
        }
    }

    int operator()(int face, const Vec3& bary) const {
        const BodyTemplate& body = model_.body;
        Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(body.num_joints());
        Vec3 p = Vec3::Zero();
        for (int k = 0; k < 3; ++k) {
            const int v = body.faces(face, k);
            w += bary[k] * body.skin_weights.row(v);
            p += bary[k] * body.vertices.row(v).transpose();
        }
        Eigen::Index joint = 0;
        w.maxCoeff(&joint);
        const int limb = limb_of_joint(body, int(joint));
        if (limb >= 0) {
            const Limb& l = body.limbs[limb];
            const double s = limb_coordinate(rest_joints_, l, p);
            if (l.group == "arm") return s < style_.sleeve ? upper_ : skin_;
            if (l.group == "leg") return s < style_.pant ? lower_ : skin_;
            return skin_;
        }
        const int chart = model_.atlas.face_chart[face];
        if (model_.atlas.num_charts != kNumHumanoidParts) {
            return p.y() >= rest_joints_(body.num_joints() - 1, 1) ? upper_ : lower_;
        }
        switch (chart) {
            case kTorso: {
                const double y0 = rest_joints_(0, 1), y1 = rest_joints_(1, 1);
                return p.y() >= y0 + style_.waist * (y1 - y0) ? upper_ : lower_;
            }
            case kHead: {
                const double scale = rest_joints_(3, 1) / 1.55;
                const double above = p.y() - rest_joints_(3, 1);
                const bool top = above > 0.11 * scale;
                const bool back = p.z() < -0.02 * scale && above > 0.01 * scale;
                return style_.hair && (top || back) ? hair_ : skin_;
            }
            case kLeftFoot:
            case kRightFoot:
                return shoes_;
            default:
                return skin_;
        }
    }

private:
    const ModelDescriptor& model_;
    GarmentStyle style_;
    PointCloud rest_joints_;
    int skin_, hair_, upper_, lower_, shoes_;
};

}  // namespace

int garment_label(const ModelDescriptor& model, const GarmentStyle& style, int face, const Vec3& bary) {
    return LabelRule(model, style)(face, bary);
}

SegmentationMap reference_segmentation(const ModelDescriptor& model, const TexelTable& table,
                                       const GarmentStyle& style) {
    const LabelRule rule(model, style);
    SegmentationMap seg(table.resolution, int(model.palette.size()));
    for (int t = 0; t < table.size(); ++t) {
        if (!table.valid(t)) continue;
        seg.labels(t) = rule(table.face[t], table.barycentric.row(t).transpose());
        seg.valid(t) = true;
    }
    return seg;
}

Eigen::VectorXi vertex_labels(const ModelDescriptor& model, const GarmentStyle& style) {
    const LabelRule rule(model, style);
    const BodyTemplate& body = model.body;
    Eigen::VectorXi out = Eigen::VectorXi::Constant(body.num_vertices(), find_label(model.palette, "skin"));
    std::vector<bool> done(body.num_vertices(), false);
    for (int f = 0; f < body.num_faces(); ++f) {
        for (int k = 0; k < 3; ++k) {
            const int v = body.faces(f, k);
            if (done[v]) continue;
            out(v) = rule(f, Vec3::Unit(k));
            done[v] = true;
        }
    }
    return out;
}

TextureMap procedural_texture(const TexelTable& table, const SegmentationMap& seg, const TextureStyle& style) {
    if (seg.resolution != table.resolution) throw InputError("procedural texture: segmentation resolution mismatch");
    if (style.stripe_period < 0) throw InputError("procedural texture: stripe period must be non-negative");
    std::mt19937_64 rng(style.seed);
    std::uniform_int_distribution<int> channel(40, 215);
    std::vector<std::array<int, 3>> base(seg.num_labels);
    std::vector<std::array<int, 3>> stripe(seg.num_labels);
    for (int l = 0; l < seg.num_labels; ++l) {
        for (int c = 0; c < 3; ++c) {
            base[l][c] = channel(rng);
            stripe[l][c] = 255 - base[l][c];
        }
    }
    if (seg.num_labels > 1) base[1] = {224, 172, 138};  // skin
    if (seg.num_labels > 2) base[2] = {58, 40, 30};     // hair

    const int r = table.resolution;
    TextureMap tex(r);
    std::uniform_int_distribution<int> noise(-12, 12);
    for (int t = 0; t < table.size(); ++t) {
        if (!table.valid(t) || !seg.valid(t)) continue;
        const int label = seg.labels(t);
        const int y = t / r;
        const bool striped = style.stripe_period > 0 && label == 3 && (y / style.stripe_period) % 2 == 1;
        const auto& color = striped ? stripe[label] : base[label];
        for (int c = 0; c < 3; ++c) {
            const int value = style.symmetric ? color[c] : color[c] + noise(rng);
            tex.color(t, c) = std::uint8_t(std::clamp(value, 0, 255));
        }
        tex.valid(t) = true;
    }
    if (style.symmetric) {
        for (int t = 0; t < table.size(); ++t) {
            const int m = table.mirror[t];
            if (m >= 0 && m < t && tex.valid(m) && tex.valid(t)) tex.color.row(t) = tex.color.row(m);
        }
    }
    return BaselineCompletion().complete_texture(tex, table);
}

PointCloud clothing_offsets(const ModelDescriptor& model, const GarmentStyle& style) {
    const Eigen::VectorXi labels = vertex_labels(model, style);
    const PointCloud normals = vertex_normals(model.body.vertices, model.body.faces);
    const Palette& p = model.palette;
    std::vector<double> thickness(p.size(), 0.0);
    auto set = [&](const char* name, double value) {
        const int l = find_label(p, name);
        if (l >= 0) thickness[l] = value;
    };
    set("hair", 0.012);
    set("upper-garment", 0.008);
    set("lower-garment", 0.012);
    set("shoes", 0.006);
    PointCloud out = PointCloud::Zero(model.body.num_vertices(), 3);
    for (int v = 0; v < model.body.num_vertices(); ++v) out.row(v) = thickness[labels(v)] * normals.row(v);
    return out;
}

PointCloud synth_scan(const BodyTemplate& body, const Eigen::VectorXd& pose, const Eigen::VectorXd& shape,
                      const PointCloud& offsets, int num_points, double noise, std::uint64_t seed) {
    if (num_points < 1) throw InputError("scan: need at least one point");
    if (!(noise >= 0.0)) throw InputError("scan: noise must be non-negative");
    const Mesh mesh = skin(body, pose, shape, offsets);
    const Eigen::VectorXd areas = face_areas(mesh.vertices, mesh.faces);
    std::vector<double> cumulative(areas.size());
    double total = 0.0;
    for (Eigen::Index f = 0; f < areas.size(); ++f) {
        total += areas(f);
        cumulative[f] = total;
    }
    if (!(total > 0.0)) throw InputError("scan: mesh has zero area");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, noise > 0.0 ? noise : 1.0);
    PointCloud points(num_points, 3);
    for (int i = 0; i < num_points; ++i) {
        const double pick = unit(rng) * total;
        const int f = int(std::min<std::ptrdiff_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin(), areas.size() - 1));
        const double r1 = std::sqrt(unit(rng));
        const double r2 = unit(rng);
        const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        Vec3 p = (1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c;
        if (noise > 0.0) {
            for (int k = 0; k < 3; ++k) p[k] += gauss(rng);
        }
        points.row(i) = p.transpose();
    }
    return points;
}

namespace {

int clamped_texel(const Vec2& uv, int r) {
    const int x = std::clamp(int(std::floor(uv.x() * r)), 0, r - 1);
    const int y = std::clamp(int(std::floor((1.0 - uv.y()) * r)), 0, r - 1);
    return y * r + x;
}

std::uint8_t quantize_unit(double x) { return std::uint8_t(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); }

}  // namespace

RenderOutput render(const Mesh& mesh, const ModelDescriptor& model, const TextureMap& texture,
                    const SegmentationMap& seg, const Camera& camera) {
    camera.validate();
    if (camera.width <= 0 || camera.height <= 0) throw InputError("render: camera " + camera.id + " has no image size");
    const TriangleBvh bvh(mesh.vertices, mesh.faces);
    RenderOutput out;
    out.camera = camera;
    out.color = RgbImage(camera.width, camera.height);
    out.iuv = IuvImage(camera.width, camera.height);
    out.labels = LabelImage(camera.width, camera.height);
    out.depth = DepthImage(camera.width, camera.height);
    const Vec3 eye = camera.center();
    const Vec3 axis = camera.optical_axis();
    const double inf = std::numeric_limits<double>::infinity();
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const int p = out.iuv.index(x, y);
            const Vec3 dir = camera.ray_direction(x + 0.5, y + 0.5);
            const auto hit = bvh.intersect(eye, dir, 0.0, inf);
            if (!hit) {
                out.depth.pixels(p) = inf;
                continue;
            }
            Vec2 uv = Vec2::Zero();
            for (int k = 0; k < 3; ++k) uv += hit->barycentric[k] * model.atlas.uv(hit->face, k);
            const int chart = model.atlas.face_chart[hit->face];
            const PartChart& part = model.parts[chart];
            const Vec2 local = part.to_local(uv);
            const std::uint8_t qu = quantize_unit(local.x());
            const std::uint8_t qv = quantize_unit(local.y());
            out.iuv.pixels(p, 0) = std::uint8_t(chart + 1);
            out.iuv.pixels(p, 1) = qu;
            out.iuv.pixels(p, 2) = qv;
            const Vec2 stored = part.to_atlas(Vec2(qu / 255.0, qv / 255.0));
            if (texture.resolution > 0) {
                const int t = clamped_texel(stored, texture.resolution);
                out.color.pixels.row(p) = texture.color.row(t);
            }
            if (seg.resolution > 0) {
                const int t = clamped_texel(stored, seg.resolution);
                out.labels.pixels(p) = seg.valid(t) ? std::uint8_t(seg.labels(t)) : 0;
            }
            out.depth.pixels(p) = hit->t * dir.dot(axis);
        }
    }
    return out;
}

std::vector<Camera> camera_ring(const RingSpec& spec) {
    if (spec.count < 1) throw InputError("camera ring: need at least one camera");
    if (!(spec.radius > 0.0) || !(spec.focal > 0.0)) throw InputError("camera ring: radius and focal must be positive");
    std::vector<Camera> cams;
    for (int i = 0; i < spec.count; ++i) {
        const double yaw = spec.yaw_center + (i - (spec.count - 1) / 2.0) * spec.yaw_range / spec.count;
        const Vec3 eye(spec.target.x() + spec.radius * std::sin(yaw), spec.height,
                       spec.target.z() + spec.radius * std::cos(yaw));
        Camera cam = look_at(eye, spec.target, spec.focal, spec.width, spec.height_px);
        cam.id = "cam" + std::to_string(i);
        cams.push_back(cam);
    }
    return cams;
}

}  // namespace uvatar
