#include "uvatar/uv_atlas.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "uvatar/geometry.hpp"

namespace uvatar {

void UvAtlas::validate(int expected_faces) const {
    if (num_faces() != expected_faces) {
        throw InputError("atlas: expected UVs for " + std::to_string(expected_faces) + " faces, got " +
                         std::to_string(num_faces()));
    }
    if (int(face_chart.size()) != num_faces()) throw InputError("atlas: face_chart length differs from face count");
    for (int f = 0; f < num_faces(); ++f) {
        if (face_chart[f] < 0 || face_chart[f] >= num_charts) {
            throw InputError("atlas: face " + std::to_string(f) + " has chart " + std::to_string(face_chart[f]) +
                             " outside [0, " + std::to_string(num_charts) + ")");
        }
        for (int k = 0; k < 6; ++k) {
            const double x = corner_uv(f, k);
            if (!(x >= 0.0 && x <= 1.0)) {
                throw InputError("atlas: face " + std::to_string(f) + " has a UV coordinate outside [0,1]");
            }
        }
    }
}

int TexelTable::num_valid() const {
    return int(std::count_if(face.begin(), face.end(), [](int f) { return f >= 0; }));
}

Mask TexelTable::valid_mask() const {
    Mask m(size());
    for (int t = 0; t < size(); ++t) m(t) = face[t] >= 0;
    return m;
}

Vec3 TexelTable::surface_point(int t, const PointCloud& vertices, const Triangles& faces) const {
    const int f = face[t];
    Vec3 p = Vec3::Zero();
    for (int k = 0; k < 3; ++k) p += barycentric(t, k) * vertices.row(faces(f, k)).transpose();
    return p;
}

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool lex_less(const Vec2& a, const Vec2& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); }

// Signed area term of x against the directed edge p->q. Evaluated from the
// lexicographically smaller endpoint so both faces sharing an edge get
// bit-identical magnitudes with opposite signs.
double edge_function(const Vec2& p, const Vec2& q, const Vec2& x) {
    if (lex_less(p, q)) return cross2(q - p, x - p);
    return -cross2(p - q, x - q);
}

// Half-open rule for a CCW (v-up) directed edge: points exactly on right
// edges and bottom edges belong to the triangle.
bool owns_boundary(const Vec2& p, const Vec2& q) {
    const double dv = q.y() - p.y();
    const double du = q.x() - p.x();
    return dv > 0.0 || (dv == 0.0 && du > 0.0);
}

bool inside(double w, const Vec2& p, const Vec2& q) { return w > 0.0 || (w == 0.0 && owns_boundary(p, q)); }

struct FaceKey {
    std::array<int, 3> v;
    bool operator<(const FaceKey& o) const { return v < o.v; }
};

FaceKey face_key(int a, int b, int c) {
    FaceKey k{{a, b, c}};
    std::sort(k.v.begin(), k.v.end());
    return k;
}

int nearest_valid_texel(const TexelTable& table, const Vec2& uv, int chart) {
    const int r = table.resolution;
    const int x0 = int(std::floor(uv.x() * r));
    const int y0 = int(std::floor((1.0 - uv.y()) * r));
    int best = -1;
    double best_d = 0.0;
    for (int y = y0 - 2; y <= y0 + 2; ++y) {
        for (int x = x0 - 2; x <= x0 + 2; ++x) {
            if (x < 0 || y < 0 || x >= r || y >= r) continue;
            const int t = y * r + x;
            if (!table.valid(t) || table.chart[t] != chart) continue;
            const double d = (texel_center(t, r) - uv).squaredNorm();
            if (best < 0 || d < best_d || (d == best_d && t < best)) {
                best = t;
                best_d = d;
            }
        }
    }
    return best;
}

void compute_mirror(TexelTable& table, const UvAtlas& atlas, const BodyTemplate& body) {
    const std::vector<int> mirror_v = body.mirror_map();
    std::map<FaceKey, int> by_vertices;
    for (int f = 0; f < body.num_faces(); ++f) {
        by_vertices.emplace(face_key(body.faces(f, 0), body.faces(f, 1), body.faces(f, 2)), f);
    }
    const int n = table.size();
    std::vector<int> candidate(n, -1);
    for (int t = 0; t < n; ++t) {
        if (!table.valid(t)) continue;
        const int f = table.face[t];
        std::array<int, 3> m{};
        for (int k = 0; k < 3; ++k) m[k] = mirror_v[body.faces(f, k)];
        const auto it = by_vertices.find(face_key(m[0], m[1], m[2]));
        if (it == by_vertices.end()) continue;
        const int g = it->second;
        Vec2 uv = Vec2::Zero();
        for (int k = 0; k < 3; ++k) {
            int corner = 0;
            while (body.faces(g, corner) != m[k]) ++corner;
            uv += table.barycentric(t, k) * atlas.uv(g, corner);
        }
        const int tt = texel_at(uv, table.resolution);
        if (tt >= 0 && table.valid(tt)) candidate[t] = tt;
    }
    table.mirror.assign(n, -1);
    for (int t = 0; t < n; ++t) {
        const int c = candidate[t];
        if (c >= 0 && candidate[c] == t) table.mirror[t] = c;
    }
}

void compute_seams(TexelTable& table, const UvAtlas& atlas, const BodyTemplate& body) {
    struct Side {
        int face;
        int ca;  // corner of the smaller vertex id
        int cb;
    };
    std::map<std::pair<int, int>, std::vector<Side>> edges;
    for (int f = 0; f < body.num_faces(); ++f) {
        for (int k = 0; k < 3; ++k) {
            const int a = body.faces(f, k);
            const int b = body.faces(f, (k + 1) % 3);
            if (a < b) {
                edges[{a, b}].push_back({f, k, (k + 1) % 3});
            } else {
                edges[{b, a}].push_back({f, (k + 1) % 3, k});
            }
        }
    }
    const int r = table.resolution;
    std::vector<std::pair<int, int>> links;
    for (const auto& [key, sides] : edges) {
        if (sides.size() != 2) continue;
        const Side& s0 = sides[0];
        const Side& s1 = sides[1];
        const Vec2 a0 = atlas.uv(s0.face, s0.ca), b0 = atlas.uv(s0.face, s0.cb);
        const Vec2 a1 = atlas.uv(s1.face, s1.ca), b1 = atlas.uv(s1.face, s1.cb);
        if (a0 == a1 && b0 == b1) continue;  // interior edge of a chart
        const int chart0 = atlas.face_chart[s0.face];
        const int chart1 = atlas.face_chart[s1.face];
        const double len = std::max((b0 - a0).norm(), (b1 - a1).norm()) * r;
        const int samples = std::max(2, int(std::ceil(2.0 * len)) + 1);
        for (int i = 0; i < samples; ++i) {
            const double s = double(i) / (samples - 1);
            const int t0 = nearest_valid_texel(table, a0 + s * (b0 - a0), chart0);
            const int t1 = nearest_valid_texel(table, a1 + s * (b1 - a1), chart1);
            if (t0 < 0 || t1 < 0 || t0 == t1) continue;
            links.emplace_back(std::min(t0, t1), std::max(t0, t1));
        }
    }
    std::sort(links.begin(), links.end());
    links.erase(std::unique(links.begin(), links.end()), links.end());
    table.seam_links = std::move(links);
}

}  // namespace

TexelTable build_texel_table(const UvAtlas& atlas, const BodyTemplate& body, int resolution) {
    if (resolution < 1) throw InputError("texel table resolution must be positive");
    atlas.validate(body.num_faces());
    const int r = resolution;
    TexelTable table;
    table.resolution = r;
    table.face.assign(size_t(r) * r, -1);
    table.chart.assign(size_t(r) * r, -1);
    table.barycentric.setZero(Eigen::Index(r) * r, 3);

    std::vector<std::pair<int, int>> collisions;
    for (int f = 0; f < atlas.num_faces(); ++f) {
        std::array<Vec2, 3> p{atlas.uv(f, 0), atlas.uv(f, 1), atlas.uv(f, 2)};
        std::array<int, 3> corner{0, 1, 2};
        double area2 = cross2(p[1] - p[0], p[2] - p[0]);
        if (area2 == 0.0) continue;
        if (area2 < 0.0) {
            std::swap(p[1], p[2]);
            std::swap(corner[1], corner[2]);
            area2 = -area2;
        }
        const double umin = std::min({p[0].x(), p[1].x(), p[2].x()});
        const double umax = std::max({p[0].x(), p[1].x(), p[2].x()});
        const double vmin = std::min({p[0].y(), p[1].y(), p[2].y()});
        const double vmax = std::max({p[0].y(), p[1].y(), p[2].y()});
        const int x0 = std::max(0, int(std::floor(umin * r - 0.5)));
        const int x1 = std::min(r - 1, int(std::ceil(umax * r - 0.5)));
        const int y0 = std::max(0, int(std::floor((1.0 - vmax) * r - 0.5)));
        const int y1 = std::min(r - 1, int(std::ceil((1.0 - vmin) * r - 0.5)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const int t = y * r + x;
                const Vec2 c = texel_center(t, r);
                const double w0 = edge_function(p[1], p[2], c);
                const double w1 = edge_function(p[2], p[0], c);
                const double w2 = edge_function(p[0], p[1], c);
                if (!inside(w0, p[1], p[2]) || !inside(w1, p[2], p[0]) || !inside(w2, p[0], p[1])) continue;
                if (table.face[t] >= 0) {
                    collisions.emplace_back(table.face[t], f);
                    continue;
                }
                table.face[t] = f;
                table.chart[t] = atlas.face_chart[f];
                const Vec3 w(w0, w1, w2);
                const Vec3 b = w / w.sum();
                for (int k = 0; k < 3; ++k) table.barycentric(t, corner[k]) = b[k];
            }
        }
    }
    if (!collisions.empty()) {
        std::ostringstream msg;
        msg << "atlas charts overlap at resolution " << r << "; colliding faces:";
        for (size_t i = 0; i < std::min<size_t>(collisions.size(), 8); ++i) {
            msg << " (" << collisions[i].first << ", " << collisions[i].second << ")";
        }
        if (collisions.size() > 8) msg << " ... " << collisions.size() << " collisions total";
        throw InputError(msg.str());
    }
    compute_mirror(table, atlas, body);
    compute_seams(table, atlas, body);
    return table;
}

TexelGraph TexelGraph::from_edges(int num_nodes, std::vector<std::pair<int, int>> edges) {
    std::vector<std::pair<int, int>> directed;
    directed.reserve(edges.size() * 2);
    for (const auto& [a, b] : edges) {
        directed.emplace_back(a, b);
        directed.emplace_back(b, a);
    }
    std::sort(directed.begin(), directed.end());
    directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
    TexelGraph g;
    g.offsets.assign(num_nodes + 1, 0);
    for (const auto& [a, b] : directed) ++g.offsets[a + 1];
    for (int i = 0; i < num_nodes; ++i) g.offsets[i + 1] += g.offsets[i];
    g.neighbors.resize(directed.size());
    for (size_t i = 0; i < directed.size(); ++i) g.neighbors[i] = directed[i].second;
    return g;
}

TexelGraph grid_graph(int resolution) {
    const int r = resolution;
    std::vector<std::pair<int, int>> edges;
    edges.reserve(size_t(2) * r * r);
    for (int y = 0; y < r; ++y) {
        for (int x = 0; x < r; ++x) {
            const int t = y * r + x;
            if (x + 1 < r) edges.emplace_back(t, t + 1);
            if (y + 1 < r) edges.emplace_back(t, t + r);
        }
    }
    return TexelGraph::from_edges(r * r, std::move(edges));
}

std::vector<std::pair<int, int>> surface_edges(const TexelTable& table) {
    const int r = table.resolution;
    std::vector<std::pair<int, int>> edges;
    for (int y = 0; y < r; ++y) {
        for (int x = 0; x < r; ++x) {
            const int t = y * r + x;
            if (!table.valid(t)) continue;
            if (x + 1 < r && table.valid(t + 1) && table.chart[t + 1] == table.chart[t]) edges.emplace_back(t, t + 1);
            if (y + 1 < r && table.valid(t + r) && table.chart[t + r] == table.chart[t]) edges.emplace_back(t, t + r);
        }
    }
    edges.insert(edges.end(), table.seam_links.begin(), table.seam_links.end());
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

TexelGraph surface_graph(const TexelTable& table) { return TexelGraph::from_edges(table.size(), surface_edges(table)); }

DisplacementMap bake_displacement(const PointCloud& offsets, const TexelTable& table, const BodyTemplate& body) {
    detail::check_offsets(body, offsets);
    double max_component = 0.0;
    for (int v = 0; v < body.num_vertices(); ++v) {
        const double norm = offsets.row(v).norm();
        if (!std::isfinite(norm)) throw InputError("offset of vertex " + std::to_string(v) + " is not finite");
        if (norm > body.offset_cap * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "offset of vertex " << v << " has magnitude " << norm << " m, above the cap of " << body.offset_cap
                << " m";
            throw InputError(msg.str());
        }
        max_component = std::max(max_component, offsets.row(v).cwiseAbs().maxCoeff());
    }
    DisplacementMap map(table.resolution, std::max(body.offset_cap, max_component));
    for (int t = 0; t < table.size(); ++t) {
        if (!table.valid(t)) continue;
        const int f = table.face[t];
        Vec3 value = Vec3::Zero();
        for (int k = 0; k < 3; ++k) value += table.barycentric(t, k) * offsets.row(body.faces(f, k)).transpose();
        map.encode(t, value);
    }
    return map;
}

RecoveredOffsets apply_displacement(const DisplacementMap& map, const TexelTable& table, const BodyTemplate& body) {
    if (map.resolution != table.resolution) {
        throw InputError("displacement map resolution " + std::to_string(map.resolution) +
                         " does not match texel table resolution " + std::to_string(table.resolution));
    }
    const int n = body.num_vertices();
    // Least-squares fit of the piecewise-linear vertex field to every valid
    // texel; exact (up to quantization) for maps produced by bake_displacement.
    std::vector<int> unknown(n, -1);
    int count = 0;
    for (int t = 0; t < table.size(); ++t) {
        if (!table.valid(t) || !map.valid(t)) continue;
        for (int k = 0; k < 3; ++k) {
            const int v = body.faces(table.face[t], k);
            if (table.barycentric(t, k) > 0.0 && unknown[v] < 0) unknown[v] = count++;
        }
    }
    RecoveredOffsets out;
    out.offsets = PointCloud::Zero(n, 3);
    out.coverage = n > 0 ? double(count) / n : 0.0;
    if (count == 0) return out;

    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(count, 3);
    for (int t = 0; t < table.size(); ++t) {
        if (!table.valid(t) || !map.valid(t)) continue;
        const Vec3 value = map.decode(t);
        for (int i = 0; i < 3; ++i) {
            const double bi = table.barycentric(t, i);
            const int ui = unknown[body.faces(table.face[t], i)];
            if (bi <= 0.0 || ui < 0) continue;
            rhs.row(ui) += bi * value.transpose();
            for (int j = 0; j < 3; ++j) {
                const double bj = table.barycentric(t, j);
                const int uj = unknown[body.faces(table.face[t], j)];
                if (bj <= 0.0 || uj < 0) continue;
                triplets.emplace_back(ui, uj, bi * bj);
            }
        }
    }
    Eigen::SparseMatrix<double> normal(count, count);
    normal.setFromTriplets(triplets.begin(), triplets.end());
    const double ridge = 1e-12 * normal.diagonal().maxCoeff();
    for (int i = 0; i < count; ++i) normal.coeffRef(i, i) += ridge;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(normal);
    if (solver.info() != Eigen::Success) throw Error("displacement decode: normal equations are singular");
    const Eigen::MatrixXd solution = solver.solve(rhs);
    for (int v = 0; v < n; ++v) {
        if (unknown[v] >= 0) out.offsets.row(v) = solution.row(unknown[v]);
    }
    return out;
}

namespace {

void check_iuv_dims(int w, int h, const IuvImage& iuv) {
    if (w != iuv.width || h != iuv.height) {
        std::ostringstream msg;
        msg << "image is " << w << "x" << h << " but the IUV image is " << iuv.width << "x" << iuv.height;
        throw InputError(msg.str());
    }
}

// Texel hit by IUV pixel p, or -1 for background / off-atlas.
int iuv_texel(const IuvImage& iuv, int p, const PartMapping& parts, int resolution) {
    const int part = iuv.pixels(p, 0);
    if (part == 0) return -1;
    if (part > int(parts.size())) {
        throw InputError("IUV pixel (" + std::to_string(p % iuv.width) + ", " + std::to_string(p / iuv.width) +
                         ") references unknown part " + std::to_string(part));
    }
    const Vec2 local(iuv.pixels(p, 1) / 255.0, iuv.pixels(p, 2) / 255.0);
    return texel_at(parts[part - 1].to_atlas(local), resolution);
}

}  // namespace

TextureMap extract_partial_texture(const RgbImage& image, const IuvImage& iuv, const PartMapping& parts,
                                   int resolution) {
    check_iuv_dims(image.width, image.height, iuv);
    const int r = resolution;
    Eigen::Matrix<std::uint64_t, Eigen::Dynamic, 3, Eigen::RowMajor> sum =
        Eigen::Matrix<std::uint64_t, Eigen::Dynamic, 3, Eigen::RowMajor>::Zero(r * r, 3);
    std::vector<std::uint64_t> count(size_t(r) * r, 0);
    for (int p = 0; p < iuv.size(); ++p) {
        const int t = iuv_texel(iuv, p, parts, r);
        if (t < 0) continue;
        for (int c = 0; c < 3; ++c) sum(t, c) += image.pixels(p, c);
        ++count[t];
    }
    TextureMap out(r);
    for (int t = 0; t < r * r; ++t) {
        if (count[t] == 0) continue;
        for (int c = 0; c < 3; ++c) out.color(t, c) = std::uint8_t((sum(t, c) + count[t] / 2) / count[t]);
        out.valid(t) = true;
    }
    return out;
}

SegmentationMap extract_partial_segmentation(const LabelImage& labels, const IuvImage& iuv, const PartMapping& parts,
                                             int resolution, int num_labels) {
    check_iuv_dims(labels.width, labels.height, iuv);
    const int r = resolution;
    Eigen::MatrixXi votes = Eigen::MatrixXi::Zero(r * r, num_labels);
    for (int p = 0; p < iuv.size(); ++p) {
        const int t = iuv_texel(iuv, p, parts, r);
        if (t < 0) continue;
        const int label = labels.pixels(p);
        if (label >= num_labels) {
            throw InputError("label image pixel (" + std::to_string(p % labels.width) + ", " +
                             std::to_string(p / labels.width) + ") has label " + std::to_string(label) +
                             " outside a palette of " + std::to_string(num_labels));
        }
        ++votes(t, label);
    }
    SegmentationMap out(r, num_labels);
    for (int t = 0; t < r * r; ++t) {
        Eigen::Index best = 0;
        const int top = votes.row(t).maxCoeff(&best);  // first maximum = lowest label
        if (top == 0) continue;
        out.labels(t) = int(best);
        out.valid(t) = true;
    }
    return out;
}

ViewLabels backproject_view_to_uv(const Mesh& posed, const Camera& camera, const LabelImage& labels,
                                  const TexelTable& table, int num_labels) {
    const TriangleBvh bvh(posed.vertices, posed.faces);
    const auto normals = face_normals(posed.vertices, posed.faces);
    const Vec3 eye = camera.center();
    ViewLabels out{SegmentationMap(table.resolution, num_labels), Eigen::VectorXd::Zero(table.size())};
    for (int t = 0; t < table.size(); ++t) {
        if (!table.valid(t)) continue;
        const Vec3 p = table.surface_point(t, posed.vertices, posed.faces);
        const Vec3 to_eye = eye - p;
        const double dist = to_eye.norm();
        if (dist <= 0.0) continue;
        const double cosine = normals.row(table.face[t]).dot(to_eye) / dist;
        if (cosine <= 0.0) continue;
        Vec2 px;
        if (!project_point<double>(camera, p, px)) continue;
        const int x = int(std::floor(px.x()));
        const int y = int(std::floor(px.y()));
        if (!labels.contains(x, y)) continue;
        const Vec3 dir = -to_eye / dist;
        if (bvh.intersect(eye, dir, 0.0, dist - 1e-6 - 1e-7 * dist)) continue;  // occluded
        const int label = labels.pixels(labels.index(x, y));
        if (label >= num_labels) {
            throw InputError("label image pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                             ") has label " + std::to_string(label) + " outside the palette");
        }
        out.map.labels(t) = label;
        out.map.valid(t) = true;
        out.weight(t) = cosine;
    }
    return out;
}

}  // namespace uvatar
