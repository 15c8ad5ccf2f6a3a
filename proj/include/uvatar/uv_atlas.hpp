#pragma once

#include <utility>
#include <vector>

#include "uvatar/body_model.hpp"
#include "uvatar/camera.hpp"
#include "uvatar/maps.hpp"
#include "uvatar/types.hpp"

namespace uvatar {

/// Per-face, per-corner UV coordinates plus the chart each face belongs to.
struct UvAtlas {
    using CornerUv = Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor>;

    int num_charts = 0;
    std::vector<int> face_chart;
    CornerUv corner_uv;  // u0 v0 u1 v1 u2 v2

    int num_faces() const { return int(corner_uv.rows()); }
    Vec2 uv(int face, int corner) const { return Vec2(corner_uv(face, 2 * corner), corner_uv(face, 2 * corner + 1)); }
    void validate(int expected_faces) const;
};

/// Affine map from a body part's local chart coordinates ([0,1]^2, as carried
/// by IUV images) into the global atlas.
struct PartChart {
    Vec2 origin = Vec2::Zero();
    Vec2 size = Vec2::Ones();

    Vec2 to_atlas(const Vec2& local) const { return origin + local.cwiseProduct(size); }
    Vec2 to_local(const Vec2& uv) const { return (uv - origin).cwiseQuotient(size); }
};

/// Index p - 1 holds the chart for IUV part p.
using PartMapping = std::vector<PartChart>;

/// Rasterized atlas: which surface point every texel centre lands on.
struct TexelTable {
    using Barycentrics = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

    int resolution = 0;
    std::vector<int> face;    // -1 where no triangle covers the texel centre
    std::vector<int> chart;   // -1 where invalid
    Barycentrics barycentric;
    std::vector<int> mirror;  // symmetric texel, -1 when there is none
    std::vector<std::pair<int, int>> seam_links;  // unordered pairs, first < second

    int size() const { return resolution * resolution; }
    bool valid(int t) const { return face[t] >= 0; }
    int num_valid() const;
    Mask valid_mask() const;
    /// Surface point of texel t on an arbitrary embedding of the template's vertices.
    Vec3 surface_point(int t, const PointCloud& vertices, const Triangles& faces) const;
};

/// Rasterizes the atlas at R x R with a half-open (bottom-right) fill rule.
/// Throws InputError when two faces claim the same texel.
TexelTable build_texel_table(const UvAtlas& atlas, const BodyTemplate& body, int resolution);

/// Compressed adjacency over all R*R texels.
struct TexelGraph {
    std::vector<int> offsets;
    std::vector<int> neighbors;

    int num_nodes() const { return int(offsets.size()) - 1; }
    int degree(int t) const { return offsets[t + 1] - offsets[t]; }
    const int* begin(int t) const { return neighbors.data() + offsets[t]; }
    const int* end(int t) const { return neighbors.data() + offsets[t + 1]; }

    static TexelGraph from_edges(int num_nodes, std::vector<std::pair<int, int>> edges);
};

/// 4-neighbourhood over every texel of an R x R grid.
TexelGraph grid_graph(int resolution);
/// Surface adjacency: 4-neighbours that are both valid and in the same chart, plus seam links.
TexelGraph surface_graph(const TexelTable& table);
/// Unordered edges of the surface graph (first < second).
std::vector<std::pair<int, int>> surface_edges(const TexelTable& table);

DisplacementMap bake_displacement(const PointCloud& offsets, const TexelTable& table, const BodyTemplate& body);

struct RecoveredOffsets {
    PointCloud offsets;
    double coverage = 0.0;  // fraction of vertices supported by at least one valid texel
};

RecoveredOffsets apply_displacement(const DisplacementMap& map, const TexelTable& table, const BodyTemplate& body);

TextureMap extract_partial_texture(const RgbImage& image, const IuvImage& iuv, const PartMapping& parts,
                                   int resolution);

SegmentationMap extract_partial_segmentation(const LabelImage& labels, const IuvImage& iuv, const PartMapping& parts,
                                             int resolution, int num_labels);

struct ViewLabels {
    SegmentationMap map;
    Eigen::VectorXd weight;  // per texel, 0 where not visible
};

/// Projects every valid texel of the posed surface into the camera and samples
/// the label image where the texel is visible and front-facing.
ViewLabels backproject_view_to_uv(const Mesh& posed, const Camera& camera, const LabelImage& labels,
                                  const TexelTable& table, int num_labels);

}  // namespace uvatar
