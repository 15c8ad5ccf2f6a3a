#include <doctest.h>

#include <array>
#include <cmath>
#include <map>
#include <set>

#include "support.hpp"

using namespace uvatar;
using test::humanoid;

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool inside_closed(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
    const double d0 = cross2(b - a, p - a);
    const double d1 = cross2(c - b, p - b);
    const double d2 = cross2(a - c, p - c);
    const bool neg = d0 < 0 || d1 < 0 || d2 < 0;
    const bool pos = d0 > 0 || d1 > 0 || d2 > 0;
    return !(neg && pos);
}

UvAtlas single_face_atlas(double u0, double v0, double u1, double v1, double u2, double v2) {
    UvAtlas atlas;
    atlas.num_charts = 1;
    atlas.face_chart = {0};
    atlas.corner_uv.resize(1, 6);
    atlas.corner_uv << u0, v0, u1, v1, u2, v2;
    return atlas;
}

LabelImage constant_labels(int w, int h, int label) {
    LabelImage img(w, h);
    img.pixels.setConstant(std::uint8_t(label));
    return img;
}

}  // namespace

TEST_CASE("rasterizing one triangle at R=4") {
    const BodyTemplate body = test::toy_chain();
    const UvAtlas atlas = single_face_atlas(0, 0, 1, 0, 1, 1);
    const TexelTable table = build_texel_table(atlas, body, 4);
    int expected = 0;
    for (int t = 0; t < 16; ++t) {
        const Vec2 c = texel_center(t, 4);
        const bool below = c.y() < c.x();
        expected += below;
        CHECK(table.valid(t) == below);
    }
    CHECK(expected == 6);
    CHECK(table.num_valid() == 6);
}

TEST_CASE("empty atlas gives an empty table") {
    BodyTemplate body = test::toy_chain();
    body.faces.resize(0, 3);
    UvAtlas atlas;
    const TexelTable table = build_texel_table(atlas, body, 16);
    CHECK(table.num_valid() == 0);
}

TEST_CASE("humanoid coverage matches a brute-force point-in-triangle scan") {
    const ModelDescriptor& model = humanoid();
    const TexelTable& table = test::humanoid_table(256);
    const int r = 256;
    int brute = 0;
    std::vector<std::array<Vec2, 3>> tris;
    for (int f = 0; f < model.atlas.num_faces(); ++f) {
        tris.push_back({model.atlas.uv(f, 0), model.atlas.uv(f, 1), model.atlas.uv(f, 2)});
    }
    int mismatched_face = 0;
    for (int t = 0; t < r * r; ++t) {
        const Vec2 c = texel_center(t, r);
        bool covered = false;
        for (const auto& tri : tris) {
            if (inside_closed(c, tri[0], tri[1], tri[2])) {
                covered = true;
                break;
            }
        }
        brute += covered;
        if (table.valid(t)) {
            const auto& tri = tris[table.face[t]];
            mismatched_face += !inside_closed(c, tri[0], tri[1], tri[2]);
        }
    }
    CHECK(table.num_valid() == brute);
    CHECK(mismatched_face == 0);
    CHECK(double(brute) / (r * r) > 0.5);
}

TEST_CASE("texel table barycentrics reproduce the texel centre") {
    const ModelDescriptor& model = humanoid();
    const TexelTable& table = test::humanoid_table(128);
    double worst = 0.0;
    for (int t = 0; t < table.size(); ++t) {
        if (!table.valid(t)) continue;
        const int f = table.face[t];
        Vec2 uv = Vec2::Zero();
        for (int k = 0; k < 3; ++k) uv += table.barycentric(t, k) * model.atlas.uv(f, k);
        worst = std::max(worst, (uv - texel_center(t, 128)).norm());
        CHECK(table.chart[t] == model.atlas.face_chart[f]);
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("mirror texels are a partial involution across the body's symmetry plane") {
    const ModelDescriptor& model = humanoid();
    const TexelTable& table = test::humanoid_table(128);
    int paired = 0;
    double worst = 0.0;
    for (int t = 0; t < table.size(); ++t) {
        const int m = table.mirror[t];
        if (m < 0) continue;
        REQUIRE(table.valid(t));
        CHECK(table.mirror[m] == t);
        ++paired;
        Vec3 a = table.surface_point(t, model.body.vertices, model.body.faces);
        const Vec3 b = table.surface_point(m, model.body.vertices, model.body.faces);
        a.x() = -a.x();
        worst = std::max(worst, (a - b).norm());
    }
    CHECK(paired > table.num_valid() / 2);
    CHECK(worst < 0.05);
}

TEST_CASE("surface graph is symmetric and stays inside valid texels") {
    const TexelTable& table = test::humanoid_table(64);
    const TexelGraph g = surface_graph(table);
    std::set<std::pair<int, int>> arcs;
    for (int t = 0; t < g.num_nodes(); ++t) {
        for (const int* n = g.begin(t); n != g.end(t); ++n) {
            CHECK(table.valid(t));
            CHECK(table.valid(*n));
            arcs.insert({t, *n});
        }
    }
    for (const auto& [a, b] : arcs) CHECK(arcs.count({b, a}) == 1);
    CHECK(arcs.size() == 2 * surface_edges(table).size());
    CHECK(!table.seam_links.empty());

    const TexelGraph grid = grid_graph(8);
    CHECK(grid.degree(0) == 2);
    CHECK(grid.degree(9) == 4);
    CHECK(grid.degree(7) == 2);
}

TEST_CASE("baking offsets") {
    const ModelDescriptor& model = humanoid();
    const BodyTemplate& body = model.body;
    const TexelTable& table = test::humanoid_table(128);

    SUBCASE("zero offsets") {
        const DisplacementMap map = bake_displacement(zero_offsets(body), table, body);
        CHECK(map.scale == body.offset_cap);
        CHECK(map.quantized.cwiseAbs().maxCoeff() == 0);
        CHECK(map.valid.count() == table.num_valid());
    }
    SUBCASE("constant offsets") {
        const Vec3 c(0.01, -0.02, 0.03);
        PointCloud d(body.num_vertices(), 3);
        d.rowwise() = c.transpose();
        const DisplacementMap map = bake_displacement(d, table, body);
        for (int t = 0; t < table.size(); ++t) {
            if (table.valid(t)) CHECK((map.decode(t) - c).cwiseAbs().maxCoeff() <= map.scale / 32767.0);
        }
    }
    SUBCASE("random offsets equal per-texel barycentric evaluation") {
        std::mt19937_64 rng(2);
        const PointCloud d = test::gaussian_points(rng, body.num_vertices(), 0.03).unaryExpr([](double x) {
            return std::clamp(x, -0.08, 0.08);
        });
        const DisplacementMap map = bake_displacement(d, table, body);
        double worst = 0.0;
        for (int t = 0; t < table.size(); ++t) {
            if (!table.valid(t)) continue;
            const int f = table.face[t];
            Vec3 expected = Vec3::Zero();
            for (int k = 0; k < 3; ++k) expected += table.barycentric(t, k) * d.row(body.faces(f, k)).transpose();
            worst = std::max(worst, (map.decode(t) - expected).cwiseAbs().maxCoeff());
        }
        CHECK(worst <= map.scale / 32767.0);
    }
    SUBCASE("offsets above the cap are rejected") {
        PointCloud d = zero_offsets(body);
        d(0, 0) = 2.0 * body.offset_cap;
        CHECK_THROWS_AS(bake_displacement(d, table, body), InputError);
    }
}

TEST_CASE("applying displacement maps") {
    const ModelDescriptor& model = humanoid();
    const BodyTemplate& body = model.body;
    const TexelTable& table = test::humanoid_table(128);

    DisplacementMap zero(128, body.offset_cap);
    for (int t = 0; t < table.size(); ++t) {
        if (table.valid(t)) zero.encode(t, Vec3::Zero());
    }
    const RecoveredOffsets none = apply_displacement(zero, table, body);
    CHECK(none.offsets.cwiseAbs().maxCoeff() == 0.0);

    const Vec3 c(0.02, 0.0, -0.01);
    DisplacementMap constant(128, body.offset_cap);
    for (int t = 0; t < table.size(); ++t) {
        if (table.valid(t)) constant.encode(t, c);
    }
    const RecoveredOffsets rec = apply_displacement(constant, table, body);
    CHECK(rec.coverage == doctest::Approx(1.0));
    double worst = 0.0;
    for (int v = 0; v < body.num_vertices(); ++v) worst = std::max(worst, (rec.offsets.row(v).transpose() - c).norm());
    CHECK(worst <= 2.0 * constant.scale / 32767.0);

    CHECK_THROWS_AS(apply_displacement(constant, test::humanoid_table(64), body), InputError);
}

TEST_CASE("displacement round trip at R=512") {
    const BodyTemplate& body = humanoid().body;
    const TexelTable& table = test::humanoid_table(512);
    std::mt19937_64 rng(8);
    PointCloud d = test::gaussian_points(rng, body.num_vertices(), 0.05);
    for (int v = 0; v < d.rows(); ++v) {
        const double n = d.row(v).norm();
        if (n > body.offset_cap) d.row(v) *= body.offset_cap / n;
    }
    const DisplacementMap map = bake_displacement(d, table, body);
    const RecoveredOffsets rec = apply_displacement(map, table, body);
    CHECK(rec.coverage == 1.0);
    CHECK((rec.offsets - d).cwiseAbs().maxCoeff() <= 2.0 * map.scale / 65535.0);
}

TEST_CASE("partial texture and segmentation extraction") {
    const ModelDescriptor& model = humanoid();
    const int w = 40, h = 30;
    IuvImage iuv(w, h);
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<int> part(0, int(model.parts.size()));
    for (int p = 0; p < iuv.size(); ++p) {
        iuv.pixels(p, 0) = std::uint8_t(part(rng));
        iuv.pixels(p, 1) = std::uint8_t(byte(rng));
        iuv.pixels(p, 2) = std::uint8_t(byte(rng));
    }
    RgbImage image(w, h);
    image.pixels.col(0).setConstant(10);
    image.pixels.col(1).setConstant(200);
    image.pixels.col(2).setConstant(99);

    SUBCASE("constant image") {
        const TextureMap tex = extract_partial_texture(image, iuv, model.parts, 64);
        CHECK(tex.num_valid() > 0);
        for (int t = 0; t < tex.size(); ++t) {
            if (!tex.valid(t)) continue;
            CHECK(tex.color(t, 0) == 10);
            CHECK(tex.color(t, 1) == 200);
            CHECK(tex.color(t, 2) == 99);
        }
        const SegmentationMap seg = extract_partial_segmentation(constant_labels(w, h, 3), iuv, model.parts, 64, 6);
        CHECK(seg.num_valid() == tex.num_valid());
        for (int t = 0; t < seg.size(); ++t) {
            if (seg.valid(t)) CHECK(seg.labels(t) == 3);
        }
    }

    SUBCASE("majority vote matches a direct count") {
        // Left half label 1, right half label 4; mirror-symmetric correspondences per row.
        LabelImage labels(w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                labels.pixels(labels.index(x, y)) = x < w / 2 ? 1 : 4;
                if (x >= w / 2) {
                    for (int c = 0; c < 3; ++c) iuv.pixels(iuv.index(x, y), c) = iuv.pixels(iuv.index(w - 1 - x, y), c);
                }
            }
        }
        for (int x = 0; x < 3; ++x) iuv.pixels(iuv.index(x, 0), 0) = 1;  // an odd vote out
        const SegmentationMap seg = extract_partial_segmentation(labels, iuv, model.parts, 64, 6);
        std::map<int, std::array<int, 6>> votes;
        for (int p = 0; p < iuv.size(); ++p) {
            const int pi = iuv.pixels(p, 0);
            if (pi == 0) continue;
            const PartChart& chart = model.parts[pi - 1];
            const Vec2 uv = chart.origin + Vec2(iuv.pixels(p, 1) / 255.0 * chart.size.x(),
                                               iuv.pixels(p, 2) / 255.0 * chart.size.y());
            const int t = texel_at(uv, 64);
            if (t < 0) continue;
            votes[t][labels.pixels(p)] += 1;
        }
        int checked = 0;
        for (int t = 0; t < seg.size(); ++t) {
            auto it = votes.find(t);
            CHECK(seg.valid(t) == (it != votes.end()));
            if (it == votes.end()) continue;
            int best = 0;
            for (int l = 1; l < 6; ++l) {
                if (it->second[l] > it->second[best]) best = l;
            }
            CHECK(seg.labels(t) == best);
            ++checked;
        }
        CHECK(checked > 50);
    }

    SUBCASE("no person pixels") {
        iuv.pixels.col(0).setZero();
        CHECK(extract_partial_texture(image, iuv, model.parts, 64).num_valid() == 0);
        CHECK(extract_partial_segmentation(constant_labels(w, h, 1), iuv, model.parts, 64, 6).num_valid() == 0);
    }

    SUBCASE("size mismatch") {
        CHECK_THROWS_AS(extract_partial_texture(RgbImage(w + 1, h), iuv, model.parts, 64), InputError);
    }
}

TEST_CASE("back-projecting labels into UV space") {
    const ModelDescriptor one = test::quad_scene({0.0});
    const TexelTable table = build_texel_table(one.atlas, one.body, 32);
    REQUIRE(table.num_valid() > 0);
    const Mesh mesh{one.body.vertices, one.body.faces};
    const LabelImage labels = constant_labels(256, 256, 2);

    SUBCASE("frontal far camera") {
        const Camera cam = look_at(Vec3(0, 0, 1e4), Vec3::Zero(), 1e6, 256, 256);
        const ViewLabels v = backproject_view_to_uv(mesh, cam, labels, table, 6);
        CHECK(v.map.num_valid() == table.num_valid());
        for (int t = 0; t < table.size(); ++t) {
            if (!table.valid(t)) continue;
            CHECK(v.map.labels(t) == 2);
            CHECK(v.weight(t) == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
    SUBCASE("oblique incidence") {
        const double a = std::acos(0.5);
        const double dist = 1e7;
        const Camera cam = look_at(dist * Vec3(std::sin(a), 0, std::cos(a)), Vec3::Zero(), 1e9, 256, 256);
        const ViewLabels v = backproject_view_to_uv(mesh, cam, labels, table, 6);
        CHECK(v.map.num_valid() == table.num_valid());
        for (int t = 0; t < table.size(); ++t) {
            if (table.valid(t)) CHECK(std::abs(v.weight(t) - 0.5) < 1e-6);
        }
    }
    SUBCASE("back faces and occluded texels are invisible") {
        const Camera behind = look_at(Vec3(0, 0, -5), Vec3::Zero(), 300, 256, 256);
        CHECK(backproject_view_to_uv(mesh, behind, labels, table, 6).map.num_valid() == 0);

        const ModelDescriptor two = test::quad_scene({0.0, -0.5});
        const TexelTable t2 = build_texel_table(two.atlas, two.body, 32);
        const Camera front = look_at(Vec3(0, 0, 5), Vec3::Zero(), 300, 256, 256);
        const ViewLabels v = backproject_view_to_uv(Mesh{two.body.vertices, two.body.faces}, front, labels, t2, 6);
        int front_seen = 0, back_seen = 0;
        for (int t = 0; t < t2.size(); ++t) {
            if (!v.map.valid(t)) continue;
            (t2.chart[t] == 0 ? front_seen : back_seen) += 1;
        }
        CHECK(front_seen > 0);
        CHECK(back_seen == 0);
    }
}
