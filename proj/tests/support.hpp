#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "uvatar/body_model.hpp"
#include "uvatar/synth.hpp"
#include "uvatar/uv_atlas.hpp"

namespace uvatar::test {

inline const ModelDescriptor& humanoid() {
    static const ModelDescriptor model = make_humanoid();
    return model;
}

inline const TexelTable& humanoid_table(int resolution) {
    static std::vector<std::pair<int, TexelTable>> cache;
    for (const auto& [r, table] : cache) {
        if (r == resolution) return table;
    }
    cache.emplace_back(resolution, build_texel_table(humanoid().atlas, humanoid().body, resolution));
    return cache.back().second;
}

inline Eigen::VectorXd gaussian_vector(std::mt19937_64& rng, int n, double stddev) {
    std::normal_distribution<double> g(0.0, stddev);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = g(rng);
    return v;
}

inline PointCloud gaussian_points(std::mt19937_64& rng, int n, double stddev) {
    std::normal_distribution<double> g(0.0, stddev);
    PointCloud p(n, 3);
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) p(i, a) = g(rng);
    }
    return p;
}

/// Two joints stacked on the y axis, one triangle; vertex 2 is shared half and half.
inline BodyTemplate toy_chain() {
    BodyTemplate body;
    body.vertices.resize(3, 3);
    body.vertices << 0, 0, 0,
                     0, 1, 0,
                     1, 1, 0;
    body.faces.resize(1, 3);
    body.faces << 0, 1, 2;
    body.skin_weights.resize(3, 2);
    body.skin_weights << 1, 0,
                         0, 1,
                         0.5, 0.5;
    body.joint_regressor = Eigen::MatrixXd::Zero(2, 3);
    body.joint_regressor(0, 0) = 1.0;
    body.joint_regressor(1, 1) = 1.0;
    body.parents = {-1, 0};
    body.shape_basis = Eigen::MatrixXd::Zero(9, 0);
    return body;
}

/// Unit squares in the planes z = depth_k facing +z, one UV chart (and IUV part) each.
inline ModelDescriptor quad_scene(const std::vector<double>& depths) {
    ModelDescriptor s;
    const int q = int(depths.size());
    s.body.vertices.resize(4 * q, 3);
    s.body.faces.resize(2 * q, 3);
    s.atlas.num_charts = q;
    s.atlas.corner_uv.resize(2 * q, 6);
    const double width = 1.0 / q;
    for (int k = 0; k < q; ++k) {
        const double z = depths[k];
        s.body.vertices.block(4 * k, 0, 4, 3) << -0.5, -0.5, z, 0.5, -0.5, z, 0.5, 0.5, z, -0.5, 0.5, z;
        s.body.faces.row(2 * k) << 4 * k, 4 * k + 1, 4 * k + 2;
        s.body.faces.row(2 * k + 1) << 4 * k, 4 * k + 2, 4 * k + 3;
        const double u0 = k * width + 0.05 * width, u1 = (k + 1) * width - 0.05 * width;
        s.atlas.corner_uv.row(2 * k) << u0, 0.05, u1, 0.05, u1, 0.95;
        s.atlas.corner_uv.row(2 * k + 1) << u0, 0.05, u1, 0.95, u0, 0.95;
        s.atlas.face_chart.push_back(k);
        s.atlas.face_chart.push_back(k);
        s.parts.push_back(PartChart{Vec2(u0, 0.05), Vec2(u1 - u0, 0.9)});
    }
    s.body.skin_weights = Eigen::MatrixXd::Ones(4 * q, 1);
    s.body.joint_regressor = Eigen::MatrixXd::Constant(1, 4 * q, 1.0 / (4 * q));
    s.body.parents = {-1};
    s.body.shape_basis = Eigen::MatrixXd::Zero(12 * q, 0);
    s.palette = default_palette();
    return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("uvatar_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace uvatar::test
