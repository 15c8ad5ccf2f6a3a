#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uvatar/types.hpp"

namespace uvatar {

/// Texel index t = y * R + x, image row y = 0 at the top (v = 1).
inline Vec2 texel_center(int t, int resolution) {
    const int x = t % resolution;
    const int y = t / resolution;
    return Vec2((x + 0.5) / resolution, 1.0 - (y + 0.5) / resolution);
}

/// Texel containing `uv`, or -1 when outside the unit square.
inline int texel_at(const Vec2& uv, int resolution) {
    const double fx = uv.x() * resolution;
    const double fy = (1.0 - uv.y()) * resolution;
    if (!(fx >= 0.0) || !(fy >= 0.0) || fx >= resolution || fy >= resolution) return -1;
    return int(fy) * resolution + int(fx);
}

struct LabelInfo {
    std::string name;
    bool garment = false;
    std::string limb_group;  // limbs a garment covers ("arm", "leg"), empty if none
};

using Palette = std::vector<LabelInfo>;

/// background, skin, hair, upper-garment, lower-garment, shoes.
Palette default_palette();
/// Index of the label called `name`, or -1.
int find_label(const Palette& palette, const std::string& name);

/// 8-bit RGB texture in UV space with a validity mask.
struct TextureMap {
    using Colors = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 3, Eigen::RowMajor>;

    int resolution = 0;
    Colors color;
    Mask valid;

    TextureMap() = default;
    explicit TextureMap(int r) : resolution(r), color(Colors::Zero(r * r, 3)), valid(Mask::Constant(r * r, false)) {}

    int size() const { return resolution * resolution; }
    int num_valid() const { return int(valid.count()); }
    /// Zeroes invalid texels (canonical form).
    void canonicalize();
    bool operator==(const TextureMap& other) const;
};

struct SegmentationMap {
    int resolution = 0;
    int num_labels = 0;
    Eigen::VectorXi labels;
    Mask valid;

    SegmentationMap() = default;
    SegmentationMap(int r, int label_count)
        : resolution(r), num_labels(label_count), labels(Eigen::VectorXi::Zero(r * r)),
          valid(Mask::Constant(r * r, false)) {}

    int size() const { return resolution * resolution; }
    int num_valid() const { return int(valid.count()); }
    void canonicalize();
    /// Throws InputError when a valid label falls outside the palette.
    void validate() const;
    bool operator==(const SegmentationMap& other) const;
};

/// Three-channel offsets stored as signed 16-bit values v in [-1, 1]
/// (v = q / 32767); the decoded offset is scale * (v - offset).
struct DisplacementMap {
    using Quantized = Eigen::Matrix<std::int16_t, Eigen::Dynamic, 3, Eigen::RowMajor>;
    static constexpr double kQuantMax = 32767.0;

    int resolution = 0;
    double scale = 1.0;
    Vec3 offset = Vec3::Zero();
    Quantized quantized;
    Mask valid;

    DisplacementMap() = default;
    DisplacementMap(int r, double s)
        : resolution(r), scale(s), quantized(Quantized::Zero(r * r, 3)), valid(Mask::Constant(r * r, false)) {}

    int size() const { return resolution * resolution; }
    Vec3 decode(int t) const;
    /// Quantizes `value` into texel t and marks it valid.
    void encode(int t, const Vec3& value);
    /// Largest per-vertex offset the map can represent.
    double max_decoded_norm() const;
    bool operator==(const DisplacementMap& other) const;
};

}  // namespace uvatar
