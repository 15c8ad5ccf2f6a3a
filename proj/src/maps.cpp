#include "uvatar/maps.hpp"

#include <algorithm>
#include <cmath>

namespace uvatar {

Palette default_palette() {
    return {
        {"background", false, ""},
        {"skin", false, ""},
        {"hair", false, ""},
        {"upper-garment", true, "arm"},
        {"lower-garment", true, "leg"},
        {"shoes", true, ""},
    };
}

int find_label(const Palette& palette, const std::string& name) {
    for (size_t i = 0; i < palette.size(); ++i) {
        if (palette[i].name == name) return int(i);
    }
    return -1;
}

void TextureMap::canonicalize() {
    for (int t = 0; t < size(); ++t) {
        if (!valid(t)) color.row(t).setZero();
    }
}

bool TextureMap::operator==(const TextureMap& other) const {
    return resolution == other.resolution && color == other.color && (valid == other.valid).all();
}

void SegmentationMap::canonicalize() {
    for (int t = 0; t < size(); ++t) {
        if (!valid(t)) labels(t) = 0;
    }
}

void SegmentationMap::validate() const {
    for (int t = 0; t < size(); ++t) {
        if (valid(t) && (labels(t) < 0 || labels(t) >= num_labels)) {
            throw InputError("segmentation texel " + std::to_string(t) + " has label " + std::to_string(labels(t)) +
                             " outside a palette of " + std::to_string(num_labels));
        }
    }
}

bool SegmentationMap::operator==(const SegmentationMap& other) const {
    return resolution == other.resolution && num_labels == other.num_labels && labels == other.labels &&
           (valid == other.valid).all();
}

Vec3 DisplacementMap::decode(int t) const {
    const Vec3 v = quantized.row(t).cast<double>().transpose() / kQuantMax;
    return scale * (v - offset);
}

void DisplacementMap::encode(int t, const Vec3& value) {
    for (int a = 0; a < 3; ++a) {
        const double v = value[a] / scale + offset[a];
        const double q = std::clamp(std::round(v * kQuantMax), -kQuantMax, kQuantMax);
        quantized(t, a) = static_cast<std::int16_t>(q);
    }
    valid(t) = true;
}

double DisplacementMap::max_decoded_norm() const {
    double best = 0.0;
    for (int t = 0; t < size(); ++t) {
        if (valid(t)) best = std::max(best, decode(t).norm());
    }
    return best;
}

bool DisplacementMap::operator==(const DisplacementMap& other) const {
    return resolution == other.resolution && scale == other.scale && offset == other.offset &&
           quantized == other.quantized && (valid == other.valid).all();
}

}  // namespace uvatar
