#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

namespace uvatar {

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Affine34 = Eigen::Matrix<Scalar, 3, 4>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
/// Row-per-point storage, one point per row.
template <typename Scalar>
using Points = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

using Vec2 = Vector2<double>;
using Vec3 = Vector3<double>;
using Mat3 = Matrix3<double>;
using PointCloud = Points<double>;
using Triangles = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Base error for everything the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent caller input (bad files, dimension mismatch).
class InputError : public Error {
public:
    using Error::Error;
};

/// Value of a (possibly autodiff) scalar.
inline double scalar_value(double x) { return x; }
template <typename T>
auto scalar_value(const T& x) -> decltype(x.value()) {
    return x.value();
}

/// Dense W×H image with `Channels` samples per pixel, pixel index = y * width + x.
template <typename T, int Channels>
struct Raster {
    using Storage = std::conditional_t<Channels == 1, Eigen::Matrix<T, Eigen::Dynamic, 1>,
                                       Eigen::Matrix<T, Eigen::Dynamic, Channels, Eigen::RowMajor>>;

    int width = 0;
    int height = 0;
    Storage pixels;

    Raster() = default;
    Raster(int w, int h) : width(w), height(h), pixels(Storage::Zero(Eigen::Index(w) * h, Channels)) {}

    int size() const { return width * height; }
    int index(int x, int y) const { return y * width + x; }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

using RgbImage = Raster<std::uint8_t, 3>;
/// Channel 0 = body part (0 = background), channels 1-2 = part-local u, v quantized to 8 bits.
using IuvImage = Raster<std::uint8_t, 3>;
using LabelImage = Raster<std::uint8_t, 1>;
using DepthImage = Raster<double, 1>;

}  // namespace uvatar
