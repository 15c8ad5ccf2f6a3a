#pragma once

#include <memory>
#include <string>
#include <vector>

#include "uvatar/maps.hpp"
#include "uvatar/types.hpp"

namespace uvatar {

/// Floating-point image, pixels row-major (index = y * width + x), one column per channel.
struct Image {
    int width = 0;
    int height = 0;
    Eigen::MatrixXd pixels;

    Image() = default;
    Image(int w, int h, int channels) : width(w), height(h), pixels(Eigen::MatrixXd::Zero(Eigen::Index(w) * h, channels)) {}

    int channels() const { return int(pixels.cols()); }
    int size() const { return width * height; }

    /// 8-bit samples scaled to [0, 1].
    static Image from_rgb(const RgbImage& rgb);
    /// height x width grid of one channel.
    static Image from_grid(const Eigen::MatrixXd& grid);
};

/// Texture as an R x R image in [0, 1]; invalid texels are zero.
Image texture_image(const TextureMap& texture);

/// height x width luminance grid (ITU-R BT.601 weights for 3 channels, identity for 1).
Eigen::MatrixXd luma(const Image& image);

/// 2 x 2 mean pooling; an odd trailing row or column is dropped.
Eigen::MatrixXd downsample2(const Eigen::MatrixXd& grid);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double dynamic_range = 1.0;
    double k1 = 0.01;
    double k2 = 0.03;
    std::vector<double> scale_weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

    /// Throws InputError for even windows, bad sigma or weights not summing to 1
    /// (within 1e-3; the standard five weights add up to 1.0001).
    void validate() const;
    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

/// Mean absolute difference over all samples of pixels where `mask` is set
/// (every pixel when `mask` is empty).
double l1(const Image& a, const Image& b, const Mask& mask = Mask());
/// Over texels valid in both maps, channels scaled to [0, 1].
double l1(const TextureMap& a, const TextureMap& b);

struct SsimStats {
    double ssim = 0.0;  // mean of the local SSIM map
    double cs = 0.0;    // mean of the contrast-structure map
};

/// Local statistics with a normalized Gaussian window, averaged over every
/// position where the window fits inside the image.
SsimStats ssim_stats(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const SsimParams& params);

double ssim(const Image& x, const Image& y, const SsimParams& params = {});

/// prod_{j < M} max(cs_j, 0)^{w_j} * max(ssim_M, 0)^{w_M} over M = weights.size()
/// dyadic scales.
double msssim(const Image& x, const Image& y, const SsimParams& params = {});

/// (1 - msssim) / 2.
double dssim(const Image& x, const Image& y, const SsimParams& params = {});

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string name() const = 0;
    /// One feature grid per layer (rows = positions, columns = channels).
    virtual std::vector<Eigen::MatrixXd> features(const Image& image) const = 0;
};

/// Layer k is the image mean-pooled k times (k = 0 .. levels-1), all channels.
class PyramidFeatures final : public FeatureExtractor {
public:
    explicit PyramidFeatures(int levels = 4);
    std::string name() const override { return "pyramid"; }
    std::vector<Eigen::MatrixXd> features(const Image& image) const override;

private:
    int levels_;
};

/// Mean over layers of the mean absolute feature difference.
double perceptual_distance(const Image& x, const Image& y, const FeatureExtractor& extractor);

struct MetricReport {
    double l1 = 0.0;
    double ssim = 0.0;
    double msssim = 0.0;
    double dssim = 0.0;
    double perceptual = 0.0;
};

MetricReport compare_images(const Image& x, const Image& y, const Mask& mask = Mask(), const SsimParams& params = {});

}  // namespace uvatar
