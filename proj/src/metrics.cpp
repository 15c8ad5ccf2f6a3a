#include "uvatar/metrics.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace uvatar {

Image Image::from_rgb(const RgbImage& rgb) {
    Image out(rgb.width, rgb.height, 3);
    out.pixels = rgb.pixels.cast<double>() / 255.0;
    return out;
}

Image Image::from_grid(const Eigen::MatrixXd& grid) {
    Image out(int(grid.cols()), int(grid.rows()), 1);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) out.pixels(Eigen::Index(y) * out.width + x, 0) = grid(y, x);
    }
    return out;
}

Image texture_image(const TextureMap& texture) {
    Image out(texture.resolution, texture.resolution, 3);
    for (int t = 0; t < texture.size(); ++t) {
        if (texture.valid(t)) out.pixels.row(t) = texture.color.row(t).cast<double>() / 255.0;
    }
    return out;
}

Eigen::MatrixXd luma(const Image& image) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw InputError("luma: expected 1 or 3 channels, got " + std::to_string(image.channels()));
    }
    Eigen::MatrixXd grid(image.height, image.width);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const Eigen::Index i = Eigen::Index(y) * image.width + x;
            grid(y, x) = image.channels() == 1 ? image.pixels(i, 0)
                                               : 0.299 * image.pixels(i, 0) + 0.587 * image.pixels(i, 1) +
                                                     0.114 * image.pixels(i, 2);
        }
    }
    return grid;
}

Eigen::MatrixXd downsample2(const Eigen::MatrixXd& grid) {
    const Eigen::Index h = grid.rows() / 2;
    const Eigen::Index w = grid.cols() / 2;
    Eigen::MatrixXd out(h, w);
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            out(y, x) = 0.25 * (grid(2 * y, 2 * x) + grid(2 * y, 2 * x + 1) + grid(2 * y + 1, 2 * x) +
                                grid(2 * y + 1, 2 * x + 1));
        }
    }
    return out;
}

void SsimParams::validate() const {
    if (window < 1 || window % 2 == 0) throw InputError("ssim: window size must be odd and positive");
    if (!(sigma > 0.0)) throw InputError("ssim: window sigma must be positive");
    if (!(dynamic_range > 0.0)) throw InputError("ssim: dynamic range must be positive");
    if (scale_weights.empty()) throw InputError("ssim: at least one scale weight is required");
    const double sum = std::accumulate(scale_weights.begin(), scale_weights.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-3) throw InputError("ssim: scale weights must sum to 1 (within 1e-3)");
    for (double w : scale_weights) {
        if (!(w >= 0.0)) throw InputError("ssim: scale weights must be non-negative");
    }
}

double l1(const Image& a, const Image& b, const Mask& mask) {
    if (a.width != b.width || a.height != b.height || a.channels() != b.channels()) {
        throw InputError("l1: image shapes differ (" + std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                         std::to_string(a.channels()) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height) + "x" + std::to_string(b.channels()) + ")");
    }
    if (mask.size() == 0) {
        if (a.pixels.size() == 0) throw InputError("l1: empty images");
        return (a.pixels - b.pixels).cwiseAbs().mean();
    }
    if (mask.size() != a.size()) throw InputError("l1: mask size differs from the image size");
    double sum = 0.0;
    Eigen::Index count = 0;
    for (int i = 0; i < a.size(); ++i) {
        if (!mask(i)) continue;
        sum += (a.pixels.row(i) - b.pixels.row(i)).cwiseAbs().sum();
        count += a.channels();
    }
    if (count == 0) throw InputError("l1: mask selects no pixels");
    return sum / double(count);
}

double l1(const TextureMap& a, const TextureMap& b) {
    if (a.resolution != b.resolution) throw InputError("l1: texture resolutions differ");
    return l1(texture_image(a), texture_image(b), a.valid && b.valid);
}

namespace {

Eigen::VectorXd gaussian_window(int size, double sigma) {
    Eigen::VectorXd w(size);
    const int half = size / 2;
    for (int i = 0; i < size; ++i) w(i) = std::exp(-0.5 * double((i - half) * (i - half)) / (sigma * sigma));
    return w / w.sum();
}

// Separable "valid" correlation.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& img, const Eigen::VectorXd& w) {
    const Eigen::Index k = w.size();
    const Eigen::Index oh = img.rows() - k + 1;
    const Eigen::Index ow = img.cols() - k + 1;
    Eigen::MatrixXd rows(img.rows(), ow);
    for (Eigen::Index y = 0; y < img.rows(); ++y) {
        for (Eigen::Index x = 0; x < ow; ++x) rows(y, x) = img.row(y).segment(x, k).dot(w.transpose());
    }
    Eigen::MatrixXd out(oh, ow);
    for (Eigen::Index y = 0; y < oh; ++y) {
        for (Eigen::Index x = 0; x < ow; ++x) out(y, x) = rows.col(x).segment(y, k).dot(w);
    }
    return out;
}

}  // namespace

SsimStats ssim_stats(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const SsimParams& params) {
    params.validate();
    if (x.rows() != y.rows() || x.cols() != y.cols()) throw InputError("ssim: image shapes differ");
    if (x.rows() < params.window || x.cols() < params.window) {
        throw InputError("ssim: image " + std::to_string(x.cols()) + "x" + std::to_string(x.rows()) +
                         " is smaller than the " + std::to_string(params.window) + "-pixel window");
    }
    const Eigen::VectorXd w = gaussian_window(params.window, params.sigma);
    const Eigen::MatrixXd mx = filter_valid(x, w);
    const Eigen::MatrixXd my = filter_valid(y, w);
    const Eigen::MatrixXd sxx = filter_valid(x.cwiseProduct(x), w) - mx.cwiseProduct(mx);
    const Eigen::MatrixXd syy = filter_valid(y.cwiseProduct(y), w) - my.cwiseProduct(my);
    const Eigen::MatrixXd sxy = filter_valid(x.cwiseProduct(y), w) - mx.cwiseProduct(my);
    const double c1 = params.c1();
    const double c2 = params.c2();
    const Eigen::ArrayXXd cs = (2.0 * sxy.array() + c2) / (sxx.array() + syy.array() + c2);
    const Eigen::ArrayXXd lum =
        (2.0 * mx.array() * my.array() + c1) / (mx.array().square() + my.array().square() + c1);
    return {(lum * cs).mean(), cs.mean()};
}

double ssim(const Image& x, const Image& y, const SsimParams& params) {
    return ssim_stats(luma(x), luma(y), params).ssim;
}

double msssim(const Image& x, const Image& y, const SsimParams& params) {
    params.validate();
    const int scales = int(params.scale_weights.size());
    const int needed = params.window << (scales - 1);
    if (x.width < needed || x.height < needed) {
        throw InputError("msssim: images must be at least " + std::to_string(needed) + "x" + std::to_string(needed) +
                         " for " + std::to_string(scales) + " scales; use fewer scale weights for smaller images");
    }
    Eigen::MatrixXd gx = luma(x);
    Eigen::MatrixXd gy = luma(y);
    if (gx.rows() != gy.rows() || gx.cols() != gy.cols()) throw InputError("msssim: image shapes differ");
    double result = 1.0;
    for (int s = 0; s < scales; ++s) {
        const SsimStats stats = ssim_stats(gx, gy, params);
        const double term = s + 1 < scales ? stats.cs : stats.ssim;
        result *= std::pow(std::max(term, 0.0), params.scale_weights[s]);
        if (s + 1 < scales) {
            gx = downsample2(gx);
            gy = downsample2(gy);
        }
    }
    return result;
}

double dssim(const Image& x, const Image& y, const SsimParams& params) {
    return (1.0 - msssim(x, y, params)) / 2.0;
}

PyramidFeatures::PyramidFeatures(int levels) : levels_(levels) {
    if (levels < 1) throw InputError("pyramid features need at least one level");
}

std::vector<Eigen::MatrixXd> PyramidFeatures::features(const Image& image) const {
    std::vector<Eigen::MatrixXd> grids(image.channels());
    for (int c = 0; c < image.channels(); ++c) {
        grids[c].resize(image.height, image.width);
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) grids[c](y, x) = image.pixels(Eigen::Index(y) * image.width + x, c);
        }
    }
    std::vector<Eigen::MatrixXd> layers;
    for (int level = 0; level < levels_; ++level) {
        if (level > 0) {
            for (auto& g : grids) g = downsample2(g);
        }
        if (grids.empty() || grids[0].size() == 0) {
            throw InputError("pyramid features: image too small for " + std::to_string(levels_) + " levels");
        }
        Eigen::MatrixXd layer(grids[0].size(), Eigen::Index(grids.size()));
        for (size_t c = 0; c < grids.size(); ++c) {
            layer.col(Eigen::Index(c)) = Eigen::Map<const Eigen::VectorXd>(grids[c].data(), grids[c].size());
        }
        layers.push_back(std::move(layer));
    }
    return layers;
}

double perceptual_distance(const Image& x, const Image& y, const FeatureExtractor& extractor) {
    const auto fx = extractor.features(x);
    const auto fy = extractor.features(y);
    if (fx.size() != fy.size() || fx.empty()) throw InputError("perceptual distance: layer counts differ");
    double sum = 0.0;
    for (size_t l = 0; l < fx.size(); ++l) {
        if (fx[l].rows() != fy[l].rows() || fx[l].cols() != fy[l].cols()) {
            throw InputError("perceptual distance: layer " + std::to_string(l) + " shapes differ");
        }
        sum += (fx[l] - fy[l]).cwiseAbs().mean();
    }
    return sum / double(fx.size());
}

MetricReport compare_images(const Image& x, const Image& y, const Mask& mask, const SsimParams& params) {
    MetricReport report;
    report.l1 = l1(x, y, mask);
    report.ssim = ssim(x, y, params);
    report.msssim = msssim(x, y, params);
    report.dssim = (1.0 - report.msssim) / 2.0;
    report.perceptual = perceptual_distance(x, y, PyramidFeatures());
    return report;
}

}  // namespace uvatar
