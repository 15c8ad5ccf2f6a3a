#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "uvatar/metrics.hpp"

using namespace uvatar;
using namespace uvatar::oracle;

namespace {

Image random_image(std::mt19937_64& rng, int w, int h, int channels) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(w, h, channels);
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = u(rng);
    return img;
}

}  // namespace

TEST_CASE("L1") {
    std::mt19937_64 rng(51);
    const Image a = random_image(rng, 20, 10, 3), b = random_image(rng, 20, 10, 3);
    CHECK(l1(a, a) == 0.0);
    Image zero(8, 8, 3), one(8, 8, 3);
    one.pixels.setOnes();
    CHECK(l1(zero, one) == 1.0);
    double direct = 0.0;
    for (Eigen::Index i = 0; i < a.pixels.size(); ++i) direct += std::abs(a.pixels.data()[i] - b.pixels.data()[i]);
    CHECK(std::abs(l1(a, b) - direct / a.pixels.size()) < 1e-12);

    Mask mask = Mask::Constant(a.size(), false);
    mask(3) = mask(17) = true;
    const double masked = ((a.pixels.row(3) - b.pixels.row(3)).cwiseAbs().sum() +
                           (a.pixels.row(17) - b.pixels.row(17)).cwiseAbs().sum()) / 6.0;
    CHECK(std::abs(l1(a, b, mask) - masked) < 1e-15);
    CHECK_THROWS_AS(l1(a, random_image(rng, 20, 11, 3)), InputError);
}

TEST_CASE("single-scale SSIM") {
    std::mt19937_64 rng(52);
    const Image a = textured_image(rng, 64, 48, 0.2);
    CHECK(std::abs(ssim(a, a) - 1.0) < 1e-9);

    Image board(32, 32, 1), inverse(32, 32, 1);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            board.pixels(y * 32 + x, 0) = (x + y) % 2;
            inverse.pixels(y * 32 + x, 0) = 1 - (x + y) % 2;
        }
    }
    const double s = ssim(board, inverse);
    CHECK(s < 0.0);
    CHECK(std::abs(s - windowed(gray(board), gray(inverse), SsimParams{}).ssim) < 1e-12);

    Image flat(32, 32, 1), noisy(32, 32, 1);
    flat.pixels.setConstant(0.5);
    std::uniform_real_distribution<double> tiny(-1e-3, 1e-3);
    for (int i = 0; i < noisy.size(); ++i) noisy.pixels(i, 0) = 0.5 + tiny(rng);
    CHECK(ssim(flat, noisy) > 0.99);
}

TEST_CASE("pooling chain equals direct block means") {
    std::mt19937_64 rng(53);
    const Eigen::MatrixXd g = gray(random_image(rng, 100, 70, 1));
    Eigen::MatrixXd chain = g;
    for (int k = 1; k <= 4; ++k) {
        chain = downsample2(chain);
        const Eigen::MatrixXd direct = block_mean(g, 1 << k);
        REQUIRE(chain.rows() == direct.rows());
        REQUIRE(chain.cols() == direct.cols());
        CHECK((chain - direct).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("MS-SSIM against an independent implementation") {
    std::mt19937_64 rng(54);
    const SsimParams params;
    CHECK(params.scale_weights.size() == 5);
    double worst = 0.0;
    for (int pair = 0; pair < 20; ++pair) {
        const Image a = textured_image(rng, 176, 176, 0.3);
        Image b = a;
        std::normal_distribution<double> n(0.0, 0.02 + 0.01 * pair);
        for (Eigen::Index i = 0; i < b.pixels.size(); ++i) {
            b.pixels.data()[i] = std::clamp(b.pixels.data()[i] + n(rng), 0.0, 1.0);
        }
        const double ours = msssim(a, b, params);
        const double ref = reference_msssim(a, b, params);
        worst = std::max(worst, std::abs(ours - ref));
        CHECK(ours > 0.0);
        CHECK(ours < 1.0);
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("MS-SSIM identities and DSSIM") {
    std::mt19937_64 rng(55);
    const Image a = textured_image(rng, 180, 190, 0.1);
    CHECK(std::abs(msssim(a, a) - 1.0) < 1e-9);
    CHECK(std::abs(dssim(a, a)) < 1e-9);

    for (int i = 0; i < 5; ++i) {
        const Image x = random_image(rng, 176, 176, 3), y = random_image(rng, 176, 176, 3);
        const double d = dssim(x, y);
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        CHECK(std::abs(d - (1.0 - msssim(x, y)) / 2.0) < 1e-12);
    }

    // Anti-correlated images push a structure term below zero, so MS-SSIM clamps to 0.
    Image board(176, 176, 1), inverse(176, 176, 1);
    for (int p = 0; p < board.size(); ++p) {
        const int x = p % 176, y = p / 176;
        board.pixels(p, 0) = (x + y) % 2;
        inverse.pixels(p, 0) = 1 - (x + y) % 2;
    }
    CHECK(msssim(board, inverse) == 0.0);
    CHECK(dssim(board, inverse) == 0.5);

    CHECK_THROWS_AS(msssim(random_image(rng, 100, 100, 1), random_image(rng, 100, 100, 1)), InputError);
    SsimParams three;
    three.scale_weights = {0.2, 0.3, 0.5};
    CHECK_NOTHROW(msssim(random_image(rng, 44, 44, 1), random_image(rng, 44, 44, 1), three));
    SsimParams even;
    even.window = 10;
    CHECK_THROWS_AS(even.validate(), InputError);
}

TEST_CASE("pyramid perceptual distance") {
    std::mt19937_64 rng(56);
    const PyramidFeatures pyramid(4);
    const Image a = random_image(rng, 64, 40, 3);
    CHECK(perceptual_distance(a, a, pyramid) == 0.0);

    Image shifted = a;
    shifted.pixels.array() += 0.125;
    CHECK(std::abs(perceptual_distance(a, shifted, pyramid) - 0.125) < 1e-12);

    const Image b = random_image(rng, 64, 40, 3);
    double expected = 0.0;
    for (int level = 0; level < 4; ++level) {
        double sum = 0.0;
        Eigen::Index count = 0;
        for (int c = 0; c < 3; ++c) {
            Eigen::MatrixXd ga(a.height, a.width), gb(b.height, b.width);
            for (int p = 0; p < a.size(); ++p) {
                ga(p / a.width, p % a.width) = a.pixels(p, c);
                gb(p / b.width, p % b.width) = b.pixels(p, c);
            }
            const Eigen::MatrixXd d = block_mean(ga, 1 << level) - block_mean(gb, 1 << level);
            sum += d.cwiseAbs().sum();
            count += d.size();
        }
        expected += sum / count;
    }
    expected /= 4;
    CHECK(std::abs(perceptual_distance(a, b, pyramid) - expected) < 1e-12);
}

TEST_CASE("metric report") {
    std::mt19937_64 rng(57);
    const Image a = textured_image(rng, 176, 176, 0.2);
    const Image b = textured_image(rng, 176, 176, 0.2);
    const MetricReport same = compare_images(a, a);
    CHECK(same.l1 == 0.0);
    CHECK(std::abs(same.dssim) < 1e-9);
    CHECK(same.perceptual == 0.0);
    const MetricReport diff = compare_images(a, b);
    CHECK(diff.l1 == doctest::Approx(l1(a, b)));
    CHECK(diff.msssim == doctest::Approx(msssim(a, b)));
    CHECK(diff.dssim == doctest::Approx(dssim(a, b)));
    CHECK(diff.ssim == doctest::Approx(ssim(a, b)));
}
