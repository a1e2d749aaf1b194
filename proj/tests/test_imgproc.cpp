#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "bitvo/image_io.hpp"
#include "bitvo/imgproc.hpp"
#include "oracles.hpp"

using namespace bitvo;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("bitvo_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(GaussianSmooth, ConstantImageStaysConstant) {
  const ImageU8 img(9, 7, 7);
  for (double sigma : {0.3, 0.5, 1.0, 2.0}) {
    const ImageF out = gaussian_smooth(img, sigma, 3);
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) EXPECT_NEAR(out(x, y), 7.0f, 1e-5f);
  }
}

TEST(GaussianSmooth, UnitKernelIsIdentity) {
  auto g = oracle::rng(3);
  const ImageU8 img = oracle::random_u8(11, 6, g);
  const ImageF out = gaussian_smooth(img, 0.5, 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) EXPECT_EQ(out(x, y), static_cast<float>(img(x, y)));
}

TEST(GaussianSmooth, ImpulseResponseMatchesDenseOracle) {
  ImageF img(5, 5, 0.0f);
  img(2, 2) = 1.0f;
  const ImageF out = gaussian_smooth(img, 0.5, 3);
  const auto k = oracle::gaussian2d(0.5, 3);
  const auto ref = oracle::convolve2d(img, k);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) EXPECT_NEAR(out(x, y), ref[static_cast<std::size_t>(y) * 5 + x], 1e-6);
  // Center weight is exp(0) over the kernel sum.
  double sum = 0.0;
  for (int j = -1; j <= 1; ++j)
    for (int i = -1; i <= 1; ++i) sum += std::exp(-(i * i + j * j) / 0.5);
  EXPECT_NEAR(out(2, 2), 1.0 / sum, 1e-6);
}

TEST(GaussianSmooth, SeparableMatchesDenseOnRandomImages) {
  auto g = oracle::rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const ImageU8 img = oracle::random_u8(17, 13, g);
    for (auto [sigma, ks] : {std::pair{0.5, 3}, std::pair{1.0, 5}, std::pair{2.0, 7}}) {
      const ImageF out = gaussian_smooth(img, sigma, ks);
      const auto ref = oracle::convolve2d(img, oracle::gaussian2d(sigma, ks));
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
          ASSERT_NEAR(out(x, y), ref[static_cast<std::size_t>(y) * img.width() + x], 1e-3);
    }
  }
}

TEST(GaussianSmooth, RejectsEvenOrNonPositiveSize) {
  const ImageU8 img(4, 4, 1);
  EXPECT_THROW(gaussian_smooth(img, 0.5, 2), Error);
  EXPECT_THROW(gaussian_smooth(img, 0.5, 0), Error);
  EXPECT_THROW(gaussian_smooth(img, 0.0, 3), Error);
}

TEST(GaussianSmooth, ThreeTapWeights) {
  const auto k = gaussian_kernel(0.5, 3);
  ASSERT_EQ(k.size(), 3u);
  EXPECT_NEAR(k[0], 0.10650698, 1e-6);
  EXPECT_NEAR(k[1], 0.78698604, 1e-6);
  EXPECT_NEAR(k[2], 0.10650698, 1e-6);
}

TEST(PyramidLevels, KnownResolutions) {
  EXPECT_EQ(compute_num_levels(640, 480), 4);
  EXPECT_EQ(compute_num_levels(1024, 376), 4);
  EXPECT_EQ(compute_num_levels(40, 40), 1);
  EXPECT_EQ(compute_num_levels(39, 200), 1);
  EXPECT_EQ(compute_num_levels(80, 80), 2);
}

TEST(PyramidLevels, CoarsestSideInvariant) {
  std::mt19937_64 g(5);
  std::uniform_int_distribution<int> d(40, 4000);
  for (int i = 0; i < 2000; ++i) {
    const int w = d(g), h = d(g);
    const int L = compute_num_levels(w, h);
    int m = std::min(w, h);
    for (int k = 1; k < L; ++k) m /= 2;
    ASSERT_GE(m, kMinPyramidDimension) << w << "x" << h;
    ASSERT_LT(m / 2, kMinPyramidDimension) << w << "x" << h;
  }
}

TEST(BuildPyramid, SingleLevelIsInput) {
  auto g = oracle::rng(1);
  const ImageU8 img = oracle::random_u8(12, 9, g);
  const auto pyr = build_pyramid(img, 1);
  ASSERT_EQ(pyr.size(), 1u);
  EXPECT_EQ(pyr[0], convert<float>(img));
}

TEST(BuildPyramid, ConstantStaysConstant) {
  const ImageF img(8, 8, 3.5f);
  const auto pyr = build_pyramid(img, 3);
  ASSERT_EQ(pyr.size(), 3u);
  const int sizes[] = {8, 4, 2};
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(pyr[k].width(), sizes[k]);
    EXPECT_EQ(pyr[k].height(), sizes[k]);
    for (int y = 0; y < pyr[k].height(); ++y)
      for (int x = 0; x < pyr[k].width(); ++x) EXPECT_NEAR(pyr[k](x, y), 3.5f, 1e-5f);
  }
}

TEST(BuildPyramid, RampSampledAtEvenPositions) {
  // Smoothing leaves a linear ramp unchanged away from the border, so
  // level-k pixel (x, y) holds the ramp at (2^k x, 2^k y).
  auto ramp = [](double x, double y) { return 0.2 * x + 0.1 * y + 10.0; };
  ImageF img(640, 480);
  for (int y = 0; y < 480; ++y)
    for (int x = 0; x < 640; ++x) img(x, y) = static_cast<float>(ramp(x, y));
  const auto pyr = build_pyramid(img, 4);
  for (std::size_t k = 1; k < 4; ++k) {
    const double s = static_cast<double>(1 << k);
    for (int y = 2; y < pyr[k].height() - 2; ++y)
      for (int x = 2; x < pyr[k].width() - 2; ++x)
        ASSERT_NEAR(pyr[k](x, y), ramp(s * x, s * y), 1e-3) << "level " << k;
  }
}

TEST(BuildPyramid, TooManyLevelsRejected) {
  const ImageU8 img(8, 8, 0);
  EXPECT_THROW(build_pyramid(img, 5), Error);
  EXPECT_THROW(build_pyramid(img, 0), Error);
}

TEST(Bilinear, IntegerCoordinatesExact) {
  auto g = oracle::rng(2);
  const ImageU8 img = oracle::random_u8(7, 5, g);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) EXPECT_EQ(*bilinear_sample(img, x, y), static_cast<float>(img(x, y)));
}

TEST(Bilinear, MidpointAndBounds) {
  ImageF img(2, 2, 0.0f);
  img(0, 0) = 10.0f;
  img(1, 0) = 20.0f;
  EXPECT_FLOAT_EQ(*bilinear_sample(img, 0.5, 0.0), 15.0f);
  EXPECT_FALSE(bilinear_sample(img, -0.1, 0.0));
  EXPECT_FALSE(bilinear_sample(img, 1.0001, 0.0));
  EXPECT_TRUE(bilinear_sample(img, 1.0, 1.0));
}

TEST(Bilinear, ReproducesAffineFunctions) {
  ImageF img(9, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) img(x, y) = static_cast<float>(3.0 * x - 2.0 * y + 1.0);
  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> d(0.0, 8.0);
  for (int i = 0; i < 500; ++i) {
    const double x = d(g), y = d(g);
    EXPECT_NEAR(*bilinear_sample(img, x, y), 3.0 * x - 2.0 * y + 1.0, 1e-4);
  }
}

TEST(Bilinear, BoundedByCellCorners) {
  auto g = oracle::rng(4);
  const ImageF img = oracle::random_f(10, 10, g, -5.0, 5.0);
  std::uniform_real_distribution<double> d(0.0, 9.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = d(g), y = d(g);
    const int x0 = std::min(static_cast<int>(x), 8), y0 = std::min(static_cast<int>(y), 8);
    const float lo = std::min({img(x0, y0), img(x0 + 1, y0), img(x0, y0 + 1), img(x0 + 1, y0 + 1)});
    const float hi = std::max({img(x0, y0), img(x0 + 1, y0), img(x0, y0 + 1), img(x0 + 1, y0 + 1)});
    const float v = *bilinear_sample(img, x, y);
    EXPECT_GE(v, lo - 1e-5f);
    EXPECT_LE(v, hi + 1e-5f);
  }
}

TEST(Gradient, RampAndConstant) {
  ImageF ramp(6, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) ramp(x, y) = static_cast<float>(x);
  auto [gx, gy] = gradient(ramp);
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 5; ++x) {
      EXPECT_FLOAT_EQ(gx(x, y), 1.0f);
      EXPECT_FLOAT_EQ(gy(x, y), 0.0f);
    }
  auto [cx, cy] = gradient(ImageU8(5, 5, 9));
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      EXPECT_EQ(cx(x, y), 0.0f);
      EXPECT_EQ(cy(x, y), 0.0f);
    }
}

TEST(Gradient, MatchesCentralDifferenceLoop) {
  auto g = oracle::rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const ImageU8 img = oracle::random_u8(5, 5, g);
    auto [gx, gy] = gradient(img);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) {
        const bool interior = x > 0 && y > 0 && x < 4 && y < 4;
        const double ex = interior ? 0.5 * (img(x + 1, y) - img(x - 1, y)) : 0.0;
        const double ey = interior ? 0.5 * (img(x, y + 1) - img(x, y - 1)) : 0.0;
        EXPECT_DOUBLE_EQ(gx(x, y), ex);
        EXPECT_DOUBLE_EQ(gy(x, y), ey);
      }
  }
}

TEST(ImageIo, PgmAndPngRoundTrip) {
  const auto dir = temp_dir("io");
  auto g = oracle::rng(8);
  const ImageU8 img = oracle::random_u8(13, 7, g);
  write_image(img, dir / "a.pgm");
  write_image(img, dir / "a.png");
  EXPECT_EQ(read_image_u8(dir / "a.pgm"), img);
  EXPECT_EQ(read_image_u8(dir / "a.png"), img);

  ImageU16 deep(9, 4);
  std::uniform_int_distribution<int> d(0, 65535);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 9; ++x) deep(x, y) = static_cast<std::uint16_t>(d(g));
  write_image(deep, dir / "d.png");
  write_image(deep, dir / "d.pgm");
  EXPECT_EQ(read_image_u16(dir / "d.png"), deep);
  EXPECT_EQ(read_image_u16(dir / "d.pgm"), deep);
  EXPECT_THROW(read_image_u8(dir / "d.png"), Error);
}

TEST(ImageIo, MissingOrCorruptFile) {
  const auto dir = temp_dir("io_bad");
  EXPECT_THROW(read_image_u8(dir / "nope.png"), Error);
  {
    std::ofstream(dir / "bad.pgm") << "P5\n3 3\n255\n";  // truncated raster
  }
  EXPECT_THROW(read_image_u8(dir / "bad.pgm"), Error);
}
