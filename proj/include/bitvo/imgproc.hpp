#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "bitvo/error.hpp"
#include "bitvo/image.hpp"
#include "bitvo/parallel.hpp"

namespace bitvo {

/// Coarsest pyramid level keeps at least this many pixels along its
/// shorter side.
inline constexpr int kMinPyramidDimension = 40;

/// Normalized 1-D Gaussian taps of odd width ksize.
inline std::vector<float> gaussian_kernel(double sigma, int ksize) {
  if (ksize < 1 || ksize % 2 == 0)
    fail(Errc::invalid_argument, "gaussian kernel size must be odd and >= 1, got " +
                                     std::to_string(ksize));
  if (ksize == 1) return {1.0f};
  if (!(sigma > 0.0)) fail(Errc::invalid_argument, "gaussian sigma must be > 0");
  const int r = ksize / 2;
  std::vector<double> w(static_cast<std::size_t>(ksize));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    w[static_cast<std::size_t>(i + r)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i + r)];
  }
  std::vector<float> k(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) k[i] = static_cast<float>(w[i] / sum);
  return k;
}

namespace detail {

inline int clamp_index(int i, int n) noexcept { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// Horizontal pass of a separable filter evaluated at columns x = step * xo,
// with edge replication.
template <typename T>
void convolve_rows(const Image<T>& src, const std::vector<float>& k, int step, ImageF& dst) {
  const int r = static_cast<int>(k.size()) / 2;
  const int w = src.width();
  const int out_w = dst.width();
  parallel_for(0, src.height(), [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      const T* s = src.row_ptr(y);
      float* d = dst.row_ptr(y);
      if (step == 1 && r == 1 && w >= 3) {
        // Same summation order as the generic loop, without the border test.
        const float k0 = k[0], k1 = k[1], k2 = k[2];
        d[0] = ((0.0f + k0 * static_cast<float>(s[0])) + k1 * static_cast<float>(s[0])) + k2 * static_cast<float>(s[1]);
        for (int x = 1; x < w - 1; ++x)
          d[x] = ((0.0f + k0 * static_cast<float>(s[x - 1])) + k1 * static_cast<float>(s[x])) +
                 k2 * static_cast<float>(s[x + 1]);
        d[w - 1] = ((0.0f + k0 * static_cast<float>(s[w - 2])) + k1 * static_cast<float>(s[w - 1])) +
                   k2 * static_cast<float>(s[w - 1]);
        continue;
      }
      for (int xo = 0; xo < out_w; ++xo) {
        const int x = xo * step;
        float acc = 0.0f;
        if (x - r >= 0 && x + r < w) {
          for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * static_cast<float>(s[x + i]);
        } else {
          for (int i = -r; i <= r; ++i)
            acc += k[static_cast<std::size_t>(i + r)] * static_cast<float>(s[clamp_index(x + i, w)]);
        }
        d[xo] = acc;
      }
    }
  });
}

// Vertical pass evaluated at rows y = step * yo.
inline void convolve_cols(const ImageF& src, const std::vector<float>& k, int step, ImageF& dst) {
  const int r = static_cast<int>(k.size()) / 2;
  const int h = src.height();
  const int w = dst.width();
  parallel_for(0, dst.height(), [&](int y0, int y1) {
    for (int yo = y0; yo < y1; ++yo) {
      const int y = yo * step;
      float* d = dst.row_ptr(yo);
      for (int x = 0; x < w; ++x) d[x] = 0.0f;
      for (int j = -r; j <= r; ++j) {
        const float kj = k[static_cast<std::size_t>(j + r)];
        const float* s = src.row_ptr(clamp_index(y + j, h));
        for (int x = 0; x < w; ++x) d[x] += kj * s[x];
      }
    }
  });
}

}  // namespace detail

/// Separable Gaussian blur with edge replication. ksize == 1 is the identity
/// (returned as a real-valued copy).
template <typename T>
ImageF gaussian_smooth(const Image<T>& img, double sigma, int ksize) {
  const auto k = gaussian_kernel(sigma, ksize);
  if (ksize == 1) return convert<float>(img);
  ImageF tmp(img.width(), img.height());
  detail::convolve_rows(img, k, 1, tmp);
  ImageF out(img.width(), img.height());
  detail::convolve_cols(tmp, k, 1, out);
  return out;
}

/// Number of octaves such that the coarsest level's shorter side is still
/// at least kMinPyramidDimension pixels. Images smaller than that get 1.
inline int compute_num_levels(int width, int height) {
  int m = std::min(width, height);
  if (m < kMinPyramidDimension) return 1;
  int levels = 1;
  while (m / 2 >= kMinPyramidDimension) {
    m /= 2;
    ++levels;
  }
  return levels;
}

/// Anti-aliased 2x decimation: 3x3 Gaussian (sigma 1) then keep even
/// samples, so level-k pixel (x, y) sits at (2x, 2y) on level k-1.
inline ImageF downsample(const ImageF& img) {
  static const std::vector<float> k = gaussian_kernel(1.0, 3);
  const int w = img.width() / 2;
  const int h = img.height() / 2;
  if (w < 1 || h < 1) fail(Errc::invalid_argument, "image too small to downsample");
  ImageF tmp(w, img.height());
  detail::convolve_rows(img, k, 2, tmp);
  ImageF out(w, h);
  detail::convolve_cols(tmp, k, 2, out);
  return out;
}

template <typename T>
Pyramid<float> build_pyramid(const Image<T>& img, int levels) {
  if (levels < 1) fail(Errc::invalid_argument, "pyramid needs at least one level");
  if ((img.width() >> (levels - 1)) < 1 || (img.height() >> (levels - 1)) < 1)
    fail(Errc::invalid_argument, std::to_string(levels) + " levels is too many for a " +
                                     std::to_string(img.width()) + "x" +
                                     std::to_string(img.height()) + " image");
  Pyramid<float> pyr;
  pyr.levels.reserve(static_cast<std::size_t>(levels));
  pyr.levels.push_back(convert<float>(img));
  for (int k = 1; k < levels; ++k) pyr.levels.push_back(downsample(pyr.levels.back()));
  return pyr;
}

/// Bilinear interpolation without bounds checks; requires
/// 0 <= x <= width-1 and 0 <= y <= height-1.
template <typename T>
inline float sample_bilinear_unchecked(const Image<T>& img, double x, double y) noexcept {
  int x0 = static_cast<int>(x);
  int y0 = static_cast<int>(y);
  if (x0 >= img.width() - 1) x0 = std::max(0, img.width() - 2);
  if (y0 >= img.height() - 1) y0 = std::max(0, img.height() - 2);
  const float ax = static_cast<float>(x - x0);
  const float ay = static_cast<float>(y - y0);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const float v00 = static_cast<float>(img(x0, y0));
  const float v10 = static_cast<float>(img(x1, y0));
  const float v01 = static_cast<float>(img(x0, y1));
  const float v11 = static_cast<float>(img(x1, y1));
  const float top = v00 + ax * (v10 - v00);
  const float bot = v01 + ax * (v11 - v01);
  return top + ay * (bot - top);
}

/// Bilinear interpolation, or nullopt when the 2x2 support leaves the image.
template <typename T>
std::optional<float> bilinear_sample(const Image<T>& img, double x, double y) {
  if (!(x >= 0.0 && y >= 0.0 && x <= img.width() - 1 && y <= img.height() - 1))
    return std::nullopt;
  return sample_bilinear_unchecked(img, x, y);
}

/// Central-difference gradients (I(x+1) - I(x-1)) / 2; border rows and
/// columns are zero.
template <typename T>
std::pair<ImageF, ImageF> gradient(const Image<T>& img) {
  const int w = img.width();
  const int h = img.height();
  if (w < 3 || h < 3) fail(Errc::invalid_argument, "gradient needs an image of at least 3x3");
  ImageF gx(w, h, 0.0f);
  ImageF gy(w, h, 0.0f);
  parallel_for(1, h - 1, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      const T* up = img.row_ptr(y - 1);
      const T* mid = img.row_ptr(y);
      const T* dn = img.row_ptr(y + 1);
      float* dx = gx.row_ptr(y);
      float* dy = gy.row_ptr(y);
      for (int x = 1; x < w - 1; ++x) {
        dx[x] = 0.5f * (static_cast<float>(mid[x + 1]) - static_cast<float>(mid[x - 1]));
        dy[x] = 0.5f * (static_cast<float>(dn[x]) - static_cast<float>(up[x]));
      }
    }
  });
  return {std::move(gx), std::move(gy)};
}

}  // namespace bitvo
