#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bitvo/error.hpp"

namespace bitvo {

/// Row-major single-channel raster with an explicit row stride.
///
/// The buffer always holds stride * height elements; padding elements past
/// width in each row are allocated but never read by the algorithms.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;

  Image(int width, int height, T fill = T{}) : Image(width, height, width, fill) {}

  Image(int width, int height, int stride, T fill)
      : width_(width), height_(height), stride_(stride) {
    if (width < 0 || height < 0 || stride < width)
      fail(Errc::invalid_argument, "image dimensions " + std::to_string(width) + "x" +
                                       std::to_string(height) + " stride " +
                                       std::to_string(stride));
    data_.assign(static_cast<std::size_t>(stride) * static_cast<std::size_t>(height), fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int stride() const noexcept { return stride_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }

  T* row_ptr(int y) noexcept { return data_.data() + static_cast<std::size_t>(y) * stride_; }
  const T* row_ptr(int y) const noexcept {
    return data_.data() + static_cast<std::size_t>(y) * stride_;
  }

  std::span<T> row(int y) noexcept { return {row_ptr(y), static_cast<std::size_t>(width_)}; }
  std::span<const T> row(int y) const noexcept {
    return {row_ptr(y), static_cast<std::size_t>(width_)};
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<const T> buffer() const noexcept { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Image& a, const Image& b) {
    if (!a.same_shape(b)) return false;
    for (int y = 0; y < a.height_; ++y)
      if (!std::equal(a.row(y).begin(), a.row(y).end(), b.row(y).begin())) return false;
    return true;
  }

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * stride_ + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  int stride_ = 0;
  std::vector<T> data_;
};

using ImageU8 = Image<std::uint8_t>;
using ImageU16 = Image<std::uint16_t>;
using ImageF = Image<float>;

template <typename U, typename T>
Image<U> convert(const Image<T>& src) {
  Image<U> dst(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y) {
    const T* s = src.row_ptr(y);
    U* d = dst.row_ptr(y);
    for (int x = 0; x < src.width(); ++x) d[x] = static_cast<U>(s[x]);
  }
  return dst;
}

/// Applies f to every pixel, producing an image of f's result type.
template <typename T, typename F>
auto map_pixels(const Image<T>& src, F&& f) {
  using U = std::decay_t<decltype(f(src(0, 0)))>;
  Image<U> dst(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y) {
    const T* s = src.row_ptr(y);
    U* d = dst.row_ptr(y);
    for (int x = 0; x < src.width(); ++x) d[x] = f(s[x]);
  }
  return dst;
}

/// Coarse-to-fine image stack; level 0 is the finest.
template <typename T>
struct Pyramid {
  std::vector<Image<T>> levels;

  std::size_t size() const noexcept { return levels.size(); }
  const Image<T>& operator[](std::size_t k) const { return levels[k]; }
  Image<T>& operator[](std::size_t k) { return levels[k]; }
};

}  // namespace bitvo
