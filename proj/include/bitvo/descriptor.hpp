#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include "bitvo/error.hpp"
#include "bitvo/image.hpp"
#include "bitvo/image_io.hpp"
#include "bitvo/imgproc.hpp"
#include "bitvo/parallel.hpp"

namespace bitvo {

/// Comparison applied as `neighbor op center`.
enum class CompareOp { greater, greater_equal, less, less_equal };

inline const char* to_string(CompareOp op) noexcept {
  switch (op) {
    case CompareOp::greater: return ">";
    case CompareOp::greater_equal: return ">=";
    case CompareOp::less: return "<";
    case CompareOp::less_equal: return "<=";
  }
  return "?";
}

struct NeighborOffset {
  int dx;
  int dy;
};

/// 3x3 ring in bit order: offset i carries weight 1 << i.
inline constexpr std::array<NeighborOffset, 8> kNeighborOffsets{{
    {-1, -1}, {0, -1}, {+1, -1}, {+1, 0}, {-1, 0}, {-1, +1}, {0, +1}, {+1, +1},
}};

/// Packed comparison bytes. The one-pixel border has no full neighborhood
/// and is flagged invalid (its stored byte is 0).
struct CensusImage {
  ImageU8 bytes;
  CompareOp op = CompareOp::greater;

  int width() const noexcept { return bytes.width(); }
  int height() const noexcept { return bytes.height(); }

  bool valid(int x, int y) const noexcept {
    return x >= 1 && y >= 1 && x < bytes.width() - 1 && y < bytes.height() - 1;
  }

  std::uint8_t operator()(int x, int y) const noexcept { return bytes(x, y); }
};

/// A stack of same-sized real-valued channels: 8 Bit-Planes, or a single
/// intensity channel in raw mode.
struct ChannelStack {
  std::vector<ImageF> channels;

  std::size_t size() const noexcept { return channels.size(); }
  int width() const noexcept { return channels.empty() ? 0 : channels.front().width(); }
  int height() const noexcept { return channels.empty() ? 0 : channels.front().height(); }
  const ImageF& operator[](std::size_t i) const { return channels[i]; }
  ImageF& operator[](std::size_t i) { return channels[i]; }
};

using BitPlanes = ChannelStack;

enum class DescriptorMode { bitplanes, raw_intensity };

inline const char* to_string(DescriptorMode m) noexcept {
  return m == DescriptorMode::bitplanes ? "bitplanes" : "raw-intensity";
}

inline DescriptorMode parse_descriptor_mode(const std::string& s) {
  if (s == "bitplanes") return DescriptorMode::bitplanes;
  if (s == "raw-intensity" || s == "raw_intensity" || s == "intensity")
    return DescriptorMode::raw_intensity;
  fail(Errc::invalid_argument, "unknown descriptor mode '" + s + "'");
}

struct DescriptorConfig {
  DescriptorMode mode = DescriptorMode::bitplanes;
  double sigma_pre = 0.5;      // 3x3 image pre-smoothing, 0 disables
  double sigma_channel = 0.5;  // 3x3 per-channel smoothing, 0 disables
  CompareOp op = CompareOp::greater;
};

namespace detail {

template <CompareOp Op, typename T>
inline bool compare(T neighbor, T center) noexcept {
  if constexpr (Op == CompareOp::greater) return neighbor > center;
  if constexpr (Op == CompareOp::greater_equal) return neighbor >= center;
  if constexpr (Op == CompareOp::less) return neighbor < center;
  if constexpr (Op == CompareOp::less_equal) return neighbor <= center;
}

template <CompareOp Op, typename T>
void census_row(const T* up, const T* mid, const T* dn, std::uint8_t* dst, int x_begin, int x_end) {
  for (int x = x_begin; x < x_end; ++x) {
    const T c = mid[x];
    dst[x] = static_cast<std::uint8_t>(
        (compare<Op>(up[x - 1], c) ? 0x01 : 0) | (compare<Op>(up[x], c) ? 0x02 : 0) |
        (compare<Op>(up[x + 1], c) ? 0x04 : 0) | (compare<Op>(mid[x + 1], c) ? 0x08 : 0) |
        (compare<Op>(mid[x - 1], c) ? 0x10 : 0) | (compare<Op>(dn[x - 1], c) ? 0x20 : 0) |
        (compare<Op>(dn[x], c) ? 0x40 : 0) | (compare<Op>(dn[x + 1], c) ? 0x80 : 0));
  }
}

#if defined(__SSE2__)
// 16 pixels per step; unsigned `>` via sign-flipped signed compare.
inline int census_row_sse2_greater(const std::uint8_t* up, const std::uint8_t* mid,
                                   const std::uint8_t* dn, std::uint8_t* dst, int x_begin,
                                   int x_end) {
  const __m128i flip = _mm_set1_epi8(static_cast<char>(0x80));
  auto load = [&](const std::uint8_t* p) {
    return _mm_xor_si128(_mm_loadu_si128(reinterpret_cast<const __m128i*>(p)), flip);
  };
  auto bit = [](__m128i neighbor, __m128i center, int weight) {
    return _mm_and_si128(_mm_cmpgt_epi8(neighbor, center), _mm_set1_epi8(static_cast<char>(weight)));
  };
  int x = x_begin;
  for (; x + 16 <= x_end; x += 16) {
    const __m128i c = load(mid + x);
    __m128i acc = bit(load(up + x - 1), c, 0x01);
    acc = _mm_or_si128(acc, bit(load(up + x), c, 0x02));
    acc = _mm_or_si128(acc, bit(load(up + x + 1), c, 0x04));
    acc = _mm_or_si128(acc, bit(load(mid + x + 1), c, 0x08));
    acc = _mm_or_si128(acc, bit(load(mid + x - 1), c, 0x10));
    acc = _mm_or_si128(acc, bit(load(dn + x - 1), c, 0x20));
    acc = _mm_or_si128(acc, bit(load(dn + x), c, 0x40));
    acc = _mm_or_si128(acc, bit(load(dn + x + 1), c, 0x80));
    _mm_storeu_si128(reinterpret_cast<__m128i*>(dst + x), acc);
  }
  return x;
}
#endif

template <CompareOp Op, typename T>
void census_image(const Image<T>& img, ImageU8& out) {
  const int w = img.width();
  parallel_for(1, img.height() - 1, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      const T* up = img.row_ptr(y - 1);
      const T* mid = img.row_ptr(y);
      const T* dn = img.row_ptr(y + 1);
      std::uint8_t* dst = out.row_ptr(y);
      int x = 1;
#if defined(__SSE2__)
      if constexpr (Op == CompareOp::greater && std::is_same_v<T, std::uint8_t>)
        x = census_row_sse2_greater(up, mid, dn, dst, 1, w - 1);
#endif
      census_row<Op>(up, mid, dn, dst, x, w - 1);
    }
  });
}

template <typename T>
void check_census_input(const Image<T>& img) {
  if (img.width() < 3 || img.height() < 3)
    fail(Errc::invalid_argument, "census transform needs an image of at least 3x3");
}

}  // namespace detail

/// Per-pixel scalar definition of the census byte; the normative reference
/// for the data-parallel census_transform.
template <typename T>
CensusImage census_transform_reference(const Image<T>& img, CompareOp op = CompareOp::greater) {
  detail::check_census_input(img);
  CensusImage out{ImageU8(img.width(), img.height(), 0), op};
  for (int y = 1; y < img.height() - 1; ++y) {
    for (int x = 1; x < img.width() - 1; ++x) {
      const T c = img(x, y);
      unsigned byte = 0;
      for (std::size_t i = 0; i < kNeighborOffsets.size(); ++i) {
        const T n = img(x + kNeighborOffsets[i].dx, y + kNeighborOffsets[i].dy);
        bool bit = false;
        switch (op) {
          case CompareOp::greater: bit = n > c; break;
          case CompareOp::greater_equal: bit = n >= c; break;
          case CompareOp::less: bit = n < c; break;
          case CompareOp::less_equal: bit = n <= c; break;
        }
        byte |= (bit ? 1u : 0u) << i;
      }
      out.bytes(x, y) = static_cast<std::uint8_t>(byte);
    }
  }
  return out;
}

/// Row-parallel census transform (SSE2 for 8-bit input with `>`).
template <typename T>
CensusImage census_transform(const Image<T>& img, CompareOp op = CompareOp::greater) {
  detail::check_census_input(img);
  CensusImage out{ImageU8(img.width(), img.height(), 0), op};
  switch (op) {
    case CompareOp::greater: detail::census_image<CompareOp::greater>(img, out.bytes); break;
    case CompareOp::greater_equal: detail::census_image<CompareOp::greater_equal>(img, out.bytes); break;
    case CompareOp::less: detail::census_image<CompareOp::less>(img, out.bytes); break;
    case CompareOp::less_equal: detail::census_image<CompareOp::less_equal>(img, out.bytes); break;
  }
  return out;
}

/// Splits census bytes into 8 binary channels; channel i holds bit i.
inline BitPlanes expand_bitplanes(const CensusImage& census) {
  const int w = census.width();
  const int h = census.height();
  BitPlanes bp;
  bp.channels.assign(8, ImageF(w, h, 0.0f));
  parallel_for(0, h, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      const std::uint8_t* src = census.bytes.row_ptr(y);
      for (int i = 0; i < 8; ++i) {
        float* dst = bp.channels[static_cast<std::size_t>(i)].row_ptr(y);
        for (int x = 0; x < w; ++x) dst[x] = static_cast<float>((src[x] >> i) & 1u);
      }
    }
  });
  return bp;
}

/// Inverse of expand_bitplanes for unsmoothed channels (threshold 0.5).
inline CensusImage pack_bitplanes(const BitPlanes& bp, CompareOp op = CompareOp::greater) {
  if (bp.size() != 8) fail(Errc::invalid_argument, "Bit-Planes need exactly 8 channels");
  CensusImage out{ImageU8(bp.width(), bp.height(), 0), op};
  for (int y = 1; y < bp.height() - 1; ++y)
    for (int x = 1; x < bp.width() - 1; ++x) {
      unsigned byte = 0;
      for (std::size_t i = 0; i < 8; ++i) byte |= (bp[i](x, y) > 0.5f ? 1u : 0u) << i;
      out.bytes(x, y) = static_cast<std::uint8_t>(byte);
    }
  return out;
}

/// 8-channel Bit-Planes: optional 3x3 pre-smoothing, census comparisons as
/// binary channels, then optional 3x3 smoothing of every channel.
template <typename T>
BitPlanes compute_bitplanes(const Image<T>& img, double sigma_pre = 0.5, double sigma_channel = 0.5,
                            CompareOp op = CompareOp::greater) {
  detail::check_census_input(img);
  BitPlanes bp = sigma_pre > 0.0 ? expand_bitplanes(census_transform(gaussian_smooth(img, sigma_pre, 3), op))
                                 : expand_bitplanes(census_transform(img, op));
  if (sigma_channel > 0.0) {
    const auto k = gaussian_kernel(sigma_channel, 3);
    ImageF tmp(bp.width(), bp.height());
    for (auto& ch : bp.channels) {
      detail::convolve_rows(ch, k, 1, tmp);
      detail::convolve_cols(tmp, k, 1, ch);
    }
  }
  return bp;
}

/// Single-channel intensity "descriptor" (brightness constancy baseline).
template <typename T>
ChannelStack compute_raw_intensity(const Image<T>& img, double sigma_pre = 0.5) {
  ChannelStack cs;
  cs.channels.push_back(sigma_pre > 0.0 ? gaussian_smooth(img, sigma_pre, 3) : convert<float>(img));
  return cs;
}

template <typename T>
ChannelStack compute_descriptor(const Image<T>& img, const DescriptorConfig& cfg) {
  if (cfg.mode == DescriptorMode::raw_intensity) return compute_raw_intensity(img, cfg.sigma_pre);
  return compute_bitplanes(img, cfg.sigma_pre, cfg.sigma_channel, cfg.op);
}

/// True when some channel varies across the interior, i.e. the frame
/// carries any usable structure.
inline bool has_structure(const ChannelStack& cs) {
  for (const auto& ch : cs.channels) {
    if (ch.width() < 3 || ch.height() < 3) continue;
    const float ref = ch(1, 1);
    for (int y = 1; y < ch.height() - 1; ++y)
      for (float v : ch.row(y).subspan(1, static_cast<std::size_t>(ch.width() - 2)))
        if (v != ref) return true;
  }
  return false;
}

struct ChannelGradient {
  ImageF gx;
  ImageF gy;
};

inline std::vector<ChannelGradient> channel_gradients(const ChannelStack& cs) {
  std::vector<ChannelGradient> out;
  out.reserve(cs.size());
  for (const auto& ch : cs.channels) {
    auto [gx, gy] = gradient(ch);
    out.push_back({std::move(gx), std::move(gy)});
  }
  return out;
}

/// G(p) = sum over channels of |d/dx| + |d/dy|.
inline ImageF saliency(const std::vector<ChannelGradient>& grads) {
  if (grads.empty()) return {};
  ImageF g(grads.front().gx.width(), grads.front().gx.height(), 0.0f);
  for (const auto& cg : grads)
    for (int y = 0; y < g.height(); ++y) {
      float* d = g.row_ptr(y);
      const float* gx = cg.gx.row_ptr(y);
      const float* gy = cg.gy.row_ptr(y);
      for (int x = 0; x < g.width(); ++x) d[x] += std::abs(gx[x]) + std::abs(gy[x]);
    }
  return g;
}

inline ImageF saliency(const ChannelStack& cs) { return saliency(channel_gradients(cs)); }

struct HammingSsd {
  std::uint64_t hamming = 0;
  double ssd = 0.0;
};

inline int hamming_distance(std::uint8_t a, std::uint8_t b) noexcept {
  return std::popcount(static_cast<unsigned>(a ^ b));
}

/// Squared Euclidean distance between the 8-vectors of bits.
inline double bitplane_ssd(std::uint8_t a, std::uint8_t b) noexcept {
  double s = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double d = static_cast<double>((a >> i) & 1u) - static_cast<double>((b >> i) & 1u);
    s += d * d;
  }
  return s;
}

/// Popcount Hamming distance and bit-plane SSD accumulated over the valid
/// pixels of two census images. The two agree on every input.
inline HammingSsd hamming_equivalence_check(const CensusImage& a, const CensusImage& b) {
  if (a.width() != b.width() || a.height() != b.height())
    fail(Errc::invalid_argument, "census images differ in size");
  HammingSsd out;
  for (int y = 1; y < a.height() - 1; ++y)
    for (int x = 1; x < a.width() - 1; ++x) {
      out.hamming += static_cast<std::uint64_t>(hamming_distance(a(x, y), b(x, y)));
      out.ssd += bitplane_ssd(a(x, y), b(x, y));
    }
  return out;
}

inline std::string census_header(CompareOp op) {
  return std::string("bitvo census: neighbor ") + to_string(op) +
         " center, offsets (-1,-1)(0,-1)(1,-1)(1,0)(-1,0)(-1,1)(0,1)(1,1) -> bits 0x01..0x80";
}

/// Debug dump of the packed census bytes.
inline void write_census_pgm(const CensusImage& census, const std::filesystem::path& path) {
  write_pgm(census.bytes, path, {census_header(census.op)});
}

/// Debug dump, one PGM per channel (stem_ch0.pgm ...), values scaled to 0..255.
inline void write_channels_pgm(const ChannelStack& cs, const std::filesystem::path& dir,
                               const std::string& stem, CompareOp op = CompareOp::greater) {
  std::filesystem::create_directories(dir);
  float lo = 0.0f, hi = 1.0f;
  if (cs.size() != 8 && !cs.channels.empty()) {
    lo = hi = cs[0](0, 0);
    for (int y = 0; y < cs.height(); ++y)
      for (float v : cs[0].row(y)) lo = std::min(lo, v), hi = std::max(hi, v);
    if (hi <= lo) hi = lo + 1.0f;
  }
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const ImageU8 img = map_pixels(cs[i], [&](float v) {
      return static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * (v - lo) / (hi - lo)), 0L, 255L));
    });
    write_pgm(img, dir / (stem + "_ch" + std::to_string(i) + ".pgm"),
              {census_header(op), "channel " + std::to_string(i)});
  }
}

}  // namespace bitvo
