#pragma once

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "bitvo/error.hpp"
#include "bitvo/image.hpp"

namespace bitvo {

namespace fs = std::filesystem;

/// An image file decoded at its native bit depth.
using AnyImage = std::variant<ImageU8, ImageU16>;

namespace detail {

inline std::string lower_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

// Next whitespace-delimited header token, skipping '#' comments.
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

inline AnyImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  const std::string magic = pnm_token(in);
  if (magic != "P5" && magic != "P2") fail(Errc::parse_error, path.string() + " is not a PGM file");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pnm_token(in));
    h = std::stoi(pnm_token(in));
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    fail(Errc::parse_error, "malformed PGM header in " + path.string());
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    fail(Errc::parse_error, "unsupported PGM header in " + path.string());
  const bool ascii = magic == "P2";
  auto read_values = [&](auto& img) {
    using T = typename std::decay_t<decltype(img)>::value_type;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        unsigned v = 0;
        if (ascii) {
          if (!(in >> v)) fail(Errc::parse_error, "truncated PGM " + path.string());
        } else if constexpr (sizeof(T) == 1) {
          const int c = in.get();
          if (c == EOF) fail(Errc::parse_error, "truncated PGM " + path.string());
          v = static_cast<unsigned>(c);
        } else {
          const int hi = in.get();
          const int lo = in.get();
          if (lo == EOF) fail(Errc::parse_error, "truncated PGM " + path.string());
          v = (static_cast<unsigned>(hi) << 8) | static_cast<unsigned>(lo);
        }
        img(x, y) = static_cast<T>(v);
      }
    }
  };
  if (maxval < 256) {
    ImageU8 img(w, h);
    read_values(img);
    return img;
  }
  ImageU16 img(w, h);
  read_values(img);
  return img;
}

struct PngFileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, PngFileCloser>;

inline AnyImage read_png(const fs::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) fail(Errc::io_error, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::io_error, "libpng initialization failed");
  }
  // Everything with a destructor lives above setjmp.
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  int w = 0, h = 0, depth = 0, channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::parse_error, "cannot decode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);
  png_read_update_info(png, info);
  depth = png_get_bit_depth(png, info);
  channels = png_get_channels(png, info);
  if (channels == 1) {
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    pixels.resize(row_bytes * static_cast<std::size_t>(h));
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = pixels.data() + row_bytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (channels != 1) fail(Errc::parse_error, "unsupported PNG channel layout in " + path.string());

  if (depth == 16) {
    ImageU16 img(w, h);
    for (int y = 0; y < h; ++y)
      std::memcpy(img.row_ptr(y), rows[static_cast<std::size_t>(y)], sizeof(std::uint16_t) * w);
    return img;
  }
  ImageU8 img(w, h);
  for (int y = 0; y < h; ++y) std::memcpy(img.row_ptr(y), rows[static_cast<std::size_t>(y)], w);
  return img;
}

template <typename T>
void write_png_impl(const Image<T>& img, const fs::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) fail(Errc::io_error, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::io_error, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::io_error, "cannot encode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
               static_cast<png_uint_32>(img.height()), sizeof(T) * 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if constexpr (sizeof(T) == 2) png_set_swap(png);
  for (int y = 0; y < img.height(); ++y)
    png_write_row(png, reinterpret_cast<png_const_bytep>(img.row_ptr(y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

/// Reads a PGM (P2/P5, 8 or 16 bit) or PNG (reduced to one gray channel).
inline AnyImage read_image(const fs::path& path) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".png") return detail::read_png(path);
  return detail::read_pgm(path);
}

/// Reads an 8-bit intensity image. 16-bit inputs are rejected.
inline ImageU8 read_image_u8(const fs::path& path) {
  AnyImage img = read_image(path);
  if (auto* p = std::get_if<ImageU8>(&img)) return std::move(*p);
  fail(Errc::parse_error, path.string() + " is not an 8-bit image");
}

/// Reads depth or disparity rasters; 8-bit files are widened.
inline ImageU16 read_image_u16(const fs::path& path) {
  AnyImage img = read_image(path);
  if (auto* p = std::get_if<ImageU16>(&img)) return std::move(*p);
  return convert<std::uint16_t>(std::get<ImageU8>(img));
}

/// Binary PGM with optional '#' comment lines after the magic number.
template <typename T>
void write_pgm(const Image<T>& img, const fs::path& path,
               const std::vector<std::string>& comments = {}) {
  static_assert(sizeof(T) <= 2 && std::is_unsigned_v<T>);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
  out << "P5\n";
  for (const auto& c : comments) out << "# " << c << "\n";
  out << img.width() << " " << img.height() << "\n" << (sizeof(T) == 1 ? 255 : 65535) << "\n";
  std::vector<char> buf;
  buf.reserve(static_cast<std::size_t>(img.width()) * sizeof(T));
  for (int y = 0; y < img.height(); ++y) {
    buf.clear();
    for (T v : img.row(y)) {
      if constexpr (sizeof(T) == 2) buf.push_back(static_cast<char>(v >> 8));
      buf.push_back(static_cast<char>(v & 0xff));
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) fail(Errc::io_error, "write failed for " + path.string());
}

inline void write_png(const ImageU8& img, const fs::path& path) { detail::write_png_impl(img, path); }
inline void write_png(const ImageU16& img, const fs::path& path) { detail::write_png_impl(img, path); }

/// Writes by extension: .png via libpng, anything else as binary PGM.
template <typename T>
void write_image(const Image<T>& img, const fs::path& path) {
  if (detail::lower_extension(path) == ".png")
    write_png(img, path);
  else
    write_pgm(img, path);
}

}  // namespace bitvo
