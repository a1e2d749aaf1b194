#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bitvo/error.hpp"
#include "bitvo/geometry.hpp"
#include "bitvo/image.hpp"
#include "bitvo/image_io.hpp"
#include "bitvo/synthetic.hpp"

namespace bitvo {

enum class Layout { tum, kitti };

inline Layout parse_layout(const std::string& s) {
  if (s == "tum") return Layout::tum;
  if (s == "kitti") return Layout::kitti;
  fail(Errc::invalid_argument, "unknown dataset layout '" + s + "' (expected tum|kitti)");
}

/// How the optional per-frame depth raster is encoded.
enum class DepthKind { none, depth, disparity };

struct SequenceFrame {
  std::size_t index = 0;
  double timestamp = 0.0;
  std::filesystem::path image;
  std::filesystem::path depth;  // empty when absent
};

struct Sequence {
  Intrinsics K;
  DepthKind depth_kind = DepthKind::none;
  double depth_scale = 1.0;  // raster units -> meters (depth) or pixels (disparity)
  std::vector<SequenceFrame> frames;
  std::vector<std::string> warnings;
};

inline constexpr double kTumAssociationWindow = 0.02;
inline constexpr double kTumDepthScale = 1.0 / 5000.0;
inline constexpr double kKittiDisparityScale = 1.0 / 256.0;
inline constexpr double kMinDisparity = 0.5;

namespace detail {

struct IndexEntry {
  double timestamp;
  std::string file;
};

// "timestamp filename" lines, '#' comments; sorted by timestamp.
inline std::vector<IndexEntry> read_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::vector<IndexEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    IndexEntry e{};
    if (!(ls >> e.timestamp)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      fail(Errc::parse_error, "bad index line " + path.string() + ":" + std::to_string(lineno));
    }
    if (!(ls >> e.file)) fail(Errc::parse_error, "missing file name at " + path.string() + ":" + std::to_string(lineno));
    out.push_back(std::move(e));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const IndexEntry& a, const IndexEntry& b) { return a.timestamp < b.timestamp; });
  return out;
}

inline std::filesystem::path find_calibration(const std::filesystem::path& root,
                                              const std::optional<std::filesystem::path>& explicit_path) {
  if (explicit_path) {
    if (!std::filesystem::exists(*explicit_path))
      fail(Errc::io_error, "calibration file " + explicit_path->string() + " does not exist");
    return *explicit_path;
  }
  for (const char* name : {"calibration.txt", "calib.txt", "camera.txt"})
    if (std::filesystem::exists(root / name)) return root / name;
  fail(Errc::io_error, "no calibration file found in " + root.string());
}

inline bool is_image_file(const std::filesystem::path& p) {
  const std::string ext = lower_extension(p);
  return ext == ".png" || ext == ".pgm";
}

}  // namespace detail

/// TUM RGB-D layout: rgb.txt and depth.txt, associated by nearest timestamp.
inline Sequence load_tum(const std::filesystem::path& root,
                         const std::optional<std::filesystem::path>& calibration = std::nullopt) {
  Sequence seq;
  seq.K = read_intrinsics(detail::find_calibration(root, calibration));
  seq.depth_kind = DepthKind::depth;
  seq.depth_scale = kTumDepthScale;
  const auto rgb = detail::read_index(root / "rgb.txt");
  const auto depth = detail::read_index(root / "depth.txt");
  for (const auto& e : rgb) {
    auto it = std::lower_bound(depth.begin(), depth.end(), e.timestamp,
                               [](const detail::IndexEntry& d, double t) { return d.timestamp < t; });
    const detail::IndexEntry* best = nullptr;
    if (it != depth.end()) best = &*it;
    if (it != depth.begin()) {
      const auto* before = &*std::prev(it);
      if (!best || e.timestamp - before->timestamp <= best->timestamp - e.timestamp) best = before;
    }
    // Small slack so a window edge written with 6 decimals still matches.
    if (!best || std::abs(best->timestamp - e.timestamp) > kTumAssociationWindow + 1e-9) {
      seq.warnings.push_back("no depth within 0.02 s of rgb frame " + e.file + ", dropped");
      continue;
    }
    SequenceFrame f;
    f.index = seq.frames.size();
    f.timestamp = e.timestamp;
    f.image = root / e.file;
    f.depth = root / best->file;
    if (!seq.frames.empty() && !(f.timestamp > seq.frames.back().timestamp)) {
      seq.warnings.push_back("duplicate timestamp for rgb frame " + e.file + ", dropped");
      continue;
    }
    for (const auto& p : {f.image, f.depth})
      if (!std::filesystem::exists(p)) fail(Errc::io_error, "missing file " + p.string());
    seq.frames.push_back(std::move(f));
  }
  if (seq.frames.empty()) fail(Errc::invalid_argument, "sequence " + root.string() + " has no usable frames");
  return seq;
}

/// KITTI odometry layout: image_0/ (left), a disparity directory with
/// 16-bit PNGs (value / 256 = pixels) named like the images, calib.txt with
/// P0/P1 rows, optional times.txt.
inline Sequence load_kitti(const std::filesystem::path& root,
                           const std::optional<std::filesystem::path>& calibration = std::nullopt) {
  namespace fs = std::filesystem;
  Sequence seq;
  seq.K = read_intrinsics(detail::find_calibration(root, calibration));
  seq.depth_kind = DepthKind::disparity;
  seq.depth_scale = kKittiDisparityScale;
  if (!fs::is_directory(root / "image_0")) fail(Errc::io_error, root.string() + " has no image_0 directory");
  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(root / "image_0"))
    if (e.is_regular_file() && detail::is_image_file(e.path())) images.push_back(e.path());
  std::sort(images.begin(), images.end());
  if (images.empty()) fail(Errc::invalid_argument, "sequence " + root.string() + " has no images");

  std::optional<fs::path> disp_dir;
  for (const char* name : {"disp_0", "disparity", "disp"})
    if (fs::is_directory(root / name)) {
      disp_dir = root / name;
      break;
    }
  if (!disp_dir) seq.warnings.push_back("no disparity directory in " + root.string());

  std::vector<double> times;
  if (std::ifstream tf(root / "times.txt"); tf) {
    double t;
    while (tf >> t) times.push_back(t);
    if (times.size() != images.size()) {
      seq.warnings.push_back("times.txt does not match the image count; using 10 Hz frame indices");
      times.clear();
    }
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    SequenceFrame f;
    f.index = i;
    f.timestamp = times.empty() ? 0.1 * static_cast<double>(i) : times[i];
    f.image = images[i];
    if (disp_dir) {
      const fs::path d = *disp_dir / (images[i].stem().string() + ".png");
      if (fs::exists(d))
        f.depth = d;
      else
        seq.warnings.push_back("no disparity for " + images[i].filename().string());
    }
    if (!seq.frames.empty() && !(f.timestamp > seq.frames.back().timestamp))
      fail(Errc::parse_error, "times.txt is not strictly increasing");
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

inline Sequence load_sequence(const std::filesystem::path& root, Layout layout,
                              const std::optional<std::filesystem::path>& calibration = std::nullopt) {
  if (!std::filesystem::is_directory(root)) fail(Errc::io_error, root.string() + " is not a directory");
  return layout == Layout::tum ? load_tum(root, calibration) : load_kitti(root, calibration);
}

namespace detail {

inline double stereo_fb(const Intrinsics& K) {
  if (!K.baseline || !(*K.baseline > 0.0))
    fail(Errc::invalid_argument, "disparity conversion needs a positive stereo baseline");
  return K.fx * *K.baseline;
}

}  // namespace detail

/// depth = fx * baseline / disparity where disparity > 0.5 px, else 0.
inline double disparity_to_depth(double disp, const Intrinsics& K) {
  const double fb = detail::stereo_fb(K);
  return std::isfinite(disp) && disp > kMinDisparity ? fb / disp : 0.0;
}

/// Inverse of disparity_to_depth on valid depths; invalid depth gives 0.
inline double depth_to_disparity(double depth, const Intrinsics& K) {
  const double fb = detail::stereo_fb(K);
  return is_valid_depth(depth) ? fb / depth : 0.0;
}

inline DepthMap disparity_to_depth(const ImageF& disp, const Intrinsics& K) {
  detail::stereo_fb(K);
  return map_pixels(disp, [&K](float d) { return static_cast<float>(disparity_to_depth(static_cast<double>(d), K)); });
}

inline ImageF depth_to_disparity(const DepthMap& depth, const Intrinsics& K) {
  detail::stereo_fb(K);
  return map_pixels(depth, [&K](float z) { return static_cast<float>(depth_to_disparity(static_cast<double>(z), K)); });
}

struct LoadedFrame {
  ImageU8 image;
  std::optional<DepthMap> depth;
};

inline LoadedFrame load_frame(const Sequence& seq, const SequenceFrame& f) {
  LoadedFrame out;
  out.image = read_image_u8(f.image);
  if (f.depth.empty() || seq.depth_kind == DepthKind::none) return out;
  const ImageU16 raw = read_image_u16(f.depth);
  if (!raw.same_shape(out.image)) fail(Errc::invalid_argument, "depth raster size differs for " + f.image.string());
  const double scale = seq.depth_scale;
  const ImageF scaled = map_pixels(raw, [scale](std::uint16_t v) { return static_cast<float>(v * scale); });
  out.depth = seq.depth_kind == DepthKind::disparity ? disparity_to_depth(scaled, seq.K) : scaled;
  return out;
}

}  // namespace bitvo
