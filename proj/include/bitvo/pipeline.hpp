#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "bitvo/descriptor.hpp"
#include "bitvo/error.hpp"
#include "bitvo/geometry.hpp"
#include "bitvo/image.hpp"
#include "bitvo/imgproc.hpp"
#include "bitvo/solver.hpp"
#include "bitvo/trajectory.hpp"

namespace bitvo {

struct KeyframeConfig {
  double motion_threshold_trans = 0.3;                        // meters
  double motion_threshold_rot = 5.0 * std::numbers::pi / 180.0;  // radians
  double good_fraction_min = 0.60;
  double good_percentile = 0.80;

  /// Never replace the first keyframe.
  static KeyframeConfig disabled() {
    const double inf = std::numeric_limits<double>::infinity();
    return {inf, inf, 0.0, 0.80};
  }
};

struct VoConfig {
  DescriptorConfig descriptor;
  SelectionConfig selection;
  RobustConfig robust;
  KeyframeConfig keyframe;
};

/// Level k+1 depth at (x, y) is the level-k value at (2x, 2y), or else the
/// first valid one among its 2x2 block.
inline DepthMap downsample_depth(const DepthMap& d) {
  const int w = d.width() / 2;
  const int h = d.height() / 2;
  if (w < 1 || h < 1) fail(Errc::invalid_argument, "depth map too small to downsample");
  DepthMap out(w, h, 0.0f);
  static constexpr int kOrder[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (const auto& o : kOrder) {
        const float v = d(2 * x + o[0], 2 * y + o[1]);
        if (is_valid_depth(v)) {
          out(x, y) = v;
          break;
        }
      }
  return out;
}

/// Descriptor of every pyramid level of an intensity image.
template <typename T>
std::vector<ChannelStack> descriptor_pyramid(const Image<T>& img, int levels,
                                             const DescriptorConfig& cfg) {
  const Pyramid<float> pyr = build_pyramid(img, levels);
  std::vector<ChannelStack> out;
  out.reserve(pyr.size());
  for (const auto& level : pyr.levels) out.push_back(compute_descriptor(level, cfg));
  return out;
}

/// Reference data of one keyframe, per pyramid level (index 0 = finest).
/// Levels with fewer than six selected pixels stay empty and are skipped
/// by the solver.
struct Keyframe {
  std::vector<LevelReference> levels;
  RigidTransform pose;  // camera-to-world
  int width = 0;
  int height = 0;
  std::optional<float> good_weight_threshold;

  std::size_t num_levels() const noexcept { return levels.size(); }
};

inline Keyframe make_keyframe(const std::vector<ChannelStack>& desc, const DepthMap& depth,
                              const Intrinsics& K, const RigidTransform& pose,
                              const SelectionConfig& sel_cfg = {},
                              const ImageF* intensity = nullptr) {
  if (desc.empty()) fail(Errc::invalid_argument, "keyframe needs at least one pyramid level");
  if (desc[0].width() != depth.width() || desc[0].height() != depth.height())
    fail(Errc::invalid_argument, "depth map does not match the image size");
  Keyframe kf;
  kf.pose = pose;
  kf.width = desc[0].width();
  kf.height = desc[0].height();
  kf.levels.resize(desc.size());
  DepthMap d = depth;
  for (std::size_t k = 0; k < desc.size(); ++k) {
    if (k > 0) d = downsample_depth(d);
    if (d.width() != desc[k].width() || d.height() != desc[k].height())
      fail(Errc::invalid_argument, "depth pyramid does not match the descriptor pyramid");
    try {
      kf.levels[k] = prepare_level(desc[k], d, K.at_level(static_cast<int>(k)), sel_cfg);
    } catch (const Error& e) {
      if (e.code() != Errc::empty_selection) throw;
    }
    if (!kf.levels[k].usable()) kf.levels[k] = LevelReference{};
  }
  if (intensity && intensity->width() == kf.width && intensity->height() == kf.height)
    for (const auto& px : kf.levels[0].selection) kf.levels[0].intensity.push_back((*intensity)(px.x, px.y));
  if (!kf.levels[0].usable())
    fail(Errc::degraded_keyframe, "fewer than 6 usable pixels at the finest keyframe level");
  return kf;
}

template <typename T>
Keyframe make_keyframe(const Image<T>& img, const DepthMap& depth, const Intrinsics& K,
                       const RigidTransform& pose, const VoConfig& cfg = {}) {
  const int levels = compute_num_levels(img.width(), img.height());
  const ImageF base = convert<float>(img);
  return make_keyframe(descriptor_pyramid(base, levels, cfg.descriptor), depth, K, pose, cfg.selection,
                       &base);
}

/// Weight w such that a fraction `percentile` of `weights` is >= w.
inline float percentile_threshold(std::span<const float> weights, double percentile) {
  if (weights.empty()) return 0.0f;
  std::vector<float> s(weights.begin(), weights.end());
  std::sort(s.begin(), s.end());
  // The epsilon keeps exact products such as 0.2 * 100 from flooring low.
  const double drop = (1.0 - percentile) * static_cast<double>(s.size()) + 1e-9;
  const auto idx = std::min(s.size() - 1, static_cast<std::size_t>(std::floor(drop)));
  return s[idx];
}

/// Fraction of pixels with a positive weight of at least `threshold`.
/// Pixels warped out of the image carry weight 0 and never count.
inline double good_point_fraction(std::span<const float> weights, float threshold) {
  if (weights.empty()) return 0.0;
  std::size_t good = 0;
  for (float w : weights)
    if (w > 0.0f && w >= threshold) ++good;
  return static_cast<double>(good) / static_cast<double>(weights.size());
}

inline bool should_create_keyframe(const RigidTransform& rel, const OptimizeStats& stats,
                                   const KeyframeConfig& cfg) {
  return rel.translation_norm() > cfg.motion_threshold_trans ||
         rel.rotation_angle() > cfg.motion_threshold_rot ||
         stats.good_fraction < cfg.good_fraction_min;
}

enum class FrameStatus { tracked, keyframe, tracking_lost };

inline const char* to_string(FrameStatus s) noexcept {
  switch (s) {
    case FrameStatus::tracked: return "tracked";
    case FrameStatus::keyframe: return "keyframe";
    case FrameStatus::tracking_lost: return "lost";
  }
  return "?";
}

/// Wall time per stage in milliseconds.
struct StageTimings {
  double pyramid_ms = 0.0;
  double descriptor_ms = 0.0;
  double jacobian_ms = 0.0;
  double tracking_ms = 0.0;
};

struct FrameResult {
  std::size_t index = 0;
  double timestamp = 0.0;
  RigidTransform global_pose;
  RigidTransform relative_pose;  // current camera in keyframe coordinates
  OptimizeStats stats;
  FrameStatus status = FrameStatus::tracked;
  bool keyframe_deferred = false;
  StageTimings timings;
};

/// Frame-to-keyframe tracking loop.
class VisualOdometry {
 public:
  explicit VisualOdometry(const Intrinsics& K, VoConfig cfg = {}) : K_(K), cfg_(std::move(cfg)) {}

  /// `depth` may be null except for the first frame. Without a timestamp
  /// the frame index is used.
  template <typename T>
  FrameResult process_frame(const Image<T>& img, const DepthMap* depth = nullptr,
                            std::optional<double> timestamp = std::nullopt) {
    using clock = std::chrono::steady_clock;
    auto ms = [](clock::time_point a, clock::time_point b) {
      return std::chrono::duration<double, std::milli>(b - a).count();
    };
    FrameResult res;
    res.index = frame_count_;
    res.timestamp = timestamp.value_or(static_cast<double>(frame_count_));
    if (frame_count_ == 0) {
      if (!depth) fail(Errc::missing_depth, "the first frame must carry depth");
      levels_ = compute_num_levels(img.width(), img.height());
      width_ = img.width();
      height_ = img.height();
    } else if (img.width() != width_ || img.height() != height_) {
      fail(Errc::invalid_argument, "frame size changed mid-sequence");
    }

    const auto t0 = clock::now();
    const Pyramid<float> pyr = build_pyramid(img, levels_);
    const auto t1 = clock::now();
    std::vector<ChannelStack> desc;
    desc.reserve(pyr.size());
    for (const auto& level : pyr.levels) desc.push_back(compute_descriptor(level, cfg_.descriptor));
    const auto t2 = clock::now();
    res.timings.pyramid_ms = ms(t0, t1);
    res.timings.descriptor_ms = ms(t1, t2);

    if (!keyframe_) {
      install_keyframe(desc, pyr[0], *depth, RigidTransform::identity(), res);
      res.status = FrameStatus::keyframe;
      res.global_pose = keyframe_->pose;
      finish(res);
      return res;
    }

    if (!has_structure(desc[0])) {
      lost(res, "frame " + std::to_string(res.index) + " has no image structure");
      return res;
    }

    PyramidResult pr;
    const auto t3 = clock::now();
    try {
      pr = optimize_pyramid(keyframe_->levels, desc, warp_, cfg_.robust);
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_system) throw;
      lost(res, "frame " + std::to_string(res.index) + ": " + e.what());
      return res;
    }
    res.timings.tracking_ms = ms(t3, clock::now());

    warp_ = pr.pose;
    res.stats = std::move(pr.stats);
    if (!keyframe_->good_weight_threshold)
      keyframe_->good_weight_threshold =
          percentile_threshold(res.stats.pixel_weights, cfg_.keyframe.good_percentile);
    res.stats.good_fraction = good_point_fraction(res.stats.pixel_weights, *keyframe_->good_weight_threshold);
    res.relative_pose = warp_.inverse();
    res.global_pose = keyframe_->pose * res.relative_pose;
    res.status = FrameStatus::tracked;

    if (should_create_keyframe(res.relative_pose, res.stats, cfg_.keyframe)) {
      if (depth) {
        try {
          install_keyframe(desc, pyr[0], *depth, res.global_pose, res);
          res.status = FrameStatus::keyframe;
        } catch (const Error& e) {
          if (e.code() != Errc::degraded_keyframe) throw;
          warn("frame " + std::to_string(res.index) + ": keyframe not replaced: " + e.what());
        }
      } else {
        res.keyframe_deferred = true;
        warn("frame " + std::to_string(res.index) + ": keyframe deferred, no depth");
      }
    }
    finish(res);
    return res;
  }

  const Trajectory& trajectory() const noexcept { return trajectory_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  const Keyframe* keyframe() const noexcept { return keyframe_ ? &*keyframe_ : nullptr; }
  std::size_t keyframe_count() const noexcept { return keyframe_count_; }
  std::size_t lost_count() const noexcept { return lost_count_; }
  int num_levels() const noexcept { return levels_; }
  const VoConfig& config() const noexcept { return cfg_; }

  /// Writes the finest-level 3-D points of the current keyframe, in world
  /// coordinates, colored by their reference intensity when available.
  void write_keyframe_ply(const std::filesystem::path& path) const {
    if (!keyframe_) fail(Errc::invalid_argument, "no keyframe to dump");
    const LevelReference& lr = keyframe_->levels[0];
    std::ofstream out(path);
    if (!out) fail(Errc::io_error, "cannot write " + path.string());
    out << "ply\nformat ascii 1.0\nelement vertex " << lr.points.size()
        << "\nproperty float x\nproperty float y\nproperty float z\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    for (std::size_t i = 0; i < lr.points.size(); ++i) {
      const Vec3 X = keyframe_->pose * lr.points[i];
      int g = 128;
      if (i < lr.intensity.size()) g = std::clamp(static_cast<int>(std::lround(lr.intensity[i])), 0, 255);
      out << X.x() << ' ' << X.y() << ' ' << X.z() << ' ' << g << ' ' << g << ' ' << g << '\n';
    }
  }

 private:
  void install_keyframe(const std::vector<ChannelStack>& desc, const ImageF& base,
                        const DepthMap& depth, const RigidTransform& pose, FrameResult& res) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    Keyframe kf = make_keyframe(desc, depth, K_, pose, cfg_.selection, &base);
    res.timings.jacobian_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    keyframe_ = std::move(kf);
    warp_ = RigidTransform::identity();
    ++keyframe_count_;
  }

  void lost(FrameResult& res, const std::string& why) {
    res.status = FrameStatus::tracking_lost;
    res.global_pose = trajectory_.empty() ? RigidTransform::identity() : trajectory_.back().pose;
    res.relative_pose = keyframe_ ? keyframe_->pose.inverse() * res.global_pose : RigidTransform::identity();
    res.stats.good_fraction = 0.0;
    ++lost_count_;
    warn(why + ", pose held");
    finish(res);
  }

  void finish(const FrameResult& res) {
    trajectory_.push_back(res.timestamp, res.global_pose);
    ++frame_count_;
  }

  void warn(std::string msg) { warnings_.push_back(std::move(msg)); }

  Intrinsics K_;
  VoConfig cfg_;
  int levels_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::size_t frame_count_ = 0;
  std::size_t keyframe_count_ = 0;
  std::size_t lost_count_ = 0;
  std::optional<Keyframe> keyframe_;
  RigidTransform warp_;  // keyframe -> current camera, last estimate
  Trajectory trajectory_;
  std::vector<std::string> warnings_;
};

}  // namespace bitvo
