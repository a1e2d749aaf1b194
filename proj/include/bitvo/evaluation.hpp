#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bitvo/error.hpp"
#include "bitvo/geometry.hpp"
#include "bitvo/pipeline.hpp"
#include "bitvo/synthetic.hpp"
#include "bitvo/trajectory.hpp"

namespace bitvo {

inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

inline const std::vector<double>& default_rpe_lengths() {
  static const std::vector<double> lengths{100, 200, 300, 400, 500, 600, 700, 800};
  return lengths;
}

/// Speed bucket centers in km/h; a subsequence counts toward every center
/// strictly within 7.2 km/h of its mean speed (boundary excluded despite
/// rounding in the speed itself).
inline const std::vector<double>& default_speed_buckets() {
  static const std::vector<double> speeds{14.4, 21.6, 28.8, 36.0, 43.2, 50.4, 57.6, 64.8, 72.0, 79.2, 86.4};
  return speeds;
}
inline constexpr double kSpeedBucketHalfWidth = 7.2;

struct RpeSegment {
  std::size_t first = 0;
  std::size_t last = 0;
  double length = 0.0;        // meters
  double speed_kmh = 0.0;
  double trans_pct = 0.0;     // percent of length
  double rot_deg_per_m = 0.0;
};

struct RpeBucket {
  double key = 0.0;  // length in m or speed in km/h
  double trans_pct = 0.0;
  double rot_deg_per_m = 0.0;
  std::size_t count = 0;
};

struct RpeReport {
  std::vector<RpeBucket> by_length;
  std::vector<RpeBucket> by_speed;
  std::vector<RpeSegment> segments;
  double mean_trans_pct = 0.0;
  double mean_rot_deg_per_m = 0.0;
};

/// Cumulative path length along the trajectory positions.
inline std::vector<double> path_distances(const Trajectory& traj) {
  std::vector<double> d(traj.size(), 0.0);
  for (std::size_t i = 1; i < traj.size(); ++i)
    d[i] = d[i - 1] + (traj[i].pose.translation() - traj[i - 1].pose.translation()).norm();
  return d;
}

/// Relative pose error over subsequences starting at every frame. The end
/// frame of a subsequence of length L is the first whose path distance
/// reaches start + L.
inline RpeReport evaluate_rpe(const Trajectory& est, const Trajectory& gt,
                              std::span<const double> lengths = default_rpe_lengths(),
                              std::span<const double> speed_buckets = default_speed_buckets()) {
  if (est.size() != gt.size()) fail(Errc::invalid_argument, "trajectories differ in length");
  RpeReport rep;
  const std::vector<double> dist = path_distances(gt);
  for (std::size_t first = 0; first < gt.size(); ++first) {
    for (double len : lengths) {
      const auto it = std::lower_bound(dist.begin() + static_cast<std::ptrdiff_t>(first), dist.end(),
                                       dist[first] + len);
      if (it == dist.end()) continue;
      const auto last = static_cast<std::size_t>(it - dist.begin());
      const RigidTransform gt_rel = gt[first].pose.inverse() * gt[last].pose;
      const RigidTransform est_rel = est[first].pose.inverse() * est[last].pose;
      const RigidTransform E = gt_rel.inverse() * est_rel;
      RpeSegment s;
      s.first = first;
      s.last = last;
      s.length = len;
      const double dt = gt[last].timestamp - gt[first].timestamp;
      s.speed_kmh = dt > 0.0 ? 3.6 * len / dt : 0.0;
      s.trans_pct = 100.0 * E.translation_norm() / len;
      s.rot_deg_per_m = E.rotation_angle() * kRadToDeg / len;
      rep.segments.push_back(s);
    }
  }
  auto bucket = [&](double key, auto&& member) {
    RpeBucket b;
    b.key = key;
    for (const auto& s : rep.segments)
      if (member(s)) {
        b.trans_pct += s.trans_pct;
        b.rot_deg_per_m += s.rot_deg_per_m;
        ++b.count;
      }
    if (b.count) {
      b.trans_pct /= static_cast<double>(b.count);
      b.rot_deg_per_m /= static_cast<double>(b.count);
    }
    return b;
  };
  for (double len : lengths)
    if (auto b = bucket(len, [len](const RpeSegment& s) { return s.length == len; }); b.count)
      rep.by_length.push_back(b);
  for (double v : speed_buckets)
    if (auto b = bucket(v, [v](const RpeSegment& s) {
          return s.speed_kmh > 0.0 && std::abs(s.speed_kmh - v) < kSpeedBucketHalfWidth - 1e-9;
        });
        b.count)
      rep.by_speed.push_back(b);
  for (const auto& s : rep.segments) {
    rep.mean_trans_pct += s.trans_pct;
    rep.mean_rot_deg_per_m += s.rot_deg_per_m;
  }
  if (!rep.segments.empty()) {
    rep.mean_trans_pct /= static_cast<double>(rep.segments.size());
    rep.mean_rot_deg_per_m /= static_cast<double>(rep.segments.size());
  }
  return rep;
}

struct AteReport {
  double rmse = 0.0;  // meters
  std::vector<double> errors;
  RigidTransform alignment;  // applied to est positions
};

/// Rigid (rotation + translation) alignment of est positions onto gt by
/// orthogonal Procrustes, then the RMSE of the residual translations.
inline AteReport evaluate_ate(const Trajectory& est, const Trajectory& gt) {
  if (est.size() != gt.size()) fail(Errc::invalid_argument, "trajectories differ in length");
  if (est.size() < 3) fail(Errc::invalid_argument, "ATE needs at least 3 poses");
  const std::size_t n = est.size();
  Vec3 me = Vec3::Zero(), mg = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    me += est[i].pose.translation();
    mg += gt[i].pose.translation();
  }
  me /= static_cast<double>(n);
  mg /= static_cast<double>(n);
  Mat3 H = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i)
    H += (gt[i].pose.translation() - mg) * (est[i].pose.translation() - me).transpose();
  const Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  const Mat3 R = svd.matrixU() * D * svd.matrixV().transpose();
  AteReport rep;
  rep.alignment = RigidTransform(R, mg - R * me);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = (rep.alignment * est[i].pose.translation() - gt[i].pose.translation()).norm();
    rep.errors.push_back(e);
    sq += e * e;
  }
  rep.rmse = std::sqrt(sq / static_cast<double>(n));
  return rep;
}

inline void write_rpe_csv(const RpeReport& rep, std::ostream& out) {
  out << "kind,bucket,translation_pct,rotation_deg_per_m,count\n";
  char line[160];
  for (const auto& b : rep.by_length) {
    std::snprintf(line, sizeof line, "length,%g,%.6f,%.8f,%zu\n", b.key, b.trans_pct, b.rot_deg_per_m, b.count);
    out << line;
  }
  for (const auto& b : rep.by_speed) {
    std::snprintf(line, sizeof line, "speed,%g,%.6f,%.8f,%zu\n", b.key, b.trans_pct, b.rot_deg_per_m, b.count);
    out << line;
  }
}

inline std::string format_rpe_summary(const RpeReport& rep) {
  std::ostringstream out;
  char line[160];
  if (rep.segments.empty()) return "RPE: no subsequence reaches the requested lengths\n";
  for (const auto& b : rep.by_length) {
    std::snprintf(line, sizeof line, "  %5g m: %7.3f %%  %.5f deg/m  (%zu)\n", b.key, b.trans_pct,
                  b.rot_deg_per_m, b.count);
    out << line;
  }
  std::snprintf(line, sizeof line, "RPE average: %.3f %% translation, %.5f deg/m rotation over %zu segments\n",
                rep.mean_trans_pct, rep.mean_rot_deg_per_m, rep.segments.size());
  out << line;
  return out.str();
}

/// Pose error of one estimate against ground truth.
struct PoseError {
  double translation = 0.0;  // meters
  double rotation_deg = 0.0;
};

inline PoseError pose_error(const RigidTransform& est, const RigidTransform& gt) {
  const RigidTransform E = gt.inverse() * est;
  return {E.translation_norm(), E.rotation_angle() * kRadToDeg};
}

struct AblationRow {
  double sigma_pre = 0.0;
  double sigma_channel = 0.0;
  PoseError error;
  int iterations = 0;
};

/// Two-frame alignment error per (sigma_pre, sigma_channel) pair on the
/// given scene (frame 1 is seen through the scene twist).
inline std::vector<AblationRow> ablate_smoothing(const SynthConfig& scene, std::span<const double> sigma_pre,
                                                 std::span<const double> sigma_channel,
                                                 const VoConfig& base = {}) {
  const SyntheticSequence seq = generate_synthetic(scene, 2);
  const RigidTransform gt_rel = seq.ground_truth[0].pose.inverse() * seq.ground_truth[1].pose;
  std::vector<AblationRow> rows;
  for (double s0 : sigma_pre)
    for (double s1 : sigma_channel) {
      VoConfig cfg = base;
      cfg.descriptor.sigma_pre = s0;
      cfg.descriptor.sigma_channel = s1;
      cfg.keyframe = KeyframeConfig::disabled();
      VisualOdometry vo(seq.K, cfg);
      vo.process_frame(seq.frames[0].image, &seq.frames[0].depth, seq.frames[0].timestamp);
      const FrameResult r = vo.process_frame(seq.frames[1].image, nullptr, seq.frames[1].timestamp);
      rows.push_back({s0, s1, pose_error(r.relative_pose, gt_rel), r.stats.total_iterations()});
    }
  return rows;
}

inline void write_ablation_csv(std::span<const AblationRow> rows, std::ostream& out) {
  out << "sigma_pre,sigma_channel,translation_error_m,rotation_error_deg,iterations\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%g,%g,%.9g,%.9g,%d\n", r.sigma_pre, r.sigma_channel,
                  r.error.translation, r.error.rotation_deg, r.iterations);
    out << line;
  }
}

}  // namespace bitvo
