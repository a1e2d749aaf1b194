#pragma once

#include <Eigen/Geometry>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bitvo/error.hpp"
#include "bitvo/geometry.hpp"

namespace bitvo {

struct TimedPose {
  double timestamp = 0.0;
  RigidTransform pose;  // camera-to-world
};

enum class TrajectoryFormat { tum, kitti };

inline TrajectoryFormat parse_trajectory_format(const std::string& s) {
  if (s == "tum") return TrajectoryFormat::tum;
  if (s == "kitti") return TrajectoryFormat::kitti;
  fail(Errc::invalid_argument, "unknown trajectory format '" + s + "' (expected tum|kitti)");
}

/// Poses ordered by strictly increasing timestamp (or frame index).
class Trajectory {
 public:
  void push_back(double timestamp, const RigidTransform& pose) {
    if (!poses_.empty() && !(timestamp > poses_.back().timestamp))
      fail(Errc::invalid_argument, "trajectory timestamps must be strictly increasing");
    poses_.push_back({timestamp, pose});
  }

  std::size_t size() const noexcept { return poses_.size(); }
  bool empty() const noexcept { return poses_.empty(); }
  const TimedPose& operator[](std::size_t i) const { return poses_[i]; }
  const TimedPose& back() const { return poses_.back(); }
  auto begin() const noexcept { return poses_.begin(); }
  auto end() const noexcept { return poses_.end(); }

 private:
  std::vector<TimedPose> poses_;
};

/// Nine significant digits, "%.9g".
inline std::string format_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Unit quaternion with non-negative w (x y z w order is left to callers).
inline Eigen::Quaterniond canonical_quaternion(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

/// TUM line: "timestamp tx ty tz qx qy qz qw".
inline std::string format_tum_line(const TimedPose& p) {
  char ts[32];
  std::snprintf(ts, sizeof ts, "%.6f", p.timestamp);
  const Vec3& t = p.pose.translation();
  const Eigen::Quaterniond q = canonical_quaternion(p.pose.rotation());
  std::string s = ts;
  for (double v : {t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()}) s += " " + format_g9(v);
  return s;
}

/// KITTI line: the 3x4 pose matrix, row-major.
inline std::string format_kitti_line(const TimedPose& p) {
  const Mat4 m = p.pose.matrix();
  std::string s;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) {
      if (!s.empty()) s += ' ';
      s += format_g9(m(r, c));
    }
  return s;
}

inline void write_trajectory(const Trajectory& traj, const std::filesystem::path& path,
                             TrajectoryFormat fmt) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write trajectory " + path.string());
  for (const auto& p : traj)
    out << (fmt == TrajectoryFormat::tum ? format_tum_line(p) : format_kitti_line(p)) << '\n';
  if (!out) fail(Errc::io_error, "write failed for " + path.string());
}

/// Reads TUM or KITTI poses. KITTI files carry no timestamps, so the frame
/// index is used.
inline Trajectory read_trajectory(const std::filesystem::path& path, TrajectoryFormat fmt) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open trajectory " + path.string());
  Trajectory traj;
  std::string line;
  int lineno = 0;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (v.empty() && ls.eof()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!ls.eof()) fail(Errc::parse_error, "non-numeric value at " + where);
    if (fmt == TrajectoryFormat::tum) {
      if (v.size() != 8) fail(Errc::parse_error, "TUM pose needs 8 values at " + where);
      Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
      if (!(q.norm() > 0.0)) fail(Errc::parse_error, "zero quaternion at " + where);
      q.normalize();
      traj.push_back(v[0], {q.toRotationMatrix(), Vec3(v[1], v[2], v[3])});
    } else {
      if (v.size() != 12) fail(Errc::parse_error, "KITTI pose needs 12 values at " + where);
      Mat4 m = Mat4::Identity();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
      traj.push_back(static_cast<double>(index), RigidTransform::from_matrix(m));
    }
    ++index;
  }
  return traj;
}

}  // namespace bitvo
