#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bitvo/error.hpp"
#include "bitvo/image.hpp"

namespace bitvo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat26 = Eigen::Matrix<double, 2, 6>;

/// Below this rotation angle se3_exp/se3_log switch to Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;
/// Points closer than this to the camera plane do not project.
inline constexpr double kMinProjectDepth = 1e-6;

/// Exponential coordinates theta = [omega, nu] of a rigid motion.
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 nu = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& w, const Vec3& v) : omega(w), nu(v) {}

  static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }

  Vec6 vector() const {
    Vec6 v;
    v << omega, nu;
    return v;
  }

  double norm() const { return vector().norm(); }
  Twist operator-() const { return {-omega, -nu}; }
  Twist operator*(double s) const { return {omega * s, nu * s}; }
};

inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) { return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)}; }

/// Element of SE(3) acting as X -> R X + t.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform identity() { return {}; }

  static RigidTransform from_matrix(const Mat4& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  RigidTransform inverse() const {
    const Mat3 rt = rotation_.transpose();
    return {rt, -(rt * translation_)};
  }

  Vec3 operator*(const Vec3& x) const { return rotation_ * x + translation_; }

  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation_ * o.rotation_, rotation_ * o.translation_ + translation_};
  }

  /// Rotation angle in radians from the trace, acos argument clamped.
  double rotation_angle() const {
    const double c = std::clamp((rotation_.trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c);
  }

  double translation_norm() const { return translation_.norm(); }

  /// Max deviation of R^T R from identity and |det R - 1|.
  double orthonormality_error() const {
    const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
    return std::max(ortho, std::abs(rotation_.determinant() - 1.0));
  }

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Closed-form exponential map, theta = [omega, nu].
inline RigidTransform se3_exp(const Twist& xi) {
  const double theta = xi.omega.norm();
  const Mat3 W = hat(xi.omega);
  if (theta < kSmallAngle) {
    const Mat3 W2 = W * W;
    const Mat3 R = Mat3::Identity() + W + 0.5 * W2;
    const Mat3 A = Mat3::Identity() + 0.5 * W + (1.0 / 6.0) * W2;
    return {R, A * xi.nu};
  }
  const Mat3 K = W / theta;
  const Mat3 K2 = K * K;
  const double s = std::sin(theta);
  // Half-angle and series forms avoid cancellation at small angles.
  const double sh = std::sin(0.5 * theta);
  const double cbar = 2.0 * sh * sh;
  const double t2 = theta * theta;
  const double theta_minus_s =
      theta < 1e-2 ? theta * t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0)))
                   : theta - s;
  const Mat3 R = Mat3::Identity() + s * K + cbar * K2;
  const Mat3 A = Mat3::Identity() + (cbar / theta) * K + (theta_minus_s / theta) * K2;
  return {R, A * xi.nu};
}

/// Inverse of se3_exp for rotation angles below pi - 1e-6.
inline Twist se3_log(const RigidTransform& T) {
  const Mat3& R = T.rotation();
  const Vec3 v = vee(R);  // 2 sin(theta) * axis
  const double sin_theta = 0.5 * v.norm();
  const double cos_theta = 0.5 * (R.trace() - 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta > std::numbers::pi - 1e-6)
    fail(Errc::ambiguous_rotation, "rotation angle too close to pi for a unique logarithm");

  Vec3 omega;
  double b;  // coefficient of W^2 in A^-1 = I - W/2 + b W^2
  if (theta < kSmallAngle) {
    omega = 0.5 * v;
    b = 1.0 / 12.0;
  } else {
    omega = (theta / (2.0 * sin_theta)) * v;
    // b = (1 - (theta/2) cot(theta/2)) / theta^2, by series near 0.
    const double t2 = theta * theta;
    if (theta < 1e-2) {
      b = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
    } else {
      const double h = 0.5 * theta;
      b = (1.0 - h / std::tan(h)) / t2;
    }
  }
  const Mat3 W = hat(omega);
  const Mat3 A_inv = Mat3::Identity() - 0.5 * W + b * W * W;
  return {omega, A_inv * T.translation()};
}

/// Pinhole calibration; baseline is only present for stereo rigs.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::optional<double> baseline;

  /// Calibration of pyramid level k, where level-k pixel (x, y) sits at
  /// (2^k x, 2^k y) on level 0.
  Intrinsics at_level(int k) const {
    const double s = 1.0 / static_cast<double>(1 << k);
    return {fx * s, fy * s, cx * s, cy * s, baseline};
  }

  Mat3 matrix() const {
    Mat3 K;
    K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return K;
  }
};

/// Real-valued depths in meters; non-positive or non-finite entries are invalid.
using DepthMap = ImageF;

inline bool is_valid_depth(double d) noexcept { return std::isfinite(d) && d > 0.0; }

inline Vec3 backproject(const Intrinsics& K, const Vec2& p, double depth) {
  if (!is_valid_depth(depth)) fail(Errc::invalid_depth, "backprojection needs a positive depth");
  return {(p.x() - K.cx) * depth / K.fx, (p.y() - K.cy) * depth / K.fy, depth};
}

/// Pixel coordinates, or nullopt for points at or behind the camera plane.
inline std::optional<Vec2> project(const Intrinsics& K, const Vec3& X) {
  if (!(X.z() > kMinProjectDepth)) return std::nullopt;
  return Vec2{K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy};
}

/// p' = project(T * backproject(p, d)).
inline std::optional<Vec2> warp_pixel(const RigidTransform& T, const Intrinsics& K, const Vec2& p,
                                      double depth) {
  return project(K, T * backproject(K, p, depth));
}

/// Derivative of the warp w.r.t. theta = [omega, nu] at theta = 0 for the
/// reference-frame point X. Columns follow the Twist ordering.
inline Mat26 warp_jacobian(const Intrinsics& K, const Vec3& X) {
  const double iz = 1.0 / X.z();
  const double x = X.x() * iz;
  const double y = X.y() * iz;
  Mat26 J;
  J << -K.fx * x * y, K.fx * (1.0 + x * x), -K.fx * y, K.fx * iz, 0.0, -K.fx * x * iz,
       -K.fy * (1.0 + y * y), K.fy * x * y, K.fy * x, 0.0, K.fy * iz, -K.fy * y * iz;
  return J;
}

/// Parses a calibration text. Accepted forms (first match wins):
///   "fx fy cx cy [baseline]" on one line, '#' starting a comment;
///   KITTI-style "P0: ..." / "P1: ..." projection rows (baseline from P1).
inline Intrinsics parse_intrinsics(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::optional<std::vector<double>> p0, p1;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "P0:" || first == "P1:") {
      std::vector<double> vals;
      double v;
      while (ls >> v) vals.push_back(v);
      if (vals.size() != 12) fail(Errc::parse_error, "projection row " + first + " needs 12 values");
      (first == "P0:" ? p0 : p1) = vals;
      continue;
    }
    if (first.back() == ':') continue;  // other KITTI rows (P2:, Tr:, ...)
    std::istringstream all(line);
    std::vector<double> vals;
    double v;
    while (all >> v) vals.push_back(v);
    if (!all.eof() || (vals.size() != 4 && vals.size() != 5))
      fail(Errc::parse_error, "calibration line must be 'fx fy cx cy [baseline]': " + line);
    Intrinsics K{vals[0], vals[1], vals[2], vals[3], std::nullopt};
    if (vals.size() == 5) K.baseline = vals[4];
    if (!(K.fx > 0.0 && K.fy > 0.0)) fail(Errc::parse_error, "focal lengths must be positive");
    return K;
  }
  if (p0) {
    const auto& P = *p0;
    Intrinsics K{P[0], P[5], P[2], P[6], std::nullopt};
    if (p1 && (*p1)[0] != 0.0) K.baseline = -(*p1)[3] / (*p1)[0];
    if (!(K.fx > 0.0 && K.fy > 0.0)) fail(Errc::parse_error, "focal lengths must be positive");
    return K;
  }
  fail(Errc::parse_error, "no calibration found");
}

inline Intrinsics read_intrinsics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open calibration file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_intrinsics(ss.str());
}

inline std::string format_intrinsics(const Intrinsics& K) {
  std::ostringstream out;
  out.precision(12);
  out << K.fx << " " << K.fy << " " << K.cx << " " << K.cy;
  if (K.baseline) out << " " << *K.baseline;
  return out.str();
}

}  // namespace bitvo
