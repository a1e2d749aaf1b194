#pragma once

#include <Eigen/LU>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bitvo/error.hpp"
#include "bitvo/geometry.hpp"
#include "bitvo/image.hpp"
#include "bitvo/image_io.hpp"
#include "bitvo/parallel.hpp"
#include "bitvo/trajectory.hpp"

namespace bitvo {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct NoiseSample {
  double value = 0.0;
  double du = 0.0;
  double dv = 0.0;
};

/// Cubic B-spline interpolation of hashed lattice values in [-1, 1]: a C2,
/// band-limited random field defined over the whole plane.
class ValueNoise {
 public:
  explicit ValueNoise(std::uint64_t seed, double cell = 1.0) : seed_(splitmix64(seed)), inv_cell_(1.0 / cell) {
    if (!(cell > 0.0)) fail(Errc::invalid_argument, "noise cell size must be > 0");
  }

  double operator()(double u, double v) const { return eval<false>(u, v).value; }
  NoiseSample with_gradient(double u, double v) const { return eval<true>(u, v); }

  /// Tabulates the lattice over the pixel rectangle [u0, u1] x [v0, v1];
  /// lookups outside it still hash. Values are unchanged.
  void cache(double u0, double v0, double u1, double v1) {
    ci0_ = static_cast<std::int64_t>(std::floor(u0 * inv_cell_)) - 2;
    cj0_ = static_cast<std::int64_t>(std::floor(v0 * inv_cell_)) - 2;
    cni_ = static_cast<std::int64_t>(std::floor(u1 * inv_cell_)) + 3 - ci0_;
    cnj_ = static_cast<std::int64_t>(std::floor(v1 * inv_cell_)) + 3 - cj0_;
    table_.resize(static_cast<std::size_t>(cni_ * cnj_));
    for (std::int64_t j = 0; j < cnj_; ++j)
      for (std::int64_t i = 0; i < cni_; ++i)
        table_[static_cast<std::size_t>(j * cni_ + i)] = hash_lattice(ci0_ + i, cj0_ + j);
  }

 private:
  double lattice(std::int64_t i, std::int64_t j) const noexcept {
    const std::int64_t a = i - ci0_, b = j - cj0_;
    if (a >= 0 && b >= 0 && a < cni_ && b < cnj_) return table_[static_cast<std::size_t>(b * cni_ + a)];
    return hash_lattice(i, j);
  }

  double hash_lattice(std::int64_t i, std::int64_t j) const noexcept {
    const std::uint64_t h = splitmix64(seed_ ^ splitmix64(static_cast<std::uint64_t>(i) * 0x632be59bd9b4e019ULL +
                                                          static_cast<std::uint64_t>(j)));
    return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
  }

  static void weights(double t, double w[4], double dw[4]) noexcept {
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double s = 1.0 - t;
    w[0] = s * s * s / 6.0;
    w[1] = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0;
    w[2] = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0;
    w[3] = t3 / 6.0;
    dw[0] = -0.5 * s * s;
    dw[1] = 1.5 * t2 - 2.0 * t;
    dw[2] = -1.5 * t2 + t + 0.5;
    dw[3] = 0.5 * t2;
  }

  template <bool Grad>
  NoiseSample eval(double u, double v) const noexcept {
    u *= inv_cell_;
    v *= inv_cell_;
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const auto iu = static_cast<std::int64_t>(fu);
    const auto iv = static_cast<std::int64_t>(fv);
    double wu[4], dwu[4], wv[4], dwv[4];
    weights(u - fu, wu, dwu);
    weights(v - fv, wv, dwv);
    NoiseSample s;
    for (int b = 0; b < 4; ++b) {
      double row = 0.0, drow = 0.0;
      for (int a = 0; a < 4; ++a) {
        const double l = lattice(iu + a - 1, iv + b - 1);
        row += wu[a] * l;
        if constexpr (Grad) drow += dwu[a] * l;
      }
      s.value += wv[b] * row;
      if constexpr (Grad) {
        s.du += wv[b] * drow;
        s.dv += dwv[b] * row;
      }
    }
    s.du *= inv_cell_;
    s.dv *= inv_cell_;
    return s;
  }

  std::uint64_t seed_;
  double inv_cell_;
  std::vector<double> table_;
  std::int64_t ci0_ = 0, cj0_ = 0, cni_ = 0, cnj_ = 0;
};

enum class DepthModel { plane, random };

enum class Corruption { none, gamma, gain_bias, alternating_gamma };

inline Corruption parse_corruption(const std::string& s) {
  if (s == "none") return Corruption::none;
  if (s == "gamma") return Corruption::gamma;
  if (s == "gain-bias") return Corruption::gain_bias;
  if (s == "alternating") return Corruption::alternating_gamma;
  fail(Errc::invalid_argument, "unknown corruption '" + s + "' (none|gamma|gain-bias|alternating)");
}

struct SynthConfig {
  int width = 640;
  int height = 480;
  std::optional<Intrinsics> intrinsics;  // default: fx = fy = 525 width / 640, centered principal point
  std::uint64_t seed = 1;

  // Texture, as a function of frame-0 pixel coordinates.
  double texture_scale = 4.0;  // lattice spacing of the finer octave, pixels
  double intensity_lo = 20.0;
  double intensity_hi = 235.0;
  double noise_sigma = 0.0;  // per-frame Gaussian sensor noise before quantization
  // Slowly varying illumination: the texture above intensity_lo is scaled
  // by a factor in [1 - shading, 1] with correlation length shading_scale.
  double shading = 0.0;
  double shading_scale = 160.0;  // pixels

  DepthModel depth_model = DepthModel::plane;
  double plane_depth = 3.0;
  double depth_min = 2.0;
  double depth_max = 4.0;
  double depth_scale = 80.0;  // correlation length of random depth, pixels

  // Frame k is seen from T_k = exp(k twist + a(k)), where component j of
  // a(k) is oscillation_j sin(2 pi k / period + phase_j), components in
  // Twist order. Period 0 turns the oscillation off.
  Twist twist;
  Twist oscillation;
  std::array<double, 6> oscillation_phase{};
  double oscillation_period = 0.0;  // frames

  Corruption corruption = Corruption::none;
  double gamma = 1.0;
  double gain = 1.0;
  double bias = 0.0;
  std::array<double, 2> alternating{0.6, 1.4};  // even, odd frames

  double frame_rate = 30.0;

  Intrinsics camera() const {
    if (intrinsics) return *intrinsics;
    const double f = 525.0 * width / 640.0;
    return {f, f, 0.5 * (width - 1), 0.5 * (height - 1), std::nullopt};
  }
};

/// Continuous scene: texture and depth over frame-0 pixel coordinates.
class SyntheticScene {
 public:
  explicit SyntheticScene(const SynthConfig& cfg)
      : cfg_(cfg),
        fine_(cfg.seed * 4 + 0, cfg.texture_scale),
        coarse_(cfg.seed * 4 + 1, cfg.texture_scale * 2.7),
        depth_noise_(cfg.seed * 4 + 2, cfg.depth_scale),
        shading_(cfg.seed * 4 + 3, cfg.shading_scale) {
    if (cfg.depth_model == DepthModel::plane && !(cfg.plane_depth > 0.0))
      fail(Errc::invalid_argument, "plane depth must be positive");
    if (cfg.depth_model == DepthModel::random && !(cfg.depth_min > 0.0 && cfg.depth_max >= cfg.depth_min))
      fail(Errc::invalid_argument, "random depth range must be positive and ordered");
    if (!(cfg.intensity_hi >= cfg.intensity_lo)) fail(Errc::invalid_argument, "intensity range is empty");
    if (!(cfg.shading >= 0.0 && cfg.shading <= 1.0)) fail(Errc::invalid_argument, "shading must be in [0, 1]");
    // Source points stay near the frame-0 image for renderable motions.
    const double w = cfg.width, h = cfg.height;
    for (ValueNoise* n : {&fine_, &coarse_, &depth_noise_, &shading_}) n->cache(-w, -h, 2.0 * w, 2.0 * h);
  }

  /// Real-valued intensity in [intensity_lo, intensity_hi].
  double intensity(double u, double v) const {
    const double n = 0.65 * fine_(u, v) + 0.35 * coarse_(u, v);
    double albedo = 0.5 + 0.5 * std::tanh(n / 0.3);
    if (cfg_.shading > 0.0) albedo *= 1.0 - cfg_.shading * (0.5 + 0.5 * std::tanh(shading_(u, v) / 0.3));
    return cfg_.intensity_lo + (cfg_.intensity_hi - cfg_.intensity_lo) * albedo;
  }

  /// Depth and its gradient w.r.t. (u, v).
  NoiseSample depth(double u, double v) const {
    if (cfg_.depth_model == DepthModel::plane) return {cfg_.plane_depth, 0.0, 0.0};
    const NoiseSample n = depth_noise_.with_gradient(u, v);
    const double mid = 0.5 * (cfg_.depth_min + cfg_.depth_max);
    const double half = 0.5 * (cfg_.depth_max - cfg_.depth_min);
    const double t = std::tanh(n.value / 0.3);
    const double dt = half * (1.0 - t * t) / 0.3;
    return {mid + half * t, dt * n.du, dt * n.dv};
  }

  Vec3 point(const Intrinsics& K, double u, double v) const {
    const double z = depth(u, v).value;
    return {(u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z};
  }

  /// Frame-0 coordinates u with project(T * point(u)) = q, by Newton
  /// iteration from `guess`. nullopt if it does not converge in front of
  /// the camera.
  std::optional<Vec2> solve_source(const RigidTransform& T, const Intrinsics& K, const Vec2& q,
                                   const Vec2& guess) const {
    Vec2 u = guess;
    const Mat3& R = T.rotation();
    for (int it = 0; it < 40; ++it) {
      const NoiseSample d = depth(u.x(), u.y());
      const Vec3 ray((u.x() - K.cx) / K.fx, (u.y() - K.cy) / K.fy, 1.0);
      const Vec3 X = d.value * ray;
      const Vec3 Xc = R * X + T.translation();
      if (!(Xc.z() > kMinProjectDepth)) return std::nullopt;
      const double iz = 1.0 / Xc.z();
      const Vec2 f(K.fx * Xc.x() * iz + K.cx - q.x(), K.fy * Xc.y() * iz + K.cy - q.y());
      if (f.squaredNorm() < 1e-16) return u;
      Eigen::Matrix<double, 3, 2> dX;
      dX.col(0) = d.du * ray + Vec3(d.value / K.fx, 0.0, 0.0);
      dX.col(1) = d.dv * ray + Vec3(0.0, d.value / K.fy, 0.0);
      Eigen::Matrix<double, 2, 3> P;
      P << K.fx * iz, 0.0, -K.fx * Xc.x() * iz * iz, 0.0, K.fy * iz, -K.fy * Xc.y() * iz * iz;
      const Eigen::Matrix2d J = P * R * dX;
      if (!(std::abs(J.determinant()) > 1e-12)) return std::nullopt;
      Vec2 step = J.inverse() * f;
      const double n = step.norm();
      if (n > 50.0) step *= 50.0 / n;
      u -= step;
      if (step.squaredNorm() < 1e-16) return u;
    }
    return std::nullopt;
  }

  const SynthConfig& config() const noexcept { return cfg_; }

 private:
  SynthConfig cfg_;
  ValueNoise fine_;
  ValueNoise coarse_;
  ValueNoise depth_noise_;
  ValueNoise shading_;
};

struct SyntheticFrame {
  double timestamp = 0.0;
  ImageU8 image;  // photometrically corrupted
  ImageU8 clean;
  DepthMap depth;
};

struct SyntheticSequence {
  Intrinsics K;
  std::vector<SyntheticFrame> frames;
  Trajectory ground_truth;  // camera-to-world, world = frame 0
};

/// 8-bit lookup table round(255 (v / 255)^gamma).
inline std::array<std::uint8_t, 256> gamma_lut(double gamma) {
  if (!(gamma > 0.0)) fail(Errc::invalid_argument, "gamma must be > 0");
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v)
    lut[static_cast<std::size_t>(v)] =
        static_cast<std::uint8_t>(std::lround(255.0 * std::pow(v / 255.0, gamma)));
  return lut;
}

inline ImageU8 apply_corruption(const ImageU8& img, const SynthConfig& cfg, std::size_t frame) {
  std::array<std::uint8_t, 256> lut{};
  switch (cfg.corruption) {
    case Corruption::none: return img;
    case Corruption::gamma: lut = gamma_lut(cfg.gamma); break;
    case Corruption::alternating_gamma: lut = gamma_lut(cfg.alternating[frame % 2]); break;
    case Corruption::gain_bias:
      for (int v = 0; v < 256; ++v)
        lut[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(
            std::clamp<long>(std::lround(cfg.gain * v + cfg.bias), 0, 255));
      break;
  }
  return map_pixels(img, [&](std::uint8_t v) { return lut[v]; });
}

/// World-to-camera transform T_k of frame k.
inline RigidTransform synthetic_motion(const SynthConfig& cfg, std::size_t k) {
  Vec6 xi = cfg.twist.vector() * static_cast<double>(k);
  if (cfg.oscillation_period > 0.0) {
    const Vec6 a = cfg.oscillation.vector();
    for (int j = 0; j < 6; ++j)
      xi[j] += a[j] * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / cfg.oscillation_period +
                               cfg.oscillation_phase[static_cast<std::size_t>(j)]);
  }
  return se3_exp(Twist::from_vector(xi));
}

/// Renders one frame of the scene from camera pose T^-1.
/// Pixels whose surface point leaves the frame-0 texture domain are still
/// defined (the texture is unbounded); pixels with no solution get 0 and an
/// invalid depth.
inline SyntheticFrame render_frame(const SyntheticScene& scene, const Intrinsics& K,
                                   const RigidTransform& T, int width, int height,
                                   std::size_t* valid_count = nullptr, std::size_t frame = 0) {
  const double noise = scene.config().noise_sigma;
  SyntheticFrame f;
  f.clean = ImageU8(width, height, 0);
  f.depth = DepthMap(width, height, 0.0f);
  std::vector<std::size_t> row_valid(static_cast<std::size_t>(height), 0);
  // Seeds for each row from a sequential pass down the first column.
  std::vector<std::optional<Vec2>> row_seed(static_cast<std::size_t>(height));
  std::optional<Vec2> seed;
  for (int y = 0; y < height; ++y) {
    const Vec2 q(0, y);
    std::optional<Vec2> u;
    if (seed) u = scene.solve_source(T, K, q, *seed);
    if (!u) u = scene.solve_source(T, K, q, q);
    if (u) seed = u;
    row_seed[static_cast<std::size_t>(y)] = seed;
  }
  // Rows are independent (own warm-start chain and noise stream), so the
  // output does not depend on the thread count.
  parallel_for(0, height, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      std::mt19937_64 rng(splitmix64(splitmix64(scene.config().seed * 0x9e3779b97f4a7c15ULL + frame) +
                                     static_cast<std::uint64_t>(y)));
      std::normal_distribution<double> gauss(0.0, noise > 0.0 ? noise : 1.0);
      std::optional<Vec2> prev = row_seed[static_cast<std::size_t>(y)];
      for (int x = 0; x < width; ++x) {
        const Vec2 q(x, y);
        std::optional<Vec2> u;
        if (prev) u = scene.solve_source(T, K, q, *prev);
        if (!u) u = scene.solve_source(T, K, q, q);
        if (!u) continue;
        prev = u;
        const Vec3 Xc = T * scene.point(K, u->x(), u->y());
        double v = scene.intensity(u->x(), u->y());
        if (noise > 0.0) v += gauss(rng);
        f.clean(x, y) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
        f.depth(x, y) = static_cast<float>(Xc.z());
        ++row_valid[static_cast<std::size_t>(y)];
      }
    }
  }, 8);
  std::size_t valid = 0;
  for (std::size_t c : row_valid) valid += c;
  if (valid_count) *valid_count = valid;
  return f;
}

/// Frames 0..n-1 with ground truth. Throws invalid_argument when the motion
/// leaves fewer than half of a frame's pixels renderable.
inline SyntheticSequence generate_synthetic(const SynthConfig& cfg, std::size_t n_frames) {
  if (cfg.width < 3 || cfg.height < 3) fail(Errc::invalid_argument, "synthetic frames must be at least 3x3");
  if (!(cfg.noise_sigma >= 0.0)) fail(Errc::invalid_argument, "noise sigma must be >= 0");
  if (cfg.corruption == Corruption::gamma && !(cfg.gamma > 0.0))
    fail(Errc::invalid_argument, "gamma must be > 0");
  const SyntheticScene scene(cfg);
  SyntheticSequence seq;
  seq.K = cfg.camera();
  const double total = static_cast<double>(cfg.width) * cfg.height;
  for (std::size_t k = 0; k < n_frames; ++k) {
    const RigidTransform T = synthetic_motion(cfg, k);
    std::size_t valid = 0;
    SyntheticFrame f = render_frame(scene, seq.K, T, cfg.width, cfg.height, &valid, k);
    if (static_cast<double>(valid) < 0.5 * total)
      fail(Errc::invalid_argument, "excessive motion: frame " + std::to_string(k) + " keeps only " +
                                       std::to_string(valid) + " of " +
                                       std::to_string(static_cast<long>(total)) + " pixels");
    f.timestamp = static_cast<double>(k) / cfg.frame_rate;
    f.image = apply_corruption(f.clean, cfg, k);
    seq.ground_truth.push_back(f.timestamp, T.inverse());
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

/// 16-bit depth raster, `scale` units per meter; invalid or out-of-range
/// depths become 0.
inline ImageU16 encode_depth(const DepthMap& d, double scale) {
  return map_pixels(d, [scale](float z) -> std::uint16_t {
    if (!is_valid_depth(z)) return 0;
    const long v = std::lround(z * scale);
    return v < 1 || v > 65535 ? 0 : static_cast<std::uint16_t>(v);
  });
}

/// Writes the sequence in the TUM RGB-D layout: rgb/, depth/ (16-bit PNG,
/// 5000 per meter), rgb.txt, depth.txt, groundtruth.txt, calibration.txt.
inline void write_synthetic(const SyntheticSequence& seq, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "rgb", ec);
  fs::create_directories(dir / "depth", ec);
  if (ec) fail(Errc::io_error, "cannot create " + dir.string() + ": " + ec.message());
  std::ofstream rgb(dir / "rgb.txt"), depth(dir / "depth.txt");
  if (!rgb || !depth) fail(Errc::io_error, "cannot write index files in " + dir.string());
  rgb << "# timestamp filename\n";
  depth << "# timestamp filename\n";
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    char name[32], ts[32];
    std::snprintf(name, sizeof name, "%06zu", k);
    std::snprintf(ts, sizeof ts, "%.6f", seq.frames[k].timestamp);
    const std::string img_rel = std::string("rgb/") + name + ".pgm";
    const std::string dep_rel = std::string("depth/") + name + ".png";
    write_pgm(seq.frames[k].image, dir / img_rel);
    write_png(encode_depth(seq.frames[k].depth, 5000.0), dir / dep_rel);
    rgb << ts << ' ' << img_rel << '\n';
    depth << ts << ' ' << dep_rel << '\n';
  }
  write_trajectory(seq.ground_truth, dir / "groundtruth.txt", TrajectoryFormat::tum);
  std::ofstream calib(dir / "calibration.txt");
  calib << "# fx fy cx cy\n" << format_intrinsics(seq.K) << '\n';
  if (!rgb || !depth || !calib) fail(Errc::io_error, "write failed in " + dir.string());
}

}  // namespace bitvo
