#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bitvo/descriptor.hpp"
#include "bitvo/error.hpp"
#include "bitvo/geometry.hpp"
#include "bitvo/image.hpp"
#include "bitvo/parallel.hpp"

namespace bitvo {

/// Pose parameters estimated by the solver.
inline constexpr int kPoseParams = 6;

struct SelectedPixel {
  int x = 0;
  int y = 0;
  float depth = 0.0f;
};

/// Omega: reference-frame pixels (with depth) that enter the objective.
using PixelSelection = std::vector<SelectedPixel>;

struct SelectionConfig {
  // Non-maximum suppression only runs at or above this resolution.
  int min_width = 320;
  int min_height = 240;
  // Descriptor border (1) plus gradient support (1).
  int border = 2;
};

/// Pixels with non-zero saliency and valid depth. At or above the
/// configured resolution they must also be strict 3x3 maxima of saliency.
inline PixelSelection select_pixels(const ImageF& sal, const DepthMap& depth,
                                    const SelectionConfig& cfg = {}) {
  if (!sal.same_shape(depth)) fail(Errc::invalid_argument, "saliency and depth differ in size");
  const int w = sal.width();
  const int h = sal.height();
  const bool suppress = w >= cfg.min_width && h >= cfg.min_height;
  const int b = std::max(cfg.border, 1);
  PixelSelection sel;
  for (int y = b; y < h - b; ++y) {
    for (int x = b; x < w - b; ++x) {
      const float s = sal(x, y);
      if (!(s > 0.0f)) continue;
      const float d = depth(x, y);
      if (!is_valid_depth(d)) continue;
      if (suppress) {
        bool is_max = true;
        for (const auto& o : kNeighborOffsets)
          if (!(s > sal(x + o.dx, y + o.dy))) {
            is_max = false;
            break;
          }
        if (!is_max) continue;
      }
      sel.push_back({x, y, d});
    }
  }
  if (sel.empty()) fail(Errc::empty_selection, "no pixel passed the saliency/depth selection");
  return sel;
}

using Row6f = Eigen::Matrix<float, kPoseParams, 1>;

/// Per (pixel, channel) Jacobian rows of the objective at theta = 0, stored
/// pixel-major, and their accumulated Gauss-Newton matrix. Entries with a
/// zero row (channel locally flat) are inactive: they cannot move the
/// estimate and are left out of the residual set.
struct JacobianCache {
  std::size_t channels = 0;
  std::vector<Row6f> rows;
  std::vector<std::uint8_t> active;
  Mat6 hessian = Mat6::Zero();

  std::size_t pixel_count() const noexcept { return channels == 0 ? 0 : rows.size() / channels; }
};

/// g_i(p) = grad(Phi_i)(p) * dw/dtheta at theta = 0.
inline JacobianCache precompute_jacobian(const std::vector<ChannelGradient>& grads,
                                         const PixelSelection& sel, const Intrinsics& K) {
  if (sel.empty()) fail(Errc::invalid_argument, "Jacobian precomputation needs a non-empty selection");
  JacobianCache cache;
  cache.channels = grads.size();
  cache.rows.resize(sel.size() * cache.channels);
  for (const auto& px : sel)
    if (!is_valid_depth(px.depth)) fail(Errc::invalid_argument, "selection contains an invalid depth");

  parallel_for(0, static_cast<int>(sel.size()), [&](int b, int e) {
    for (int i = b; i < e; ++i) {
      const auto& px = sel[static_cast<std::size_t>(i)];
      const Vec3 X = backproject(K, Vec2(px.x, px.y), px.depth);
      const Mat26 Jw = warp_jacobian(K, X);
      for (std::size_t c = 0; c < cache.channels; ++c) {
        const double gx = grads[c].gx(px.x, px.y);
        const double gy = grads[c].gy(px.x, px.y);
        cache.rows[static_cast<std::size_t>(i) * cache.channels + c] =
            (gx * Jw.row(0) + gy * Jw.row(1)).transpose().cast<float>();
      }
    }
  });
  cache.active.resize(cache.rows.size());
  for (std::size_t i = 0; i < cache.rows.size(); ++i) {
    const Vec6 gd = cache.rows[i].cast<double>();
    cache.active[i] = gd.squaredNorm() > 0.0 ? 1 : 0;
    cache.hessian.noalias() += gd * gd.transpose();
  }
  return cache;
}

inline JacobianCache precompute_jacobian(const ChannelStack& ref, const PixelSelection& sel,
                                         const Intrinsics& K) {
  return precompute_jacobian(channel_gradients(ref), sel, K);
}

/// One pyramid level of a reference frame: everything the solver needs
/// that does not depend on the current frame.
struct LevelReference {
  Intrinsics K;
  int width = 0;
  int height = 0;
  std::size_t channels = 0;
  PixelSelection selection;
  std::vector<Vec3> points;   // backprojected selection
  std::vector<float> values;  // Phi_i(p), pixel-major
  std::vector<float> intensity;  // optional, for point-cloud export
  JacobianCache jacobian;

  bool usable() const noexcept { return selection.size() >= static_cast<std::size_t>(kPoseParams); }
};

inline LevelReference make_level_reference(const ChannelStack& ref, PixelSelection sel,
                                           const Intrinsics& K,
                                           const std::vector<ChannelGradient>& grads) {
  LevelReference lr;
  lr.K = K;
  lr.width = ref.width();
  lr.height = ref.height();
  lr.channels = ref.size();
  lr.jacobian = precompute_jacobian(grads, sel, K);
  lr.points.reserve(sel.size());
  lr.values.reserve(sel.size() * lr.channels);
  for (const auto& px : sel) {
    lr.points.push_back(backproject(K, Vec2(px.x, px.y), px.depth));
    for (std::size_t c = 0; c < lr.channels; ++c) lr.values.push_back(ref[c](px.x, px.y));
  }
  lr.selection = std::move(sel);
  return lr;
}

/// Saliency, selection and Jacobian for one level of a reference frame.
inline LevelReference prepare_level(const ChannelStack& ref, const DepthMap& depth,
                                    const Intrinsics& K, const SelectionConfig& cfg = {}) {
  const auto grads = channel_gradients(ref);
  PixelSelection sel = select_pixels(saliency(grads), depth, cfg);
  return make_level_reference(ref, std::move(sel), K, grads);
}

/// r(p, i) = Phi'_i(w(p; T)) - Phi_i(p), pixel-major, with a validity flag
/// per entry (warps behind the camera or outside the image are invalid).
struct Residuals {
  std::size_t channels = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;
  std::size_t valid_count = 0;

  std::size_t size() const noexcept { return values.size(); }
};

/// All-valid residual vector, single channel.
inline Residuals make_residuals(std::vector<float> values) {
  Residuals r;
  r.channels = 1;
  r.valid.assign(values.size(), 1);
  r.valid_count = values.size();
  r.values = std::move(values);
  return r;
}

inline Residuals compute_residuals(const ChannelStack& cur, std::span<const Vec3> points,
                                   std::span<const float> ref_values, const RigidTransform& T,
                                   const Intrinsics& K) {
  const std::size_t nc = cur.size();
  if (ref_values.size() != points.size() * nc)
    fail(Errc::invalid_argument, "reference values do not match the point/channel count");
  Residuals r;
  r.channels = nc;
  r.values.assign(ref_values.size(), 0.0f);
  r.valid.assign(ref_values.size(), 0);
  const double xmax = cur.width() - 1;
  const double ymax = cur.height() - 1;
  const Eigen::Matrix3d R = T.rotation();
  const Vec3 t = T.translation();

  parallel_for(0, static_cast<int>(points.size()), [&](int b, int e) {
    for (int i = b; i < e; ++i) {
      const Vec3 Xc = R * points[static_cast<std::size_t>(i)] + t;
      if (!(Xc.z() > kMinProjectDepth)) continue;
      const double u = K.fx * Xc.x() / Xc.z() + K.cx;
      const double v = K.fy * Xc.y() / Xc.z() + K.cy;
      if (!(u >= 0.0 && v >= 0.0 && u <= xmax && v <= ymax)) continue;
      int x0 = static_cast<int>(u);
      int y0 = static_cast<int>(v);
      if (x0 >= cur.width() - 1) x0 = cur.width() - 2;
      if (y0 >= cur.height() - 1) y0 = cur.height() - 2;
      const float ax = static_cast<float>(u - x0);
      const float ay = static_cast<float>(v - y0);
      const float w00 = (1.0f - ax) * (1.0f - ay);
      const float w10 = ax * (1.0f - ay);
      const float w01 = (1.0f - ax) * ay;
      const float w11 = ax * ay;
      const std::size_t base = static_cast<std::size_t>(i) * nc;
      for (std::size_t c = 0; c < nc; ++c) {
        const float* r0 = cur[c].row_ptr(y0) + x0;
        const float* r1 = cur[c].row_ptr(y0 + 1) + x0;
        const float s = w00 * r0[0] + w10 * r0[1] + w01 * r1[0] + w11 * r1[1];
        r.values[base + c] = s - ref_values[base + c];
        r.valid[base + c] = 1;
      }
    }
  });
  r.valid_count = static_cast<std::size_t>(std::count(r.valid.begin(), r.valid.end(), 1));
  return r;
}

/// Residuals of a prepared level; inactive entries are marked invalid.
inline Residuals compute_residuals(const ChannelStack& cur, const LevelReference& ref,
                                   const RigidTransform& T) {
  Residuals r = compute_residuals(cur, ref.points, ref.values, T, ref.K);
  if (ref.jacobian.active.size() == r.valid.size()) {
    for (std::size_t i = 0; i < r.valid.size(); ++i) r.valid[i] &= ref.jacobian.active[i];
    r.valid_count = static_cast<std::size_t>(std::count(r.valid.begin(), r.valid.end(), 1));
  }
  return r;
}

inline Residuals compute_residuals(const ChannelStack& cur, std::span<const float> ref_values,
                                   const PixelSelection& sel, const RigidTransform& T,
                                   const Intrinsics& K) {
  std::vector<Vec3> points;
  points.reserve(sel.size());
  for (const auto& px : sel) points.push_back(backproject(K, Vec2(px.x, px.y), px.depth));
  return compute_residuals(cur, points, ref_values, T, K);
}

struct RobustConfig {
  double tau = 4.6851;  // Tukey cutoff, 95% efficiency under Gaussian noise
  double sigma_floor = 1e-6;
  int max_iterations = 50;
  double rel_tol = 1e-6;
  bool freeze_sigma = false;  // keep the first iteration's scale for the whole level
};

/// sigma = 1.4826 (1 + 5 / (m - p)) median |r| over valid entries, floored.
inline double robust_sigma(const Residuals& r, int params = kPoseParams, double sigma_floor = 1e-6) {
  std::vector<float> a;
  a.reserve(r.valid_count);
  for (std::size_t i = 0; i < r.values.size(); ++i)
    if (r.valid[i]) a.push_back(std::abs(r.values[i]));
  const std::size_t m = a.size();
  if (m <= static_cast<std::size_t>(params))
    fail(Errc::degenerate_system, "not enough valid residuals for a robust scale estimate");
  const std::size_t mid = m / 2;
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid), a.end());
  double median = a[mid];
  if (m % 2 == 0) {
    const float lower = *std::max_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + static_cast<double>(lower));
  }
  const double sigma = 1.4826 * (1.0 + 5.0 / static_cast<double>(m - static_cast<std::size_t>(params))) * median;
  return std::max(sigma, sigma_floor);
}

/// Tukey biweight (1 - (r / (tau sigma))^2)^2, zero from |r| = tau sigma on.
inline double tukey_weight(double r, double sigma, double tau) noexcept {
  const double c = tau * sigma;
  const double a = std::abs(r);
  if (a >= c) return 0.0;
  const double q = a / c;
  const double t = 1.0 - q * q;
  return t * t;
}

inline std::vector<float> tukey_weights(const Residuals& r, double sigma, double tau) {
  std::vector<float> w(r.values.size(), 0.0f);
  for (std::size_t i = 0; i < w.size(); ++i)
    if (r.valid[i]) w[i] = static_cast<float>(tukey_weight(r.values[i], sigma, tau));
  return w;
}

/// Solves (J^T W J) delta = J^T W e by Cholesky. Rank-deficient or
/// indefinite systems raise degenerate_system.
inline Twist solve_normal_equations(const JacobianCache& cache, const Residuals& r,
                                    std::span<const float> w) {
  if (r.values.size() != cache.rows.size() || w.size() != cache.rows.size())
    fail(Errc::invalid_argument, "Jacobian, residual and weight sizes differ");
  // Upper triangle and right-hand side accumulated in double, row by row
  // in pixel order.
  double h[21] = {};
  double g[6] = {};
  for (std::size_t i = 0; i < cache.rows.size(); ++i) {
    const double wi = r.valid[i] ? static_cast<double>(w[i]) : 0.0;
    if (wi == 0.0) continue;
    double j[6], wj[6];
    for (int k = 0; k < 6; ++k) {
      j[k] = static_cast<double>(cache.rows[i][k]);
      wj[k] = wi * j[k];
    }
    const double e = static_cast<double>(r.values[i]);
    int n = 0;
    for (int a = 0; a < 6; ++a) {
      for (int b = a; b < 6; ++b) h[n++] += wj[a] * j[b];
      g[a] += wj[a] * e;
    }
  }
  Mat6 H;
  Vec6 rhs;
  for (int a = 0, n = 0; a < 6; ++a) {
    for (int b = a; b < 6; ++b, ++n) H(a, b) = H(b, a) = h[n];
    rhs[a] = g[a];
  }
  if (!H.allFinite() || !rhs.allFinite()) fail(Errc::degenerate_system, "non-finite normal equations");
  const Eigen::LLT<Mat6> llt(H);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-12))
    fail(Errc::degenerate_system, "normal equations are singular or indefinite");
  const Vec6 delta = llt.solve(rhs);
  if (!delta.allFinite()) fail(Errc::degenerate_system, "non-finite update");
  return Twist::from_vector(delta);
}

/// Inverse-compositional update T <- T * exp(delta)^-1.
inline RigidTransform ic_update(const RigidTransform& T, const Twist& delta) {
  return T * se3_exp(delta).inverse();
}

/// Weighted objective sum w_i r_i^2 over valid entries.
inline double weighted_objective(const Residuals& r, std::span<const float> w) {
  double f = 0.0;
  for (std::size_t i = 0; i < r.values.size(); ++i)
    if (r.valid[i]) f += static_cast<double>(w[i]) * r.values[i] * r.values[i];
  return f;
}

/// Mean weight over each pixel's valid channel entries; pixels warped out
/// of view get 0.
inline std::vector<float> pixel_weights(const Residuals& r, std::span<const float> w) {
  const std::size_t nc = std::max<std::size_t>(r.channels, 1);
  std::vector<float> out(r.values.size() / nc, 0.0f);
  for (std::size_t p = 0; p < out.size(); ++p) {
    float s = 0.0f;
    int n = 0;
    for (std::size_t c = 0; c < nc; ++c)
      if (r.valid[p * nc + c]) {
        s += w[p * nc + c];
        ++n;
      }
    out[p] = n ? s / static_cast<float>(n) : 0.0f;
  }
  return out;
}

struct LevelResult {
  RigidTransform pose;
  int iterations = 0;
  double objective = 0.0;
  double sigma = 0.0;
  bool converged = false;
  std::vector<float> pixel_weights;  // from the last residual evaluation
  std::size_t valid_pixels = 0;
};

/// Iteratively re-weighted Gauss-Newton on one level. Stops at
/// max_iterations, or when the relative parameter change or relative
/// objective reduction drops below rel_tol. A degenerate system on the first
/// iteration propagates; later it ends the loop with converged = false.
inline LevelResult optimize_level(const LevelReference& ref, const ChannelStack& cur,
                                  const RigidTransform& T0, const RobustConfig& cfg = {}) {
  if (cur.size() != ref.channels) fail(Errc::invalid_argument, "channel count mismatch");
  LevelResult res;
  res.pose = T0;
  double prev_objective = 0.0;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const Residuals r = compute_residuals(cur, ref, res.pose);
    double sigma;
    std::vector<float> w;
    Twist delta;
    try {
      sigma = (cfg.freeze_sigma && it > 0) ? res.sigma : robust_sigma(r, kPoseParams, cfg.sigma_floor);
      w = tukey_weights(r, sigma, cfg.tau);
      const double f = weighted_objective(r, w);
      res.objective = f;
      res.sigma = sigma;
      res.pixel_weights = pixel_weights(r, w);
      res.valid_pixels = r.valid_count / std::max<std::size_t>(r.channels, 1);
      if (it > 0 && std::abs(prev_objective - f) < cfg.rel_tol * std::max(prev_objective, 1e-12)) {
        res.converged = true;
        break;
      }
      prev_objective = f;
      delta = solve_normal_equations(ref.jacobian, r, w);
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_system || it == 0) throw;
      res.converged = false;
      break;
    }
    res.pose = ic_update(res.pose, delta);
    res.iterations = it + 1;
    double current = 0.0;
    try {
      current = se3_log(res.pose).norm();
    } catch (const Error&) {
      current = std::numbers::pi;
    }
    if (delta.norm() < cfg.rel_tol * std::max(current, 1e-12)) {
      res.converged = true;
      break;
    }
  }
  return res;
}

struct OptimizeStats {
  std::vector<int> iterations;  // per level, index 0 = finest
  double final_objective = 0.0;
  double good_fraction = 1.0;
  bool converged = false;
  std::vector<float> pixel_weights;  // finest level, per selected pixel
  std::size_t valid_pixels = 0;

  int total_iterations() const {
    int n = 0;
    for (int i : iterations) n += i;
    return n;
  }
};

struct PyramidResult {
  RigidTransform pose;
  OptimizeStats stats;
};

/// Coarse-to-fine: optimize_level from the coarsest usable level down to
/// level 0, each seeded with the previous estimate.
inline PyramidResult optimize_pyramid(std::span<const LevelReference> ref,
                                      std::span<const ChannelStack> cur, const RigidTransform& T0,
                                      const RobustConfig& cfg = {}) {
  if (ref.size() != cur.size()) fail(Errc::invalid_argument, "pyramid level counts differ");
  PyramidResult out;
  out.pose = T0;
  out.stats.iterations.assign(ref.size(), 0);
  for (std::size_t k = ref.size(); k-- > 0;) {
    if (!ref[k].usable()) continue;
    LevelResult lr = optimize_level(ref[k], cur[k], out.pose, cfg);
    out.pose = lr.pose;
    out.stats.iterations[k] = lr.iterations;
    if (k == 0) {
      out.stats.final_objective = lr.objective;
      out.stats.converged = lr.converged;
      out.stats.pixel_weights = std::move(lr.pixel_weights);
      out.stats.valid_pixels = lr.valid_pixels;
    }
  }
  return out;
}

}  // namespace bitvo
