#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "bitvo/config.hpp"
#include "bitvo/datasets.hpp"
#include "bitvo/evaluation.hpp"
#include "bitvo/pipeline.hpp"
#include "bitvo/synthetic.hpp"
#include "bitvo/trajectory.hpp"

namespace bitvo {

/// Process exit statuses of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitDegraded = 2;

struct RunConfig {
  std::filesystem::path root;
  Layout layout = Layout::tum;
  std::optional<std::filesystem::path> calibration;
  std::optional<DescriptorMode> mode;
  std::optional<std::filesystem::path> config;
  std::filesystem::path output = "trajectory.txt";
  TrajectoryFormat output_format = TrajectoryFormat::tum;
  std::optional<std::filesystem::path> ply;
  std::optional<std::size_t> max_frames;
  int verbosity = 1;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  return m;
}

inline VoConfig resolve_vo_config(const std::optional<std::filesystem::path>& path,
                                  std::optional<DescriptorMode> mode) {
  VoConfig cfg = path ? read_config(*path) : VoConfig{};
  if (mode) cfg.descriptor.mode = *mode;
  return cfg;
}

inline int cmd_run(const RunConfig& rc, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const VoConfig cfg = resolve_vo_config(rc.config, rc.mode);
    const Sequence seq = load_sequence(rc.root, rc.layout, rc.calibration);
    for (const auto& w : seq.warnings) err << "warning: " << w << '\n';
    VisualOdometry vo(seq.K, cfg);
    std::vector<double> t_pyr, t_desc, t_jac, t_track;
    std::size_t n = 0;
    if (rc.verbosity >= 1)
      out << "# frame status iterations good_fraction pyramid_ms descriptor_ms jacobian_ms tracking_ms\n";
    for (const auto& f : seq.frames) {
      if (rc.max_frames && n >= *rc.max_frames) break;
      LoadedFrame lf = load_frame(seq, f);
      const FrameResult r = vo.process_frame(lf.image, lf.depth ? &*lf.depth : nullptr, f.timestamp);
      ++n;
      t_pyr.push_back(r.timings.pyramid_ms);
      t_desc.push_back(r.timings.descriptor_ms);
      if (r.timings.jacobian_ms > 0.0) t_jac.push_back(r.timings.jacobian_ms);
      if (r.timings.tracking_ms > 0.0) t_track.push_back(r.timings.tracking_ms);
      if (rc.verbosity >= 1) {
        char line[200];
        std::snprintf(line, sizeof line, "%zu %s %d %.3f %.2f %.2f %.2f %.2f\n", r.index, to_string(r.status),
                      r.stats.total_iterations(), r.stats.good_fraction, r.timings.pyramid_ms,
                      r.timings.descriptor_ms, r.timings.jacobian_ms, r.timings.tracking_ms);
        out << line;
      }
    }
    write_trajectory(vo.trajectory(), rc.output, rc.output_format);
    if (rc.ply) vo.write_keyframe_ply(*rc.ply);
    for (const auto& w : vo.warnings()) err << "warning: " << w << '\n';
    char line[240];
    std::snprintf(line, sizeof line,
                  "%zu frames, %zu keyframes, %zu lost; median ms: pyramid %.2f, descriptor %.2f, "
                  "jacobian %.2f, tracking %.2f\n",
                  n, vo.keyframe_count(), vo.lost_count(), median(t_pyr), median(t_desc), median(t_jac),
                  median(t_track));
    out << line;
    return vo.lost_count() > 0 ? kExitDegraded : kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFatal;
  }
}

inline int cmd_synth(const SynthConfig& cfg, std::size_t n_frames, const std::filesystem::path& out_dir,
                     std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const SyntheticSequence seq = generate_synthetic(cfg, n_frames);
    write_synthetic(seq, out_dir);
    out << "wrote " << seq.frames.size() << " frames to " << out_dir.string() << '\n';
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFatal;
  }
}

/// Pairs est poses with the gt pose nearest in time (within `window`
/// seconds), dropping unmatched ones, then re-bases both on the first pair.
inline std::pair<Trajectory, Trajectory> associate_trajectories(const Trajectory& est, const Trajectory& gt,
                                                                double window = 0.02) {
  Trajectory a, b;
  std::size_t j = 0;
  std::optional<RigidTransform> est0, gt0;
  for (const auto& p : est) {
    while (j + 1 < gt.size() && std::abs(gt[j + 1].timestamp - p.timestamp) <= std::abs(gt[j].timestamp - p.timestamp))
      ++j;
    if (gt.empty() || std::abs(gt[j].timestamp - p.timestamp) > window + 1e-9) continue;
    if (!a.empty() && !(p.timestamp > a.back().timestamp && gt[j].timestamp > b.back().timestamp)) continue;
    if (!est0) {
      est0 = p.pose.inverse();
      gt0 = gt[j].pose.inverse();
    }
    a.push_back(p.timestamp, *est0 * p.pose);
    b.push_back(gt[j].timestamp, *gt0 * gt[j].pose);
  }
  return {std::move(a), std::move(b)};
}

struct EvalConfig {
  std::filesystem::path estimate;
  std::filesystem::path ground_truth;
  TrajectoryFormat est_format = TrajectoryFormat::tum;
  TrajectoryFormat gt_format = TrajectoryFormat::tum;
  std::vector<double> lengths = default_rpe_lengths();
  std::optional<std::filesystem::path> csv;
};

inline int cmd_eval(const EvalConfig& ec, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    Trajectory est = read_trajectory(ec.estimate, ec.est_format);
    Trajectory gt = read_trajectory(ec.ground_truth, ec.gt_format);
    if (est.size() != gt.size()) {
      if (ec.est_format != TrajectoryFormat::tum || ec.gt_format != TrajectoryFormat::tum)
        fail(Errc::invalid_argument, "index-matched trajectories must have equal length");
      std::tie(est, gt) = associate_trajectories(est, gt);
      out << "associated " << est.size() << " poses by timestamp\n";
    }
    const RpeReport rpe = evaluate_rpe(est, gt, ec.lengths);
    out << format_rpe_summary(rpe);
    if (est.size() >= 3) {
      const AteReport ate = evaluate_ate(est, gt);
      char line[96];
      std::snprintf(line, sizeof line, "ATE RMSE: %.6f m over %zu poses\n", ate.rmse, est.size());
      out << line;
    }
    if (ec.csv) {
      std::ofstream csv(*ec.csv);
      if (!csv) fail(Errc::io_error, "cannot write " + ec.csv->string());
      write_rpe_csv(rpe, csv);
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFatal;
  }
}

/// Median wall time per stage, in milliseconds, for both descriptor modes.
struct BenchRow {
  std::string label;
  double bitplanes_ms = 0.0;
  double raw_ms = 0.0;
};

struct BenchReport {
  int width = 0;
  int height = 0;
  int levels = 0;
  int iterations = 0;
  std::vector<BenchRow> rows;  // pyramid, descriptor, jacobian, warping
};

inline const char* const kBenchLabels[4] = {"Pyramid construction", "Descriptor computation",
                                            "Jacobian pre-computation", "Descriptor warping"};

inline BenchReport run_bench(const ImageU8& img, const DepthMap& depth, const Intrinsics& K, int iterations) {
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t) {
    return std::chrono::duration<double, std::milli>(clock::now() - t).count();
  };
  if (iterations < 1) fail(Errc::invalid_argument, "bench needs at least one iteration");
  BenchReport rep;
  rep.width = img.width();
  rep.height = img.height();
  rep.levels = compute_num_levels(img.width(), img.height());
  rep.iterations = iterations;
  rep.rows.resize(4);
  for (int i = 0; i < 4; ++i) rep.rows[static_cast<std::size_t>(i)].label = kBenchLabels[i];
  const RigidTransform T = se3_exp(Twist(Vec3(0.002, -0.001, 0.001), Vec3(0.01, 0.005, 0.0)));
  for (DescriptorMode mode : {DescriptorMode::bitplanes, DescriptorMode::raw_intensity}) {
    DescriptorConfig dc;
    dc.mode = mode;
    std::vector<double> t[4];
    for (int it = 0; it < iterations; ++it) {
      auto t0 = clock::now();
      const Pyramid<float> pyr = build_pyramid(img, rep.levels);
      t[0].push_back(ms_since(t0));
      t0 = clock::now();
      std::vector<ChannelStack> desc;
      for (const auto& level : pyr.levels) desc.push_back(compute_descriptor(level, dc));
      t[1].push_back(ms_since(t0));
      t0 = clock::now();
      const Keyframe kf = make_keyframe(desc, depth, K, RigidTransform::identity());
      t[2].push_back(ms_since(t0));
      t0 = clock::now();
      const Residuals r = compute_residuals(desc[0], kf.levels[0], T);
      t[3].push_back(ms_since(t0));
      if (r.valid_count == 0) fail(Errc::degenerate_system, "benchmark warp left the image");
    }
    for (int s = 0; s < 4; ++s)
      (mode == DescriptorMode::bitplanes ? rep.rows[static_cast<std::size_t>(s)].bitplanes_ms
                                         : rep.rows[static_cast<std::size_t>(s)].raw_ms) = median(t[s]);
  }
  return rep;
}

inline void write_bench_csv(const BenchReport& rep, std::ostream& out) {
  out << "stage,bitplanes_ms,raw_intensity_ms\n";
  char line[128];
  for (const auto& r : rep.rows) {
    std::snprintf(line, sizeof line, "%s,%.4f,%.4f\n", r.label.c_str(), r.bitplanes_ms, r.raw_ms);
    out << line;
  }
}

inline std::string format_bench_summary(const BenchReport& rep) {
  std::string s;
  char line[128];
  std::snprintf(line, sizeof line, "%dx%d, %d levels, median of %d runs (ms)\n", rep.width, rep.height,
                rep.levels, rep.iterations);
  s += line;
  std::snprintf(line, sizeof line, "%-26s %10s %10s\n", "", "Bit-Planes", "Intensity");
  s += line;
  for (const auto& r : rep.rows) {
    std::snprintf(line, sizeof line, "%-26s %10.3f %10.3f\n", r.label.c_str(), r.bitplanes_ms, r.raw_ms);
    s += line;
  }
  return s;
}

struct BenchConfig {
  std::optional<std::filesystem::path> image;
  std::optional<std::filesystem::path> depth;  // 16-bit, 5000 per meter
  std::optional<std::filesystem::path> calibration;
  int iterations = 20;
  std::optional<std::filesystem::path> csv;
};

inline int cmd_bench(const BenchConfig& bc, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    ImageU8 img;
    DepthMap depth;
    Intrinsics K;
    if (bc.image) {
      img = read_image_u8(*bc.image);
      K = bc.calibration ? read_intrinsics(*bc.calibration)
                         : Intrinsics{525.0, 525.0, 0.5 * (img.width() - 1), 0.5 * (img.height() - 1), std::nullopt};
      if (bc.depth) {
        depth = map_pixels(read_image_u16(*bc.depth),
                           [](std::uint16_t v) { return static_cast<float>(v * kTumDepthScale); });
        if (!depth.same_shape(img)) fail(Errc::invalid_argument, "depth size differs from the image");
      } else {
        depth = DepthMap(img.width(), img.height(), 3.0f);
      }
    } else {
      const SyntheticSequence seq = generate_synthetic(SynthConfig{}, 1);
      img = seq.frames[0].image;
      depth = seq.frames[0].depth;
      K = seq.K;
    }
    const BenchReport rep = run_bench(img, depth, K, bc.iterations);
    out << format_bench_summary(rep);
    if (bc.csv) {
      std::ofstream csv(*bc.csv);
      if (!csv) fail(Errc::io_error, "cannot write " + bc.csv->string());
      write_bench_csv(rep, csv);
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFatal;
  }
}

struct AblateConfig {
  SynthConfig scene;
  std::vector<double> sigma_pre{0.0, 0.5, 1.0, 2.0};
  std::vector<double> sigma_channel{0.0, 0.5, 1.0, 2.0};
  std::optional<std::filesystem::path> csv;
};

inline int cmd_ablate(const AblateConfig& ac, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto rows = ablate_smoothing(ac.scene, ac.sigma_pre, ac.sigma_channel);
    if (ac.csv) {
      std::ofstream csv(*ac.csv);
      if (!csv) fail(Errc::io_error, "cannot write " + ac.csv->string());
      write_ablation_csv(rows, csv);
    } else {
      write_ablation_csv(rows, out);
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFatal;
  }
}

}  // namespace bitvo
