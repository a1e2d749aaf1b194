// bitvo: run, generate, evaluate and benchmark Bit-Planes visual odometry.

#include <CLI11.hpp>

#include <sstream>
#include <string>
#include <vector>

#include "bitvo/cli.hpp"

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

bitvo::Vec3 parse_vec3(const std::vector<double>& v) { return {v[0], v[1], v[2]}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bit-Planes direct visual odometry"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "bitvo 1.0.0");
  app.footer("Threads: set BITVO_NUM_THREADS (default: hardware concurrency).");

  // run
  bitvo::RunConfig rc;
  std::string layout = "tum", mode, out_format = "tum", calib, config, ply;
  std::size_t max_frames = 0;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Track a dataset sequence and write its trajectory");
  run->add_option("root", rc.root, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  run->add_option("--layout", layout, "tum | kitti")->check(CLI::IsMember({"tum", "kitti"}));
  run->add_option("--calib", calib, "Calibration file (default: found in the dataset root)");
  run->add_option("--mode", mode, "bitplanes | raw-intensity")
      ->check(CLI::IsMember({"bitplanes", "raw-intensity"}));
  run->add_option("--config", config, "key=value solver configuration")->check(CLI::ExistingFile);
  run->add_option("-o,--output", rc.output, "Trajectory output path");
  run->add_option("--format", out_format, "Trajectory format: tum | kitti")
      ->check(CLI::IsMember({"tum", "kitti"}));
  run->add_option("--ply", ply, "Write the last keyframe's points as PLY");
  run->add_option("--max-frames", max_frames, "Stop after this many frames");
  run->add_flag("-q,--quiet", quiet, "No per-frame lines");

  // synth
  bitvo::SynthConfig sc;
  std::size_t n_frames = 30;
  std::string out_dir, corruption = "none", depth_model = "plane";
  std::vector<double> omega{0, 0, 0}, nu{0, 0, 0}, gain_bias{1.0, 0.0}, alternating{0.6, 1.4};
  std::vector<double> intensity_range{20, 235};
  std::vector<double> osc_omega{0, 0, 0}, osc_nu{0, 0, 0}, osc_phase{0, 0, 0, 0, 0, 0};
  auto* synth = app.add_subcommand("synth", "Generate a synthetic sequence with ground truth");
  synth->add_option("out", out_dir, "Output directory")->required();
  synth->add_option("-n,--frames", n_frames, "Number of frames");
  synth->add_option("--width", sc.width);
  synth->add_option("--height", sc.height);
  synth->add_option("--seed", sc.seed, "Texture seed");
  synth->add_option("--texture-scale", sc.texture_scale, "Texture lattice spacing in pixels");
  synth->add_option("--depth-model", depth_model, "plane | random")->check(CLI::IsMember({"plane", "random"}));
  synth->add_option("--plane-depth", sc.plane_depth, "Plane depth in meters");
  synth->add_option("--depth-min", sc.depth_min);
  synth->add_option("--depth-max", sc.depth_max);
  synth->add_option("--omega", omega, "Per-frame rotation twist (rad)")->expected(3);
  synth->add_option("--nu", nu, "Per-frame translation twist (m)")->expected(3);
  synth->add_option("--corruption", corruption, "none | gamma | gain-bias | alternating")
      ->check(CLI::IsMember({"none", "gamma", "gain-bias", "alternating"}));
  synth->add_option("--gamma", sc.gamma);
  synth->add_option("--gain-bias", gain_bias, "Gain and bias")->expected(2);
  synth->add_option("--alternating", alternating, "Gammas for even and odd frames")->expected(2);
  synth->add_option("--osc-omega", osc_omega, "Rotation oscillation amplitude (rad)")->expected(3);
  synth->add_option("--osc-nu", osc_nu, "Translation oscillation amplitude (m)")->expected(3);
  synth->add_option("--osc-phase", osc_phase, "Oscillation phases (rad), twist order")->expected(6);
  synth->add_option("--osc-period", sc.oscillation_period, "Oscillation period in frames (0: off)");
  synth->add_option("--noise", sc.noise_sigma, "Gaussian sensor noise std (gray levels)");
  synth->add_option("--shading", sc.shading, "Illumination falloff in [0, 1]")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--intensity-range", intensity_range, "Texture intensity range")->expected(2);
  synth->add_option("--fps", sc.frame_rate);

  // eval
  bitvo::EvalConfig ec;
  std::string est_format = "tum", gt_format = "tum", lengths, csv;
  auto* eval = app.add_subcommand("eval", "Relative and absolute trajectory error");
  eval->add_option("estimate", ec.estimate)->required()->check(CLI::ExistingFile);
  eval->add_option("groundtruth", ec.ground_truth)->required()->check(CLI::ExistingFile);
  eval->add_option("--est-format", est_format)->check(CLI::IsMember({"tum", "kitti"}));
  eval->add_option("--gt-format", gt_format)->check(CLI::IsMember({"tum", "kitti"}));
  eval->add_option("--lengths", lengths, "Comma-separated path lengths in meters (default 100..800)");
  eval->add_option("--csv", csv, "Write the per-bucket table as CSV");

  // bench
  bitvo::BenchConfig bc;
  std::string bench_image, bench_depth, bench_calib, bench_csv;
  auto* bench = app.add_subcommand("bench", "Per-stage timings (synthetic 640x480 frame by default)");
  bench->add_option("image", bench_image, "8-bit intensity image")->check(CLI::ExistingFile);
  bench->add_option("--depth", bench_depth, "16-bit depth PNG, 5000 per meter")->check(CLI::ExistingFile);
  bench->add_option("--calib", bench_calib)->check(CLI::ExistingFile);
  bench->add_option("-n,--iterations", bc.iterations, "Runs per stage")->check(CLI::PositiveNumber);
  bench->add_option("--csv", bench_csv);

  // ablate
  bitvo::AblateConfig ac;
  std::string grid0 = "0,0.5,1,2", grid1 = "0,0.5,1,2", ablate_csv;
  std::vector<double> ablate_nu{0.02, 0.01, 0.0};
  auto* ablate = app.add_subcommand("ablate", "Pose error over a grid of smoothing kernels");
  ablate->add_option("--sigma-pre", grid0, "Comma-separated pre-smoothing sigmas");
  ablate->add_option("--sigma-channel", grid1, "Comma-separated channel-smoothing sigmas");
  ablate->add_option("--nu", ablate_nu, "Translation between the two frames (m)")->expected(3);
  ablate->add_option("--seed", ac.scene.seed);
  ablate->add_option("--csv", ablate_csv);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      rc.layout = bitvo::parse_layout(layout);
      if (!calib.empty()) rc.calibration = calib;
      if (!mode.empty()) rc.mode = bitvo::parse_descriptor_mode(mode);
      if (!config.empty()) rc.config = config;
      if (!ply.empty()) rc.ply = ply;
      if (max_frames > 0) rc.max_frames = max_frames;
      rc.output_format = bitvo::parse_trajectory_format(out_format);
      rc.verbosity = quiet ? 0 : 1;
      return bitvo::cmd_run(rc);
    }
    if (*synth) {
      sc.depth_model = depth_model == "random" ? bitvo::DepthModel::random : bitvo::DepthModel::plane;
      sc.twist = bitvo::Twist(parse_vec3(omega), parse_vec3(nu));
      sc.corruption = bitvo::parse_corruption(corruption);
      sc.gain = gain_bias[0];
      sc.bias = gain_bias[1];
      sc.alternating = {alternating[0], alternating[1]};
      sc.oscillation = bitvo::Twist(parse_vec3(osc_omega), parse_vec3(osc_nu));
      for (std::size_t j = 0; j < 6; ++j) sc.oscillation_phase[j] = osc_phase[j];
      sc.intensity_lo = intensity_range[0];
      sc.intensity_hi = intensity_range[1];
      return bitvo::cmd_synth(sc, n_frames, out_dir);
    }
    if (*eval) {
      ec.est_format = bitvo::parse_trajectory_format(est_format);
      ec.gt_format = bitvo::parse_trajectory_format(gt_format);
      if (!lengths.empty()) ec.lengths = parse_list(lengths);
      if (!csv.empty()) ec.csv = csv;
      return bitvo::cmd_eval(ec);
    }
    if (*bench) {
      if (!bench_image.empty()) bc.image = bench_image;
      if (!bench_depth.empty()) bc.depth = bench_depth;
      if (!bench_calib.empty()) bc.calibration = bench_calib;
      if (!bench_csv.empty()) bc.csv = bench_csv;
      return bitvo::cmd_bench(bc);
    }
    if (*ablate) {
      ac.sigma_pre = parse_list(grid0);
      ac.sigma_channel = parse_list(grid1);
      ac.scene.twist = bitvo::Twist(bitvo::Vec3::Zero(), parse_vec3(ablate_nu));
      if (!ablate_csv.empty()) ac.csv = ablate_csv;
      return bitvo::cmd_ablate(ac);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return bitvo::kExitFatal;
  }
  return bitvo::kExitOk;
}
