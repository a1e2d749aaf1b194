#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "bitvo/datasets.hpp"
#include "bitvo/descriptor.hpp"
#include "bitvo/image_io.hpp"
#include "bitvo/imgproc.hpp"
#include "bitvo/synthetic.hpp"

using namespace bitvo;
namespace fs = std::filesystem;

namespace {

// Fresh directory under the system temp dir, removed on destruction.
struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& name) : path(fs::temp_directory_path() / ("bitvo_ds_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

template <typename T>
void save_fixture(const Image<T>& img, const fs::path& p) {
  fs::create_directories(p.parent_path());
  if (p.extension() == ".pgm")
    write_pgm(img, p);
  else
    write_png(img, p);
}

ImageU8 noise_image(int w, int h, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  ImageU8 img(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(x, y) = static_cast<std::uint8_t>(d(rng));
  return img;
}

// Two-frame TUM layout; depth timestamps are the rgb ones plus `offsets`.
void write_tum_fixture(const fs::path& root, std::array<double, 2> offsets, bool calibration = true) {
  const double ts[2] = {1305031102.175304, 1305031102.211214};
  std::string rgb = "# rgb\n", depth = "# depth\n";
  for (int i = 0; i < 2; ++i) {
    const std::string n = std::to_string(i);
    save_fixture(noise_image(64, 48, i), root / "rgb" / (n + ".pgm"));
    save_fixture(ImageU16(64, 48, static_cast<std::uint16_t>(10000 + i)), root / "depth" / (n + ".png"));
    char line[96];
    std::snprintf(line, sizeof line, "%.6f rgb/%d.pgm\n", ts[i], i);
    rgb += line;
    std::snprintf(line, sizeof line, "%.6f depth/%d.png\n", ts[i] + offsets[static_cast<std::size_t>(i)], i);
    depth += line;
  }
  write_text(root / "rgb.txt", rgb);
  write_text(root / "depth.txt", depth);
  if (calibration) write_text(root / "calibration.txt", "525 525 31.5 23.5\n");
}

Intrinsics stereo_camera() { return {500.0, 500.0, 320.0, 240.0, 0.07}; }

}  // namespace

TEST(LoadTum, TwoFramesWithExactTimestamps) {
  ScratchDir dir("tum2");
  write_tum_fixture(dir.path, {0.0, 0.0});
  const Sequence seq = load_sequence(dir.path, Layout::tum);
  ASSERT_EQ(seq.frames.size(), 2u);
  EXPECT_TRUE(seq.warnings.empty());
  EXPECT_EQ(seq.depth_kind, DepthKind::depth);
  EXPECT_DOUBLE_EQ(seq.K.fx, 525.0);
  EXPECT_LT(seq.frames[0].timestamp, seq.frames[1].timestamp);
  EXPECT_EQ(seq.frames[1].image.filename(), "1.pgm");

  const LoadedFrame f = load_frame(seq, seq.frames[1]);
  ASSERT_TRUE(f.depth);
  EXPECT_EQ(f.image.width(), 64);
  EXPECT_NEAR((*f.depth)(5, 5), 10001.0 / 5000.0, 1e-6);
}

TEST(LoadTum, DepthOutsideWindowDropsFrameWithWarning) {
  ScratchDir dir("tum_off");
  write_tum_fixture(dir.path, {0.0, 0.05});
  const Sequence seq = load_tum(dir.path);
  ASSERT_EQ(seq.frames.size(), 1u);
  ASSERT_EQ(seq.warnings.size(), 1u);
  EXPECT_NE(seq.warnings[0].find("1.pgm"), std::string::npos);
}

TEST(LoadTum, AssociationWindowEdgeIsInclusive) {
  ScratchDir dir("tum_edge");
  write_tum_fixture(dir.path, {0.02, -0.02});
  EXPECT_EQ(load_tum(dir.path).frames.size(), 2u);
}

TEST(LoadTum, MissingCalibrationIsFatal) {
  ScratchDir dir("tum_nocal");
  write_tum_fixture(dir.path, {0.0, 0.0}, false);
  try {
    load_tum(dir.path);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io_error);
  }
  // An explicit calibration path elsewhere is accepted.
  ScratchDir cal("tum_cal");
  write_text(cal.path / "cam.txt", "500 500 31.5 23.5\n");
  EXPECT_DOUBLE_EQ(load_tum(dir.path, cal.path / "cam.txt").K.fx, 500.0);
}

TEST(LoadTum, EmptySequenceIsFatal) {
  ScratchDir dir("tum_empty");
  write_text(dir.path / "rgb.txt", "# nothing\n");
  write_text(dir.path / "depth.txt", "# nothing\n");
  write_text(dir.path / "calibration.txt", "525 525 319.5 239.5\n");
  try {
    load_tum(dir.path);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_argument);
  }
}

TEST(LoadSequence, MissingRootIsIoError) {
  try {
    load_sequence(fs::temp_directory_path() / "bitvo_ds_does_not_exist", Layout::kitti);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io_error);
  }
  EXPECT_EQ(parse_layout("tum"), Layout::tum);
  EXPECT_THROW(parse_layout("euroc"), Error);
}

TEST(LoadKitti, StereoFixtureWithDisparity) {
  ScratchDir dir("kitti");
  write_text(dir.path / "calib.txt",
             "P0: 500 0 511.5 0 0 500 187.5 0 0 0 1 0\n"
             "P1: 500 0 511.5 -35 0 500 187.5 0 0 0 1 0\n");
  // Written out of order; the loader sorts by name.
  for (int i : {2, 0, 1}) {
    char name[16];
    std::snprintf(name, sizeof name, "%06d", i);
    save_fixture(noise_image(1024, 376, static_cast<unsigned>(i)), dir.path / "image_0" / (std::string(name) + ".png"));
    if (i != 2) save_fixture(ImageU16(1024, 376, 35 * 256), dir.path / "disp_0" / (std::string(name) + ".png"));
  }
  const Sequence seq = load_sequence(dir.path, Layout::kitti);
  ASSERT_EQ(seq.frames.size(), 3u);
  EXPECT_EQ(seq.frames[0].image.filename(), "000000.png");
  EXPECT_EQ(seq.frames[2].image.filename(), "000002.png");
  EXPECT_DOUBLE_EQ(seq.frames[1].timestamp, 0.1);
  EXPECT_NEAR(*seq.K.baseline, 0.07, 1e-12);
  EXPECT_EQ(seq.warnings.size(), 1u);  // frame 2 has no disparity

  const LoadedFrame f0 = load_frame(seq, seq.frames[0]);
  EXPECT_EQ(compute_num_levels(f0.image.width(), f0.image.height()), 4);
  ASSERT_TRUE(f0.depth);
  EXPECT_NEAR((*f0.depth)(100, 100), 1.0, 1e-6);
  EXPECT_FALSE(load_frame(seq, seq.frames[2]).depth);
}

TEST(LoadKitti, TimesFileIsUsedWhenConsistent) {
  ScratchDir dir("kitti_t");
  write_text(dir.path / "calib.txt", "P0: 500 0 31.5 0 0 500 23.5 0 0 0 1 0\n");
  for (int i = 0; i < 2; ++i)
    save_fixture(noise_image(64, 48, 7), dir.path / "image_0" / ("00000" + std::to_string(i) + ".pgm"));
  write_text(dir.path / "times.txt", "0.0\n0.103\n");
  const Sequence seq = load_kitti(dir.path);
  EXPECT_DOUBLE_EQ(seq.frames[1].timestamp, 0.103);
  // Missing disparity directory is only a warning.
  EXPECT_EQ(seq.warnings.size(), 1u);
}

TEST(Disparity, ConversionExample) {
  const Intrinsics K = stereo_camera();
  EXPECT_NEAR(disparity_to_depth(35.0, K), 1.0, 1e-12);
  EXPECT_EQ(disparity_to_depth(0.0, K), 0.0);
  EXPECT_EQ(disparity_to_depth(0.4, K), 0.0);
  EXPECT_EQ(disparity_to_depth(0.5, K), 0.0);
  EXPECT_GT(disparity_to_depth(0.51, K), 0.0);

  ImageF disp(3, 1, 0.0f);
  disp(0, 0) = 35.0f;
  disp(1, 0) = 0.4f;
  const DepthMap z = disparity_to_depth(disp, K);
  EXPECT_NEAR(z(0, 0), 1.0, 1e-6);
  EXPECT_EQ(z(1, 0), 0.0f);
  EXPECT_EQ(z(2, 0), 0.0f);
}

TEST(Disparity, MissingBaselineIsFatal) {
  Intrinsics K = stereo_camera();
  K.baseline.reset();
  EXPECT_THROW(disparity_to_depth(35.0, K), Error);
  EXPECT_THROW(disparity_to_depth(ImageF(2, 2, 1.0f), K), Error);
  K.baseline = 0.0;
  EXPECT_THROW(depth_to_disparity(1.0, K), Error);
}

TEST(Disparity, RoundtripProperty) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(0.5, 300.0);
  std::uniform_real_distribution<double> f(100.0, 1500.0), b(0.01, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const Intrinsics K{f(rng), f(rng), 0.0, 0.0, b(rng)};
    double disp = d(rng);
    if (disp <= kMinDisparity) continue;
    const double back = depth_to_disparity(disparity_to_depth(disp, K), K);
    ASSERT_NEAR(back, disp, 1e-9 * std::max(1.0, disp));
  }
}

namespace {

SynthConfig small_synth(int w = 160, int h = 120) {
  SynthConfig c;
  c.width = w;
  c.height = h;
  c.seed = 11;
  return c;
}

}  // namespace

TEST(Synthetic, ZeroTwistGivesIdenticalFrames) {
  const SyntheticSequence s = generate_synthetic(small_synth(), 3);
  ASSERT_EQ(s.frames.size(), 3u);
  EXPECT_EQ(s.frames[0].image, s.frames[1].image);
  EXPECT_EQ(s.frames[0].image, s.frames[2].image);
  EXPECT_EQ(s.ground_truth[2].pose.matrix(), RigidTransform::identity().matrix());
}

TEST(Synthetic, PlaneTranslationIsUniformShift) {
  SynthConfig c = small_synth();
  c.plane_depth = 3.0;
  // fx = 131.25 here, so this shifts by exactly 2 px.
  c.twist.nu = Vec3(2.0 * 3.0 / c.camera().fx, 0.0, 0.0);
  const SyntheticSequence s = generate_synthetic(c, 2);
  const ImageU8& a = s.frames[0].image;
  const ImageU8& b = s.frames[1].image;
  // Frame-0 pixel p lands at warp_pixel(T1, p); both renders evaluate the
  // texture at the same continuous point.
  const RigidTransform T1 = s.ground_truth[1].pose.inverse();
  int mismatched = 0;
  for (int y = 0; y < c.height; ++y)
    for (int x = 0; x + 2 < c.width; ++x) {
      const auto q = warp_pixel(T1, s.K, Vec2(x, y), 3.0);
      ASSERT_TRUE(q);
      ASSERT_NEAR(q->x(), x + 2.0, 1e-9);
      ASSERT_NEAR(q->y(), y, 1e-9);
      if (std::abs(int(a(x, y)) - int(b(x + 2, y))) > 1) ++mismatched;
    }
  EXPECT_EQ(mismatched, 0);
  EXPECT_NEAR(s.frames[1].depth(40, 40), 3.0, 1e-6);
}

TEST(Synthetic, GammaCorruptionKeepsCensus) {
  const auto lut = gamma_lut(0.6);
  SynthConfig c = small_synth();
  c.intensity_lo = 10.0;
  c.intensity_hi = 60.0;
  for (int v = 10; v < 60; ++v) ASSERT_LT(lut[v], lut[v + 1]) << v;
  c.corruption = Corruption::gamma;
  c.gamma = 0.6;
  c.noise_sigma = 1.0;
  c.twist.omega = Vec3(0.002, -0.001, 0.0);
  const SyntheticSequence s = generate_synthetic(c, 2);
  for (const auto& f : s.frames) {
    EXPECT_NE(f.image, f.clean);
    EXPECT_EQ(census_transform(f.image).bytes, census_transform(f.clean).bytes);
  }
}

TEST(Synthetic, RenderingAgreesWithComposedPoses) {
  SynthConfig c = small_synth(320, 240);
  c.depth_model = DepthModel::random;
  c.texture_scale = 16.0;
  c.twist = Twist{Vec3(0.004, -0.003, 0.002), Vec3(0.01, 0.008, -0.02)};
  const SyntheticSequence s = generate_synthetic(c, 4);
  const ImageU8& ref = s.frames[0].clean;
  for (std::size_t k = 1; k < s.frames.size(); ++k) {
    // T_k maps frame-0 points into camera k.
    const RigidTransform T = s.ground_truth[k].pose.inverse() * s.ground_truth[0].pose;
    double sse = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x) {
        const auto q = warp_pixel(T, s.K, Vec2(x, y), s.frames[0].depth(x, y));
        if (!q) continue;
        const auto v = bilinear_sample(s.frames[k].clean, q->x(), q->y());
        if (!v) continue;
        const double e = *v - ref(x, y);
        sse += e * e;
        ++n;
      }
    ASSERT_GT(n, 0.8 * c.width * c.height);
    EXPECT_LT(std::sqrt(sse / n), 0.5) << "frame " << k;
  }
}

TEST(Synthetic, ExcessiveMotionIsRejected) {
  SynthConfig c = small_synth();
  // Moves the camera past the plane.
  c.twist.nu = Vec3(0.0, 0.0, -5.0);
  try {
    generate_synthetic(c, 2);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_argument);
  }
}

TEST(Synthetic, DeterministicForFixedSeed) {
  SynthConfig c = small_synth();
  c.noise_sigma = 2.0;
  c.depth_model = DepthModel::random;
  c.twist.omega = Vec3(0.0, 0.01, 0.0);
  const auto a = generate_synthetic(c, 3);
  const auto b = generate_synthetic(c, 3);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(a.frames[k].image, b.frames[k].image);
    EXPECT_EQ(a.frames[k].depth, b.frames[k].depth);
  }
  c.seed = 12;
  EXPECT_NE(generate_synthetic(c, 1).frames[0].image, a.frames[0].image);
}

TEST(Synthetic, WrittenSequenceLoadsBack) {
  ScratchDir dir("synth_rt");
  SynthConfig c = small_synth();
  c.depth_model = DepthModel::random;
  c.twist.nu = Vec3(0.01, 0.0, 0.0);
  const SyntheticSequence s = generate_synthetic(c, 3);
  write_synthetic(s, dir.path);
  const Sequence seq = load_tum(dir.path);
  ASSERT_EQ(seq.frames.size(), 3u);
  EXPECT_NEAR(seq.K.fx, s.K.fx, 1e-6);
  const Trajectory gt = read_trajectory(dir.path / "groundtruth.txt", TrajectoryFormat::tum);
  ASSERT_EQ(gt.size(), 3u);
  EXPECT_NEAR((gt[2].pose.translation() - s.ground_truth[2].pose.translation()).norm(), 0.0, 1e-6);
  for (std::size_t k = 0; k < 3; ++k) {
    const LoadedFrame f = load_frame(seq, seq.frames[k]);
    EXPECT_EQ(f.image, s.frames[k].image);
    ASSERT_TRUE(f.depth);
    // 16-bit storage at 5000 per meter.
    EXPECT_NEAR((*f.depth)(50, 60), s.frames[k].depth(50, 60), 1e-4);
  }
}
