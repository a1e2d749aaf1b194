#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "bitvo/geometry.hpp"
#include "oracles.hpp"

using namespace bitvo;

namespace {

Twist random_twist(std::mt19937_64& g, double max_angle, double max_trans) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec3 axis(n(g), n(g), n(g));
  axis.normalize();
  const Vec3 t(n(g), n(g), n(g));
  return {axis * (max_angle * u(g)), t.normalized() * (max_trans * u(g))};
}

}  // namespace

TEST(Se3Exp, ZeroIsIdentity) {
  const RigidTransform T = se3_exp(Twist());
  EXPECT_TRUE(T.rotation().isApprox(Mat3::Identity()));
  EXPECT_EQ(T.translation(), Vec3::Zero());
}

TEST(Se3Exp, PureTranslation) {
  const RigidTransform T = se3_exp(Twist(Vec3::Zero(), Vec3(1, 2, 3)));
  EXPECT_TRUE(T.rotation().isApprox(Mat3::Identity()));
  EXPECT_NEAR((T.translation() - Vec3(1, 2, 3)).norm(), 0.0, 1e-15);
}

TEST(Se3Exp, QuarterTurnAboutX) {
  const RigidTransform T = se3_exp(Twist(Vec3(std::numbers::pi / 2, 0, 0), Vec3::Zero()));
  EXPECT_NEAR((T.rotation() * Vec3(0, 1, 0) - Vec3(0, 0, 1)).norm(), 0.0, 1e-9);
}

TEST(Se3Exp, RotationMatchesRodrigues) {
  std::mt19937_64 g(21);
  for (int i = 0; i < 1000; ++i) {
    const Twist xi = random_twist(g, std::numbers::pi - 1e-3, 5.0);
    const double theta = xi.omega.norm();
    if (theta < 1e-6) continue;
    const Mat3 R = oracle::rodrigues(xi.omega / theta, theta);
    ASSERT_LT((se3_exp(xi).rotation() - R).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Se3Exp, TranslationIsIntegratedScrewMotion) {
  // t = integral_0^1 exp(s [w]) ds * nu, by midpoint quadrature.
  std::mt19937_64 g(22);
  for (int i = 0; i < 50; ++i) {
    const Twist xi = random_twist(g, 2.5, 3.0);
    const double theta = xi.omega.norm();
    Vec3 t = Vec3::Zero();
    const int n = 4000;
    for (int k = 0; k < n; ++k) {
      const double s = (k + 0.5) / n;
      t += oracle::rodrigues(xi.omega / theta, s * theta) * xi.nu / n;
    }
    EXPECT_LT((se3_exp(xi).translation() - t).norm(), 1e-6);
  }
}

TEST(Se3Exp, SmallAngleBranchIsContinuous) {
  // On both sides of the series switch, exp agrees with its first-order
  // expansion R = I + [w], t = nu + w x nu / 2 to rounding.
  const Vec3 axis = Vec3(1, -2, 0.5).normalized();
  const Vec3 nu(0.3, 0.1, -0.2);
  for (double a : {0.5e-8, 0.99e-8, 1.01e-8, 2e-8, 1e-7}) {
    const Vec3 w = axis * a;
    const RigidTransform T = se3_exp(Twist(w, nu));
    Mat3 R1 = Mat3::Identity();
    R1(0, 1) = -w.z(); R1(0, 2) = w.y(); R1(1, 2) = -w.x();
    R1(1, 0) = w.z();  R1(2, 0) = -w.y(); R1(2, 1) = w.x();
    EXPECT_LT((T.rotation() - R1).cwiseAbs().maxCoeff(), 1e-14) << a;
    EXPECT_LT((T.translation() - (nu + 0.5 * w.cross(nu))).norm(), 1e-15) << a;
  }
}

TEST(Se3Log, IdentityAndPureTranslation) {
  EXPECT_LT(se3_log(RigidTransform::identity()).norm(), 1e-15);
  const Twist xi = se3_log(RigidTransform(Mat3::Identity(), Vec3(0.5, -1, 2)));
  EXPECT_LT(xi.omega.norm(), 1e-15);
  EXPECT_LT((xi.nu - Vec3(0.5, -1, 2)).norm(), 1e-15);
}

TEST(Se3Log, RoundTripExample) {
  const Twist xi(Vec3(0.1, -0.2, 0.3), Vec3(0.5, 0.0, -0.5));
  EXPECT_LT((se3_log(se3_exp(xi)).vector() - xi.vector()).norm(), 1e-9);
}

TEST(Se3Log, RoundTripProperty) {
  std::mt19937_64 g(23);
  for (int i = 0; i < 5000; ++i) {
    const Twist xi = random_twist(g, std::numbers::pi - 1e-3, 10.0);
    ASSERT_LT((se3_log(se3_exp(xi)).vector() - xi.vector()).norm(), 1e-9) << i;
  }
  // Tiny angles go through the series branches.
  for (double a : {0.0, 1e-12, 1e-9, 1e-7, 1e-5, 1e-3}) {
    const Twist xi(Vec3(0.6, 0.0, 0.8) * a, Vec3(1, 2, 3));
    EXPECT_LT((se3_log(se3_exp(xi)).vector() - xi.vector()).norm(), 1e-9) << a;
  }
}

TEST(Se3Log, AmbiguousNearPi) {
  const RigidTransform T = se3_exp(Twist(Vec3(std::numbers::pi, 0, 0), Vec3::Zero()));
  try {
    se3_log(T);
    FAIL() << "expected ambiguous_rotation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ambiguous_rotation);
  }
}

TEST(RigidTransform, InverseAndComposition) {
  std::mt19937_64 g(24);
  for (int i = 0; i < 200; ++i) {
    const RigidTransform A = se3_exp(random_twist(g, 3.0, 4.0));
    const RigidTransform B = se3_exp(random_twist(g, 3.0, 4.0));
    EXPECT_LT(((A * A.inverse()).matrix() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(((A * B).matrix() - A.matrix() * B.matrix()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(A.orthonormality_error(), 1e-12);
  }
}

TEST(Camera, BackprojectExamples) {
  const Intrinsics unit{1, 1, 0, 0, std::nullopt};
  EXPECT_LT((backproject(unit, Vec2(0.5, 1.0), 2.0) - Vec3(1, 2, 2)).norm(), 1e-15);
  const Intrinsics K{500, 480, 320, 240, std::nullopt};
  EXPECT_LT((backproject(K, Vec2(320, 240), 3.7) - Vec3(0, 0, 3.7)).norm(), 1e-15);
  try {
    backproject(K, Vec2(1, 1), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_depth);
  }
  EXPECT_THROW(backproject(K, Vec2(1, 1), std::nan("")), Error);
}

TEST(Camera, ProjectExamples) {
  const Intrinsics unit{1, 1, 0, 0, std::nullopt};
  EXPECT_LT((*project(unit, Vec3(1, 2, 2)) - Vec2(0.5, 1.0)).norm(), 1e-15);
  EXPECT_FALSE(project(unit, Vec3(1, 2, 0)));
  EXPECT_FALSE(project(unit, Vec3(1, 2, -1)));
}

TEST(Camera, ProjectBackprojectRoundTrip) {
  std::mt19937_64 g(25);
  std::uniform_real_distribution<double> px(-100, 800), dz(0.1, 50);
  const Intrinsics K{525, 520, 319.5, 239.5, std::nullopt};
  for (int i = 0; i < 1000; ++i) {
    const Vec2 p(px(g), px(g));
    EXPECT_LT((*project(K, backproject(K, p, dz(g))) - p).norm(), 1e-9);
  }
}

TEST(Camera, WarpExamples) {
  const Intrinsics K{500, 500, 320, 240, std::nullopt};
  EXPECT_LT((*warp_pixel(RigidTransform::identity(), K, Vec2(10, 20), 2.0) - Vec2(10, 20)).norm(), 1e-12);
  const double b = 0.1, d = 2.0;
  const RigidTransform T(Mat3::Identity(), Vec3(b, 0, 0));
  EXPECT_LT((*warp_pixel(T, K, Vec2(100, 50), d) - Vec2(100 + 500 * b / d, 50)).norm(), 1e-12);
}

TEST(Camera, WarpMatchesComposition) {
  std::mt19937_64 g(26);
  std::uniform_real_distribution<double> px(0, 640), dz(1, 10);
  const Intrinsics K{525, 525, 319.5, 239.5, std::nullopt};
  for (int i = 0; i < 500; ++i) {
    const RigidTransform T = se3_exp(random_twist(g, 0.2, 0.5));
    const Vec2 p(px(g), px(g) * 0.75);
    const double d = dz(g);
    const Vec3 X((p.x() - K.cx) * d / K.fx, (p.y() - K.cy) * d / K.fy, d);
    const Vec3 Y = T.rotation() * X + T.translation();
    const Vec2 expect(K.fx * Y.x() / Y.z() + K.cx, K.fy * Y.y() / Y.z() + K.cy);
    EXPECT_LT((*warp_pixel(T, K, p, d) - expect).norm(), 1e-9);
  }
}

TEST(Camera, WarpJacobianMatchesFiniteDifferences) {
  std::mt19937_64 g(27);
  std::uniform_real_distribution<double> px(0, 640), dz(1, 10);
  const Intrinsics K{525, 500, 319.5, 239.5, std::nullopt};
  for (int i = 0; i < 200; ++i) {
    const Vec3 X = backproject(K, Vec2(px(g), px(g) * 0.75), dz(g));
    const Mat26 J = warp_jacobian(K, X);
    for (int j = 0; j < 6; ++j) {
      Vec6 e = Vec6::Zero();
      const double h = 1e-6;
      e[j] = h;
      const Vec2 fp = *project(K, se3_exp(Twist::from_vector(e)) * X);
      const Vec2 fm = *project(K, se3_exp(Twist::from_vector(-e)) * X);
      const Vec2 fd = (fp - fm) / (2 * h);
      EXPECT_LT((fd - J.col(j)).norm(), 1e-6 * std::max(1.0, J.col(j).norm())) << j;
    }
  }
}

TEST(Camera, LevelIntrinsics) {
  const Intrinsics K{520, 500, 320, 240, 0.12};
  const Intrinsics K2 = K.at_level(2);
  EXPECT_DOUBLE_EQ(K2.fx, 130);
  EXPECT_DOUBLE_EQ(K2.fy, 125);
  EXPECT_DOUBLE_EQ(K2.cx, 80);
  EXPECT_DOUBLE_EQ(K2.cy, 60);
  EXPECT_DOUBLE_EQ(*K2.baseline, 0.12);
}

TEST(Calibration, PlainAndKittiForms) {
  const Intrinsics a = parse_intrinsics("# camera\n525 525 319.5 239.5\n");
  EXPECT_DOUBLE_EQ(a.fx, 525);
  EXPECT_DOUBLE_EQ(a.cy, 239.5);
  EXPECT_FALSE(a.baseline);
  const Intrinsics b = parse_intrinsics("718.856 718.856 607.1928 185.2157 0.537\n");
  EXPECT_DOUBLE_EQ(*b.baseline, 0.537);
  const Intrinsics c = parse_intrinsics(
      "P0: 718.856 0 607.1928 0 0 718.856 185.2157 0 0 0 1 0\n"
      "P1: 718.856 0 607.1928 -386.1448 0 718.856 185.2157 0 0 0 1 0\n");
  EXPECT_DOUBLE_EQ(c.fx, 718.856);
  EXPECT_DOUBLE_EQ(c.cx, 607.1928);
  EXPECT_NEAR(*c.baseline, 386.1448 / 718.856, 1e-12);
  EXPECT_THROW(parse_intrinsics("1 2 3\n"), Error);
  EXPECT_THROW(parse_intrinsics("-1 2 3 4\n"), Error);
  EXPECT_THROW(parse_intrinsics(""), Error);
  EXPECT_EQ(format_intrinsics(parse_intrinsics(format_intrinsics(b))), format_intrinsics(b));
}
