#include "gaitd/esvc_contact.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

using namespace gaitd;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent oracle: recursive adaptive Simpson with Richardson correction.
double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                   double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50);
}

double ellipse_speed(double a, double b, double t) {
  return std::sqrt(a * a * std::sin(t) * std::sin(t) + b * b * std::cos(t) * std::cos(t));
}

EllipseSegment quarter(double a, double b) {
  EllipseSegment s;
  s.a = a;
  s.b = b;
  s.theta0 = -kPi / 2;
  s.theta1 = 0.0;
  return s;
}

}  // namespace

TEST(ArcLength, CircleIsRadiusTimesAngle) {
  EllipseSegment c;
  c.a = c.b = 0.07;
  c.theta0 = 0.0;
  c.theta1 = 1.3;
  EXPECT_NEAR(arc_length_exact(c, 0.0, 1.3), 0.07 * 1.3, 1e-15);
  EXPECT_NEAR(arc_length_exact(c, 0.2, 0.9), 0.07 * 0.7, 1e-15);
  const ArcApprox ap = arc_length_approx(c, 0.0, 1.3);
  EXPECT_NEAR(ap.length, 0.07 * 1.3, 1e-15);
}

TEST(ArcLength, EmptyArcIsZero) {
  const EllipseSegment s = quarter(0.06, 0.02);
  EXPECT_EQ(arc_length_exact(s, -1.0, -1.0), 0.0);
  EXPECT_NEAR(arc_length_approx(s, -1.0, -1.0).length, 0.0, 1e-18);
}

TEST(ArcLength, QuarterArcMatchesAdaptiveSimpson) {
  const EllipseSegment s = quarter(0.06, 0.02);
  const double oracle =
      adaptive_simpson([](double t) { return ellipse_speed(0.06, 0.02, t); }, -kPi / 2, 0.0, 1e-14);
  EXPECT_NEAR(arc_length_exact(s, -kPi / 2, 0.0), oracle, 1e-10);
  // Signed when reversed.
  EXPECT_NEAR(arc_length_exact(s, 0.0, -kPi / 2), -oracle, 1e-10);
}

TEST(ArcLength, ApproximationWithinToleranceAndCertifiedBound) {
  const EllipseSegment s = quarter(0.06, 0.02);
  const double exact = arc_length_exact(s, -kPi / 2, 0.0);
  const ArcApprox ap = arc_length_approx(s, -kPi / 2, 0.0);
  EXPECT_LE(std::abs(ap.length - exact), 1e-4);
  EXPECT_LE(std::abs(ap.length - exact), ap.error_bound + 1e-15);

  const ArcLengthApproximant approx(s);
  for (int i = 0; i <= 200; ++i) {
    const double th = -kPi / 2 + (kPi / 2) * i / 200.0;
    const double ex = arc_length_exact(s, -kPi / 2, th);
    EXPECT_LE(std::abs(approx.cumulative(th) - ex), approx.bound_at(th) + 1e-15) << th;
  }
}

TEST(ArcLength, RejectsAnglesOutsideSegment) {
  const EllipseSegment s = quarter(0.06, 0.02);
  EXPECT_THROW(arc_length_exact(s, -kPi / 2, 0.3), std::domain_error);
  EXPECT_THROW(arc_length_approx(s, -2.0, -1.0), std::domain_error);
}

TEST(Profile, DefaultIsG1AndCoversRollRange) {
  const EsvcProfile p = EsvcProfile::default_profile();
  EXPECT_LT(p.g1_defect(), 1e-12);
  EXPECT_EQ(p.segments().size(), 3u);
  EXPECT_DOUBLE_EQ(p.roll_min(), -0.45);
  EXPECT_DOUBLE_EQ(p.roll_max(), 0.45);
  // Edge arcs more curved than the middle one at the bottom.
  const auto& mid = p.segments()[1];
  const auto& edge = p.segments()[2];
  EXPECT_LT(edge.a * edge.a / edge.b, mid.a * mid.a / mid.b);
}

TEST(Profile, RolloverEqualsArcLengthTraversed) {
  const EsvcProfile p = EsvcProfile::default_profile();
  const auto& segs = p.segments();
  for (double roll : {-0.4, -0.2, -0.05, 0.05, 0.1, 0.3, 0.44}) {
    // Oracle: integrate the sole speed over roll, d s / d roll = speed * d theta / d roll,
    // piece by piece across the junctions.
    double s = 0.0;
    const double lo = std::min(0.0, roll), hi = std::max(0.0, roll);
    for (const auto& seg : segs) {
      const double a = std::max(lo, seg.roll_min()), b = std::min(hi, seg.roll_max());
      if (b <= a) continue;
      s += adaptive_simpson(
          [&seg](double r) { return seg.speed(seg.theta_at_roll(r)) * seg.dtheta_droll(r); }, a, b,
          1e-14);
    }
    EXPECT_NEAR(p.rollover_exact(roll), roll >= 0 ? s : -s, 1e-10) << roll;
  }
}

TEST(Contact, ZeroRollGivesStaticOffset) {
  const EsvcProfile p = EsvcProfile::default_profile();
  for (ContactMode m : {ContactMode::Exact, ContactMode::Approx}) {
    const ContactTransform ct = contact_transform(p, FootState{0.0, 0.0}, m);
    EXPECT_TRUE(ct.T_dot.isZero(0.0));
    EXPECT_TRUE((ct.T.topLeftCorner<3, 3>().isIdentity(1e-15)));
    // O sits 4 cm above the contact point.
    EXPECT_NEAR(ct.T(0, 3), 0.0, 1e-15);
    EXPECT_NEAR(ct.T(1, 3), 0.0, 1e-15);
    EXPECT_NEAR(ct.T(2, 3), 0.04, 1e-15);
    EXPECT_EQ(ct.rollover, 0.0);
  }
}

TEST(Contact, TimeDerivativeMatchesFiniteDifference) {
  const EsvcProfile p = EsvcProfile::default_profile();
  const double h = 1e-6;
  for (ContactMode m : {ContactMode::Exact, ContactMode::Approx}) {
    for (double roll : {-0.3, -0.12, 0.07, 0.2, 0.4}) {
      const double rate = 0.8;
      const Mat4 Tp = contact_transform(p, {roll + h, 0.0}, m).T;
      const Mat4 Tm = contact_transform(p, {roll - h, 0.0}, m).T;
      const Mat4 fd = (Tp - Tm) / (2.0 * h) * rate;
      const Mat4 Td = contact_transform(p, {roll, rate}, m).T_dot;
      EXPECT_LT((fd - Td).cwiseAbs().maxCoeff(), 1e-6) << roll;
    }
  }
}

TEST(Contact, RotationStaysOrthonormal) {
  const EsvcProfile p = EsvcProfile::default_profile();
  for (int i = 0; i <= 50; ++i) {
    const double roll = -0.45 + 0.9 * i / 50.0;
    const Mat4 T = contact_transform(p, {roll, 1.0}, ContactMode::Exact).T;
    const Eigen::Matrix3d R = T.topLeftCorner<3, 3>();
    EXPECT_LT((R.transpose() * R - Eigen::Matrix3d::Identity()).norm(), 1e-14);
    EXPECT_NEAR(R.determinant(), 1.0, 1e-14);
    const Mat4 T2 = T * T;  // composition
    const Eigen::Matrix3d R2 = T2.topLeftCorner<3, 3>();
    EXPECT_LT((R2.transpose() * R2 - Eigen::Matrix3d::Identity()).norm(), 1e-14);
  }
}

TEST(Contact, RollOutsideRangeRejected) {
  const EsvcProfile p = EsvcProfile::default_profile();
  EXPECT_THROW(contact_transform(p, {0.46, 0.0}, ContactMode::Exact), std::domain_error);
  EXPECT_THROW(contact_transform(p, {-0.5, 0.0}, ContactMode::Approx), std::domain_error);
}

TEST(Contact, ApproxTranslationWithinCertifiedBound) {
  const EsvcProfile p = EsvcProfile::default_profile();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.45, 0.45);
  for (int i = 0; i < 1000; ++i) {
    const double roll = u(rng);
    const auto ex = contact_transform(p, {roll, 0.5}, ContactMode::Exact);
    const auto ap = contact_transform(p, {roll, 0.5}, ContactMode::Approx);
    EXPECT_LE((ex.T - ap.T).cwiseAbs().maxCoeff(), ap.rollover_bound + 1e-15) << roll;
    EXPECT_EQ(ex.rollover_bound, 0.0);
  }
}

TEST(BodyState, IdentityAndTranslation) {
  ContactTransform id;
  const BodyState s{Vec3(0.1, -0.2, 0.6), Vec3(0.3, 0.01, -0.05)};
  const BodyState a = body_state_from_joints(s, id);
  EXPECT_EQ(a.p, s.p);
  EXPECT_EQ(a.v, s.v);

  ContactTransform tr;
  const Vec3 d(0.02, -0.01, 0.04);
  tr.T.topRightCorner<3, 1>() = d;
  const BodyState b = body_state_from_joints(s, tr);
  EXPECT_LT((b.p - (s.p + d)).norm(), 1e-16);
  EXPECT_EQ(b.v, s.v);
}

TEST(BodyState, MatchesBlockMatrixOracle) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 100; ++trial) {
    ContactTransform ct;
    const Eigen::Matrix3d R =
        Eigen::Quaterniond(Eigen::Vector4d(n01(rng), n01(rng), n01(rng), n01(rng)).normalized())
            .toRotationMatrix();
    ct.T.setIdentity();
    ct.T.topLeftCorner<3, 3>() = R;
    ct.T.topRightCorner<3, 1>() = Vec3(n01(rng), n01(rng), n01(rng));
    ct.T_dot.setZero();
    ct.T_dot.topLeftCorner<3, 4>() = Eigen::Matrix<double, 3, 4>::Random();
    const BodyState s{Vec3(n01(rng), n01(rng), n01(rng)), Vec3(n01(rng), n01(rng), n01(rng))};

    Eigen::Matrix<double, 8, 8> M = Eigen::Matrix<double, 8, 8>::Zero();
    M.topLeftCorner<4, 4>() = ct.T;
    M.bottomLeftCorner<4, 4>() = ct.T_dot;
    M.bottomRightCorner<4, 4>() = ct.T;
    Eigen::Matrix<double, 8, 1> x;
    x << s.p, 1.0, s.v, 0.0;
    const Eigen::Matrix<double, 8, 1> y = M * x;

    const BodyState out = body_state_from_joints(s, ct);
    EXPECT_LT((out.p - y.segment<3>(0)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((out.v - y.segment<3>(4)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(y(3), 1.0, 1e-15);
    EXPECT_NEAR(y(7), 0.0, 1e-12);

    const BodyState back = joints_from_body_state(out, ct);
    EXPECT_LT((back.p - s.p).norm(), 1e-12);
    EXPECT_LT((back.v - s.v).norm(), 1e-12);
  }
}
