#include "gaitd/post_estimator.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

using namespace gaitd;

namespace {

Mat2 diag2(double a, double b) {
  Mat2 m = Mat2::Zero();
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

// Buffers filled with fixed synthetic residuals.
ResidualBuffers filled_buffers(std::size_t n, std::uint64_t seed) {
  ResidualBuffers b(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  for (std::size_t i = 0; i < n; ++i) {
    b.innovation.push(Vec2(0.003 * n01(rng), 0.05 * n01(rng)));
    b.prior_variance.push(Vec2(2e-6, 1e-4));
    b.correction.push(Vec2(0.001 * n01(rng), 0.01 * n01(rng)));
  }
  return b;
}

GaitScenario noiseless_walk(int steps, std::uint64_t seed) {
  GaitScenario sc = marking_time_scenario(steps, seed);
  sc.noise.measurement.sigma2_imu0.setZero();
  sc.noise.measurement.sigma2_JC0.setZero();
  sc.noise.measurement.sigma2_afp.setZero();
  sc.noise.imu_drift = 0.0;
  sc.process_schedule = NoiseSchedule{};
  sc.esvc_mode = ContactMode::Exact;
  return sc;
}

// Estimator-side description of noise-free sensors.
MeasurementVariances near_zero_variances() {
  MeasurementVariances v;
  v.sigma2_imu0.setConstant(1e-14);
  v.sigma2_JC0.setConstant(1e-14);
  v.sigma2_afp.setConstant(1e-14);
  return v;
}

}  // namespace

TEST(AccelerationFusion, KernelValues) {
  const Vec3 afp(1.0, 2.0, 3.0), p(0.01, 0.1, 0.6), v(0.0, 0.2, 0.0);
  const double tau = 0.05, gain = 9.81 / 0.6;
  const auto on = fuse_acceleration(afp, p, v, p, v, gain, tau);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(on.gain(i), 1.0);
  EXPECT_NEAR(on.a_check(1), gain * 0.1, 1e-14);
  EXPECT_EQ(on.a_check(2), 0.0);  // no vertical pendulum term

  // dp^2 + dv^2 = 2 tau^2.
  const Vec3 dp(tau, 0.0, tau * std::sqrt(0.5)), dv(tau, tau * std::sqrt(2.0), tau * std::sqrt(1.5));
  const auto mid = fuse_acceleration(afp, p + dp, v + dv, p, v, gain, tau);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mid.gain(i), std::exp(-1.0), 1e-15) << i;
  EXPECT_NEAR(mid.gain(0), 0.36787944117144233, 1e-15);

  const auto far = fuse_acceleration(afp, p + Vec3::Constant(10.0), v, p, v, gain, tau);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(far.gain(i), 0.0);
    EXPECT_EQ(far.a_check(i), afp(i));
  }
  EXPECT_THROW(fuse_acceleration(afp, p, v, p, v, gain, 0.0), ConfigError);
}

TEST(AccelerationFusion, VarianceIsConvexCombination) {
  AccelerationFusion f;
  f.gain = Vec3(0.3, 1.0, 0.5);
  const Vec3 v = fused_acceleration_variance(f, Vec3::Constant(0.01), Vec3::Constant(1e-6), 16.0);
  EXPECT_NEAR(v(0), 0.49 * 0.01 + 0.09 * 256.0 * 1e-6, 1e-15);
  EXPECT_NEAR(v(1), 256.0 * 1e-6, 1e-15);
  EXPECT_NEAR(v(2), 0.25 * 0.01, 1e-15);
}

TEST(Covariances, AlphaOneKeepsPriorR) {
  AdaptiveParams p;
  p.alpha.setOnes();
  const auto b = filled_buffers(100, 1);
  const Mat2 R = diag2(3e-6, 2e-4);
  const auto out = update_covariances(R, diag2(1e-9, 1e-7), b, diag2(5e-9, 5e-7), p, Axis::Y);
  EXPECT_TRUE(out.adapted);
  EXPECT_EQ(out.R_tilde, R);
}

TEST(Covariances, BetaPriorOnlyGivesSchedulePrior) {
  AdaptiveParams p;
  p.beta0.setOnes();
  p.beta1.setZero();
  p.beta2.setZero();
  const Mat2 Q = diag2(1e-9, 1e-7);
  const auto out = update_covariances(diag2(1e-6, 1e-4), Q, filled_buffers(100, 2), diag2(4e-9, 3e-7),
                                      p, Axis::X);
  EXPECT_EQ(out.Q_tilde, Q);
}

TEST(Covariances, BetaPreviousOnlyFreezesQ) {
  AdaptiveParams p;
  p.beta0.setZero();
  p.beta1.setZero();
  p.beta2.setOnes();
  const Mat2 prev = diag2(4e-9, 3e-7);
  const auto out = update_covariances(diag2(1e-6, 1e-4), diag2(1e-9, 1e-7), filled_buffers(100, 3),
                                      prev, p, Axis::Z);
  EXPECT_EQ(out.Q_tilde, prev);
}

TEST(Covariances, GenericMixMatchesHandComputation) {
  AdaptiveParams p;
  p.alpha << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  p.beta0 << 0.5, 0.4, 0.3, 0.2, 0.1, 0.0;
  p.beta1 << 0.25, 0.3, 0.3, 0.5, 0.6, 0.2;
  p.beta2 = Vec6::Ones() - p.beta0 - p.beta1;
  const auto b = filled_buffers(50, 4);
  const Mat2 R = diag2(1e-6, 4e-4), Q = diag2(1e-9, 1e-7), prev = diag2(2e-9, 3e-7);

  // Hand-computed residual statistics.
  Vec2 ms = Vec2::Zero(), pv = Vec2::Zero(), cs = Vec2::Zero();
  for (std::size_t i = 0; i < 50; ++i) {
    const Vec2 r = b.innovation.data()[i], c = b.correction.data()[i];
    ms += r.cwiseProduct(r) / 50.0;
    pv += b.prior_variance.data()[i] / 50.0;
    cs += c.cwiseProduct(c) / 50.0;
  }
  const auto out = update_covariances(R, Q, b, prev, p, Axis::Y);
  for (int q = 0; q < 2; ++q) {
    const int idx = q * 3 + 1;
    const double r_hat = std::max(ms(q) - pv(q), 0.0);
    const double r = p.alpha(idx) * R(q, q) + (1.0 - p.alpha(idx)) * r_hat;
    const double qq = p.beta0(idx) * Q(q, q) + p.beta1(idx) * cs(q) + p.beta2(idx) * prev(q, q);
    EXPECT_NEAR(out.R_tilde(q, q), r, 1e-12 * r);
    EXPECT_NEAR(out.Q_tilde(q, q), qq, 1e-12 * qq);
  }
  EXPECT_EQ(out.R_tilde(0, 1), 0.0);
}

TEST(Covariances, UnfilledWindowUsesPriors) {
  AdaptiveParams p;
  ResidualBuffers b(100);
  b.innovation.push(Vec2(1.0, 1.0));
  const Mat2 R = diag2(1e-6, 4e-4), Q = diag2(1e-9, 1e-7);
  const auto out = update_covariances(R, Q, b, Q, p, Axis::X);
  EXPECT_FALSE(out.adapted);
  EXPECT_NEAR((out.R_tilde - R).norm(), 0.0, 1e-20);
  EXPECT_NEAR((out.Q_tilde - Q).norm(), 0.0, 1e-22);
}

TEST(Params, BetaMustSumToOne) {
  AdaptiveParams p;
  p.beta2(4) = 0.3;
  try {
    p.validate();
    FAIL();
  } catch (const IndexedError& e) {
    EXPECT_EQ(e.index(), 4u);
  }
}

TEST(AxisFilter, ConstantAccelerationTrackedExactly) {
  const double dt = 1e-3, a = 2.5;
  FilterAxisState s;
  s.x = Vec2(0.1, -0.3);
  s.P = diag2(1e-8, 1e-6);
  s.R_tilde = diag2(1e-6, 1e-4);
  s.Q_tilde = diag2(1e-10, 1e-8);
  s.accel = a;
  for (int k = 1; k <= 100; ++k) {
    const double t = k * dt;
    const Vec2 truth(0.1 - 0.3 * t + 0.5 * a * t * t, -0.3 + a * t);
    ekf_axis_step(s, truth, dt);
    EXPECT_NEAR(s.x(0), truth(0), 1e-10) << k;
    EXPECT_NEAR(s.x(1), truth(1), 1e-10) << k;
  }
}

TEST(AxisFilter, LimitingGains) {
  const double dt = 1e-3;
  const Vec2 z(1.0, 2.0);
  FilterAxisState base;
  base.x = Vec2(0.0, 0.0);
  base.P = diag2(1e-6, 1e-6);

  FilterAxisState trust_meas = base;
  trust_meas.R_tilde = diag2(1e-12, 1e-12);
  trust_meas.Q_tilde = diag2(1e6, 1e6);
  ekf_axis_step(trust_meas, z, dt);
  EXPECT_LT((trust_meas.x - z).norm(), 1e-9);

  FilterAxisState trust_model = base;
  trust_model.R_tilde = diag2(1e12, 1e12);
  trust_model.Q_tilde = diag2(1e-12, 1e-12);
  ekf_axis_step(trust_model, z, dt);
  EXPECT_LT(trust_model.x.norm(), 1e-9);

  FilterAxisState singular;
  singular.P.setZero();
  singular.R_tilde.setZero();
  singular.Q_tilde.setZero();
  EXPECT_THROW(ekf_axis_step(singular, z, dt), DivergenceError);
}

TEST(AxisFilter, GainDecreasesWithMeasurementVariance) {
  double prev = 2.0;
  for (double r : {1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3}) {
    FilterAxisState s;
    s.P = diag2(1e-6, 1e-4);
    s.Q_tilde = diag2(1e-9, 1e-7);
    s.R_tilde = diag2(r, r);
    const auto u = ekf_axis_step(s, Vec2(0.0, 0.0), 1e-3);
    EXPECT_LT(u.gain(0, 0), prev);
    prev = u.gain(0, 0);
  }
}

TEST(SensorVariance, ConstantResidualFloored) {
  ResidualBuffer b(100);
  for (int i = 0; i < 100; ++i) b.push(Vec2(0.3, -0.1));
  const auto r = update_sensor_variances(b, Vec2(1.0, 1.0), 1e-12);
  EXPECT_TRUE(r.updated);
  EXPECT_EQ(r.variance(0), 1e-12);
  EXPECT_EQ(r.variance(1), 1e-12);
}

TEST(SensorVariance, AlternatingResidualsMatchSampleVariance) {
  const double d = 0.004;
  for (int n : {2, 10, 100}) {
    ResidualBuffer b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) b.push(Vec2(i % 2 ? -d : d, i % 2 ? d : -d));
    const auto r = update_sensor_variances(b, Vec2::Zero());
    // Textbook sample variance: sum of squared deviations about the mean over n - 1.
    const double mean = 0.0;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) ss += std::pow((i % 2 ? -d : d) - mean, 2);
    EXPECT_NEAR(r.variance(0), ss / (n - 1), 1e-18);
    EXPECT_NEAR(r.variance(0), n * d * d / (n - 1), 1e-18);
  }
  ResidualBuffer two(2);
  two.push(Vec2(d, d));
  two.push(Vec2(-d, -d));
  EXPECT_NEAR(update_sensor_variances(two, Vec2::Zero()).variance(0), 2.0 * d * d, 1e-18);
}

TEST(SensorVariance, GaussianResidualsWithinFifteenPercent) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  const double s2 = 2.5e-5;
  int inside = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    ResidualBuffer b(100);
    for (int i = 0; i < 100; ++i) b.push(Vec2(std::sqrt(s2) * n01(rng), 0.0));
    const double est = update_sensor_variances(b, Vec2::Zero()).variance(0);
    inside += std::abs(est - s2) <= 0.15 * s2;
  }
  // Sample variance of 100 draws has relative sd sqrt(2/99) = 0.142, so the
  // 15% band holds with probability about 0.71.
  EXPECT_GE(inside, static_cast<int>(0.6 * reps));
  EXPECT_LE(inside, static_cast<int>(0.82 * reps));
}

TEST(SensorVariance, ShortBufferKeepsPrevious) {
  ResidualBuffer b(100);
  b.push(Vec2(1.0, 2.0));
  const auto r = update_sensor_variances(b, Vec2(3.0, 4.0));
  EXPECT_FALSE(r.updated);
  EXPECT_EQ(r.variance, Vec2(3.0, 4.0));
}

TEST(ResidualBuffer, KeepsMostRecent) {
  ResidualBuffer b(3);
  for (int i = 0; i < 5; ++i) b.push(Vec2(i, -i));
  EXPECT_TRUE(b.full());
  EXPECT_EQ(b.data().front(), Vec2(2, -2));
  EXPECT_EQ(b.mean(), Vec2(3, -3));
}

TEST(Nees, MatchesDirectFormula) {
  Mat2 P;
  P << 2.0, 0.5, 0.5, 1.0;
  const Vec2 e(0.3, -0.7);
  EXPECT_NEAR(nees(e, P), e.dot(P.inverse() * e), 1e-14);
  EXPECT_EQ(nees(Vec2::Zero(), P), 0.0);
}

class NoiselessLog : public ::testing::TestWithParam<EstimatorKind> {};

TEST_P(NoiselessLog, EstimateEqualsTruth) {
  const GaitScenario sc = noiseless_walk(6, 2);
  const SensorLog log = simulate_walk(sc);
  auto est = make_estimator(GetParam(), sc.gait, AdaptiveParams{}, default_process_schedule(0.42),
                            near_zero_variances());
  double worst = 0.0;
  for (std::size_t i = 0; i < log.ticks.size(); ++i) {
    const BodyEstimate e = est->step(log.ticks[i]);
    worst = std::max(worst, (e.p - log.truth[i].p).cwiseAbs().maxCoeff());
    worst = std::max(worst, (e.v - log.truth[i].v).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-8);
}

INSTANTIATE_TEST_SUITE_P(AllEstimators, NoiselessLog,
                         ::testing::Values(EstimatorKind::Proposed, EstimatorKind::EKF,
                                           EstimatorKind::AEKF));

TEST(Hierarchical, DeterministicAndCovariancePositive) {
  const GaitScenario sc = marking_time_scenario(6, 11);
  const SensorLog log = simulate_walk(sc);
  auto a = make_estimator(EstimatorKind::Proposed, sc.gait, AdaptiveParams{}, sc.process_schedule,
                          sc.noise.measurement);
  auto b = make_estimator(EstimatorKind::Proposed, sc.gait, AdaptiveParams{}, sc.process_schedule,
                          sc.noise.measurement);
  for (const auto& f : log.ticks) {
    const BodyEstimate x = a->step(f), y = b->step(f);
    ASSERT_EQ(std::memcmp(x.p.data(), y.p.data(), sizeof(double) * 3), 0);
    ASSERT_EQ(std::memcmp(x.v.data(), y.v.data(), sizeof(double) * 3), 0);
    for (const Mat2& P : x.P) {
      EXPECT_EQ(P(0, 1), P(1, 0));
      EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat2>(P).eigenvalues()(0), 0.0);
    }
  }
}

TEST(Estimators, NamesRoundTrip) {
  for (EstimatorKind k : {EstimatorKind::Proposed, EstimatorKind::EKF, EstimatorKind::AEKF}) {
    EXPECT_EQ(estimator_from_string(to_string(k)), k);
  }
  EXPECT_THROW(estimator_from_string("kalman"), ConfigError);
}
