#include "gaitd/noise_regression.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

using namespace gaitd;

namespace {

TrialTrace trace(int id, std::vector<double> t, std::vector<double> v) {
  return TrialTrace{id, std::move(t), std::move(v)};
}

// One segment [0, 1] with the given centers.
Segmentation unit_segment() { return Segmentation{{0.0, 1.0}}; }

// Smooth bump-shaped variance curve on [0, 0.42] with sharp rises at both ends.
double bump_curve(double t) {
  const double u0 = t / 0.05, u1 = (0.42 - t) / 0.05;
  return 1e-7 * (1.0 + 1.5 * (std::exp(-u0 * u0) + std::exp(-u1 * u1)));
}

WindowCenters sample_centers(const Segmentation& seg, const std::vector<int>& per_segment,
                             const std::function<double(double)>& f) {
  WindowCenters c;
  c.time_s.resize(seg.segment_count());
  c.value.resize(seg.segment_count());
  for (std::size_t j = 0; j < seg.segment_count(); ++j) {
    const double t0 = seg.boundaries_s[j], t1 = seg.boundaries_s[j + 1];
    for (int k = 0; k < per_segment[j]; ++k) {
      const double t = t0 + (k + 0.5) * (t1 - t0) / per_segment[j];
      c.time_s[j].push_back(t);
      c.value[j].push_back(f(t));
    }
  }
  return c;
}

}  // namespace

TEST(ErrorVariance, TwoPointSampleVariance) {
  const TrajectorySamples truth{trace(0, {0.005}, {0.0}), trace(1, {0.005}, {0.0})};
  const TrajectorySamples meas{trace(0, {0.005}, {-0.001}), trace(1, {0.005}, {0.001})};
  const auto out = compute_error_variance(truth, meas, 0.01);
  ASSERT_EQ(out.variance.size(), 1u);
  EXPECT_NEAR(out.variance[0], 2e-6, 1e-18);
}

TEST(ErrorVariance, IdenticalTrialsGiveZero) {
  TrajectorySamples truth, meas;
  std::vector<double> t, v;
  for (int i = 0; i < 50; ++i) {
    t.push_back(i * 1e-3);
    v.push_back(std::sin(i * 0.1));
  }
  for (int k = 0; k < 4; ++k) {
    truth.push_back(trace(k, t, v));
    std::vector<double> m = v;
    for (auto& x : m) x += 0.002;  // same offset in every trial: zero spread
    meas.push_back(trace(k, t, m));
  }
  const auto out = compute_error_variance(truth, meas, 0.01);
  ASSERT_EQ(out.variance.size(), 5u);
  for (double s2 : out.variance) EXPECT_NEAR(s2, 0.0, 1e-20);
}

TEST(ErrorVariance, SixteenTrialMonteCarloWithinChiSquareQuantiles) {
  // Piecewise-constant truth per bin so each bin has a single sigma^2.
  auto sigma2 = [](std::size_t bin) { return 1e-6 * (1.0 + 0.5 * static_cast<double>(bin % 7)); };
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n01;
  ErrorSampleSeries series;
  const int trials = 16;
  for (int k = 0; k < trials; ++k) {
    for (int i = 0; i < 420; ++i) {
      const double t = i * 1e-3;
      const auto bin = static_cast<std::size_t>(i / 10);
      series.samples.push_back({t, k, std::sqrt(sigma2(bin)) * n01(rng)});
    }
  }
  const auto out = compute_error_variance(series, 0.01);
  ASSERT_EQ(out.variance.size(), 42u);
  // (n - 1) s^2 / sigma^2 ~ chi2(n - 1); 0.1% family-wise over all bins.
  const boost::math::chi_squared chi(159.0);
  const double tail = 0.001 / (2.0 * 42.0);
  const double lo = boost::math::quantile(chi, tail) / 159.0;
  const double hi = boost::math::quantile(boost::math::complement(chi, tail)) / 159.0;
  for (std::size_t b = 0; b < out.variance.size(); ++b) {
    const double s2 = sigma2(b);
    EXPECT_EQ(out.count[b], 160);
    EXPECT_GE(out.variance[b], lo * s2) << "bin " << b;
    EXPECT_LE(out.variance[b], hi * s2) << "bin " << b;
  }
}

TEST(ErrorVariance, UnbiasedOverRepetitions) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  const double s2 = 4e-6;
  double mean = 0.0;
  const int reps = 1000;
  for (int r = 0; r < reps; ++r) {
    BinnedVariance acc(0.01);
    for (int k = 0; k < 16; ++k) acc.add(0.001, k, std::sqrt(s2) * n01(rng));
    mean += acc.finish().variance[0] / reps;
  }
  EXPECT_NEAR(mean, s2, 0.02 * s2);
}

TEST(ErrorVariance, RejectsBinWithOneTrial) {
  ErrorSampleSeries series;
  for (int k = 0; k < 3; ++k) series.samples.push_back({0.005, k, 0.001 * k});
  series.samples.push_back({0.015, 0, 0.001});  // bin 1 sees only trial 0
  series.samples.push_back({0.016, 0, 0.002});
  for (int k = 0; k < 3; ++k) series.samples.push_back({0.025, k, 0.001 * k});
  try {
    compute_error_variance(series, 0.01);
    FAIL() << "expected IndexedError";
  } catch (const IndexedError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(ErrorVariance, RejectsNaN) {
  ErrorSampleSeries series;
  series.samples.push_back({0.005, 0, 0.001});
  series.samples.push_back({0.005, 1, std::numeric_limits<double>::quiet_NaN()});
  EXPECT_THROW(compute_error_variance(series, 0.01), IndexedError);
}

TEST(ErrorVariance, MergeEqualsSinglePass) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  BinnedVariance whole(0.01), a(0.01), b(0.01);
  for (int k = 0; k < 6; ++k) {
    for (int i = 0; i < 40; ++i) {
      const double t = i * 1e-3, e = 1e-3 * n01(rng) + 0.01;
      whole.add(t, k, e);
      (k < 3 ? a : b).add(t, k, e);
    }
  }
  a.merge(b);
  const auto x = whole.finish(), y = a.finish();
  ASSERT_EQ(x.variance.size(), y.variance.size());
  for (std::size_t i = 0; i < x.variance.size(); ++i) {
    EXPECT_NEAR(x.variance[i], y.variance[i], 1e-12 * x.variance[i]);
    EXPECT_NEAR(x.time_s[i], y.time_s[i], 1e-15);
    EXPECT_EQ(x.count[i], y.count[i]);
  }
}

TEST(Windows, ConstantSeriesNeverExceedsConstant) {
  ErrorVarianceSeries s;
  for (int i = 0; i < 420; ++i) {
    s.time_s.push_back(i * 1e-3 + 5e-4);
    s.variance.push_back(3e-7);
    s.count.push_back(16);
  }
  const Segmentation seg = Segmentation::standard_step();
  for (double tau : {0.001, 0.01, 0.05, 1.0}) {
    WindowConfig cfg;
    cfg.tau_w = tau;
    const auto w = window_representatives(s, cfg, seg);
    for (const auto& v : w.value)
      for (double y : v) EXPECT_LE(y, 3e-7 * (1.0 + 1e-15));
  }
  WindowConfig wide;
  wide.tau_w = 1e6;
  for (const auto& v : window_representatives(s, wide, seg).value)
    for (double y : v) EXPECT_NEAR(y, 3e-7, 1e-18);
}

TEST(Windows, SingleKnotAtCenterReturnsItsValue) {
  ErrorVarianceSeries s{{0.25, 0.75}, {2.0, 5.0}, {2, 2}};
  WindowConfig cfg;
  cfg.knots_per_window = 1;
  cfg.windows_per_segment = {2};
  const auto w = window_representatives(s, cfg, unit_segment());
  ASSERT_EQ(w.value[0].size(), 2u);
  EXPECT_DOUBLE_EQ(w.value[0][0], 2.0);
  EXPECT_DOUBLE_EQ(w.value[0][1], 5.0);
  EXPECT_DOUBLE_EQ(w.time_s[0][0], 0.25);
}

TEST(Windows, WeightAtOneTauIsExpMinusHalf) {
  EXPECT_NEAR(window_weight(0.05, 0.05), 0.60653065971263342, 1e-15);
  EXPECT_NEAR(window_weight(-0.05, 0.05), std::exp(-0.5), 1e-15);
  EXPECT_EQ(window_weight(0.0, 0.05), 1.0);
}

TEST(Windows, EmptySeriesRejected) {
  ErrorVarianceSeries empty;
  WindowConfig cfg;
  cfg.windows_per_segment = {2};
  EXPECT_THROW(window_representatives(empty, cfg, unit_segment()), IndexedError);
}

TEST(Fit, ExactCubicRecovered) {
  WindowCenters c;
  c.time_s.resize(1);
  c.value.resize(1);
  for (int i = 0; i < 10; ++i) {
    const double t = 0.05 + 0.1 * i;
    c.time_s[0].push_back(t);
    c.value[0].push_back(t * t * t);
  }
  const auto s = fit_schedule(c, unit_segment());
  ASSERT_EQ(s.segments.size(), 1u);
  const auto& a = s.segments[0].a;
  EXPECT_NEAR(a[0], 1.0, 1e-9);
  EXPECT_NEAR(a[1], 0.0, 1e-9);
  EXPECT_NEAR(a[2], 0.0, 1e-9);
  EXPECT_NEAR(a[3], 0.0, 1e-9);
}

TEST(Fit, SingleSegmentMatchesNormalEquations) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  WindowCenters c;
  c.time_s.resize(1);
  c.value.resize(1);
  for (int i = 0; i < 12; ++i) {
    c.time_s[0].push_back((i + 0.5) / 12.0);
    c.value[0].push_back(u(rng));
  }
  // Independent oracle: normal equations in the absolute monomial basis.
  Eigen::MatrixXd T(12, 4);
  Eigen::VectorXd y(12);
  for (int i = 0; i < 12; ++i) {
    const double t = c.time_s[0][static_cast<std::size_t>(i)];
    T.row(i) << t * t * t, t * t, t, 1.0;
    y(i) = c.value[0][static_cast<std::size_t>(i)];
  }
  const Eigen::Vector4d oracle = (T.transpose() * T).ldlt().solve(T.transpose() * y);
  const auto s = fit_schedule(c, unit_segment());
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(s.segments[0].a[static_cast<std::size_t>(k)], oracle(k), 1e-8);
}

class PiecewiseTruth : public ::testing::TestWithParam<FitMethod> {};

TEST_P(PiecewiseTruth, BoundaryValueAndSlopeRecovered) {
  const Segmentation seg = Segmentation::for_step(0.42);
  // C1 truth from Hermite pieces with O(1) values and slopes.
  std::vector<CubicSegment> truth;
  auto v = [](double t) { return 1.0 + std::sin(9.0 * t); };
  auto sl = [](double t) { return 9.0 * std::cos(9.0 * t); };
  for (std::size_t j = 0; j < seg.segment_count(); ++j) {
    const double t0 = seg.boundaries_s[j], t1 = seg.boundaries_s[j + 1];
    truth.push_back(hermite_segment(t0, t1, v(t0), v(t1), sl(t0), sl(t1)));
  }
  auto f = [&](double t) {
    for (const auto& s : truth)
      if (t < s.t_end) return s.value(t);
    return truth.back().value(t);
  };
  const auto centers = sample_centers(seg, std::vector<int>(seg.segment_count(), 6), f);
  const auto fit = fit_schedule(centers, seg, kVarianceFloor, GetParam());
  for (std::size_t j = 0; j < seg.segment_count(); ++j) {
    for (double t : {seg.boundaries_s[j], seg.boundaries_s[j + 1]}) {
      EXPECT_NEAR(fit.segments[j].value(t), truth[j].value(t), 1e-8) << "segment " << j;
      EXPECT_NEAR(fit.segments[j].slope(t), truth[j].slope(t), 1e-8) << "segment " << j;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Methods, PiecewiseTruth,
                         ::testing::Values(FitMethod::Joint, FitMethod::Sequential));

TEST(Fit, NoisyCurveCloseToUnconstrainedFit) {
  const Segmentation seg = Segmentation::standard_step();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  const std::vector<int> per{5, 5, 5, 5, 5, 5, 5, 5, 2};
  auto centers = sample_centers(seg, per, bump_curve);
  for (auto& vs : centers.value)
    for (auto& y : vs) y *= 1.0 + 0.1 * n01(rng);

  const auto fit = fit_schedule(centers, seg);
  double ss_fit = 0.0, ss_free = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < seg.segment_count(); ++j) {
    const auto& ts = centers.time_s[j];
    const auto& ys = centers.value[j];
    const auto m = static_cast<Eigen::Index>(ts.size());
    Eigen::MatrixXd T(m, 4);
    Eigen::VectorXd y(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double tau = (ts[static_cast<std::size_t>(i)] - seg.boundaries_s[j]) /
                         (seg.boundaries_s[j + 1] - seg.boundaries_s[j]);
      T.row(i) << tau * tau * tau, tau * tau, tau, 1.0;
      y(i) = ys[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd c = T.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y);
    ss_free += (T * c - y).squaredNorm();
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const double r = fit.segments[j].value(ts[i]) - ys[i];
      ss_fit += r * r;
    }
    n += ts.size();
  }
  const double rmse_fit = std::sqrt(ss_fit / static_cast<double>(n));
  const double rmse_free = std::sqrt(ss_free / static_cast<double>(n));
  EXPECT_LE(rmse_fit, 1.5 * rmse_free);

  // Continuity at interior boundaries, in absolute terms and relative to scale.
  for (std::size_t j = 0; j + 1 < fit.segments.size(); ++j) {
    const double t = fit.segments[j].t_end;
    EXPECT_NEAR(fit.segments[j].value(t), fit.segments[j + 1].value(t), 1e-12);
    EXPECT_NEAR(fit.segments[j].value(t), fit.segments[j + 1].value(t), 1e-8 * 1e-7);
    EXPECT_NEAR(fit.segments[j].slope(t), fit.segments[j + 1].slope(t), 1e-8 * 1e-6);
  }
}

TEST(Fit, DuplicatedCenterTimesRejectedWithSegmentIndex) {
  const Segmentation seg = Segmentation::standard_step();
  auto centers = sample_centers(seg, {5, 5, 5, 5, 5, 5, 5, 5, 2}, bump_curve);
  for (auto& t : centers.time_s[2]) t = centers.time_s[2][0];
  for (FitMethod m : {FitMethod::Joint, FitMethod::Sequential}) {
    try {
      fit_schedule(centers, seg, kVarianceFloor, m);
      FAIL() << "expected IndexedError";
    } catch (const IndexedError& e) {
      EXPECT_EQ(e.index(), 2u);
    }
  }
}

TEST(Schedule, InteriorBoundaryLeftEqualsRight) {
  const Segmentation seg = Segmentation::standard_step();
  const auto fit = fit_schedule(
      sample_centers(seg, {5, 5, 5, 5, 5, 5, 5, 5, 2}, bump_curve), seg);
  for (std::size_t j = 0; j + 1 < fit.segments.size(); ++j) {
    const double t = seg.boundaries_s[j + 1];
    const double left = fit.segments[j].value(t);
    const double right = fit.raw(t);  // evaluation at a boundary uses the right piece
    EXPECT_NEAR(left, right, 1e-12);
  }
}

TEST(Schedule, ConstantEverywhere) {
  Vec6 c;
  c << 1e-8, 2e-8, 3e-8, 4e-6, 5e-6, 6e-6;
  const NoiseSchedule s = NoiseSchedule::constant(c, 0.42);
  for (double t : {0.0, 0.049, 0.05, 0.2, 0.41, 0.42}) {
    const Vec6 v = evaluate_schedule(s, t);
    for (int i = 0; i < 6; ++i) EXPECT_EQ(v(i), c(i));
  }
}

TEST(Schedule, NegativeCubicClampedToFloor) {
  NoiseSchedule s = NoiseSchedule::constant(Vec6::Constant(1e-8), 0.42);
  CubicSchedule& py = s.components.at({Axis::Y, Quantity::Position});
  CubicSegment seg;
  seg.t_start = 0.0;
  seg.t_end = 0.42;
  seg.a = {0.0, 0.0, 1e-6, -1e-7};  // negative for t < 0.1
  py.segments = {seg};
  py.floor = 1e-12;
  s.floor_variance = 1e-12;
  EXPECT_LT(py.raw(0.05), 0.0);
  EXPECT_EQ(evaluate_schedule(s, 0.05)(state_index(Axis::Y, Quantity::Position)), 1e-12);
  EXPECT_NEAR(evaluate_schedule(s, 0.3)(state_index(Axis::Y, Quantity::Position)), 2e-7, 1e-20);
}

TEST(Hermite, EndpointsMatch) {
  const auto s = hermite_segment(0.1, 0.15, 2.0, -1.0, 30.0, 4.0);
  EXPECT_NEAR(s.value(0.1), 2.0, 1e-12);
  EXPECT_NEAR(s.value(0.15), -1.0, 1e-12);
  EXPECT_NEAR(s.slope(0.1), 30.0, 1e-9);
  EXPECT_NEAR(s.slope(0.15), 4.0, 1e-9);
}

TEST(Regression, FullChainRecoversSmoothVariance) {
  // Errors drawn with the bump curve variance, 16 trials at 1 ms.
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n01;
  ErrorSampleSeries series;
  for (int k = 0; k < 16; ++k)
    for (int r = 0; r < 40; ++r)  // repeated steps per trial
      for (int i = 0; i < 420; ++i) {
        const double t = (i + 0.5) * 1e-3;
        series.samples.push_back({t, k, std::sqrt(bump_curve(t)) * n01(rng)});
      }
  const Segmentation seg = Segmentation::standard_step();
  WindowConfig cfg = WindowConfig::for_segmentation(seg, 0.01);
  cfg.knots_per_window = 10;
  cfg.normalized = true;
  const auto fit = regress_component(series, cfg, seg, 1e-3);
  double worst = 0.0;
  for (int i = 0; i < 420; ++i) {
    const double t = (i + 0.5) * 1e-3;
    worst = std::max(worst, std::abs(fit.evaluate(t) - bump_curve(t)));
  }
  EXPECT_LE(worst, 0.1 * bump_curve(0.0));
}
