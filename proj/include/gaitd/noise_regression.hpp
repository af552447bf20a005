// Offline noise characterization: binned error variances, Gaussian-weighted
// variance windows, and a C1 piecewise-cubic time model of process noise
// within one gait step.
#pragma once

#include "gaitd/types.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace gaitd {

struct ErrorSample {
  double time_s = 0.0;
  int trial_id = 0;
  double error = 0.0;
};

/// Pooled error samples of one state component across repeated trials.
struct ErrorSampleSeries {
  Axis axis = Axis::Y;
  Quantity quantity = Quantity::Position;
  std::vector<ErrorSample> samples;
  double step_duration_s = 0.0;
};

/// One trial of a time-stamped scalar trajectory.
struct TrialTrace {
  int trial_id = 0;
  std::vector<double> time_s;
  std::vector<double> value;
};
using TrajectorySamples = std::vector<TrialTrace>;

/// Sample variance per time bin. `time_s` is the mean sample time in the bin.
struct ErrorVarianceSeries {
  std::vector<double> time_s;
  std::vector<double> variance;
  std::vector<int> count;
};

struct Segmentation;

struct WindowConfig {
  int knots_per_window = 20;
  std::vector<int> windows_per_segment{5, 5, 5, 5, 5, 5, 5, 5, 2};
  double tau_w = 0.05;
  /// Divide by the sum of weights instead of the knot count.
  bool normalized = false;

  void validate(std::size_t segment_count) const;

  /// One window per `window_s` of each segment, at least two per segment.
  static WindowConfig for_segmentation(const Segmentation& seg, double window_s = 0.01);
};

struct Segmentation {
  std::vector<double> boundaries_s;

  std::size_t segment_count() const { return boundaries_s.empty() ? 0 : boundaries_s.size() - 1; }
  double duration() const { return boundaries_s.back(); }
  void validate() const;

  /// 8 x 0.05 s followed by the 0.02 s remainder of a 0.42 s step.
  static Segmentation standard_step();
  /// Equal 0.05 s segments with a shorter final segment covering `step_duration`.
  static Segmentation for_step(double step_duration, double segment_s = 0.05);
};

struct WindowCenters {
  /// Per segment: window center times and representative values.
  std::vector<std::vector<double>> time_s;
  std::vector<std::vector<double>> value;
};

struct CubicSegment {
  double t_start = 0.0;
  double t_end = 0.0;
  /// g(t) = a[0] t^3 + a[1] t^2 + a[2] t + a[3], t in step time.
  std::array<double, 4> a{0.0, 0.0, 0.0, 0.0};

  double value(double t) const;
  double slope(double t) const;
};

/// Piecewise cubic for one (axis, quantity) component.
struct CubicSchedule {
  std::vector<CubicSegment> segments;
  double floor = kVarianceFloor;
  std::vector<double> residual_norm;

  double duration() const { return segments.empty() ? 0.0 : segments.back().t_end; }
  /// Raw cubic value (no floor); t clamped to [0, duration].
  double raw(double t) const;
  double evaluate(double t) const;
};

/// Time-varying per-component variance model over one gait step.
struct NoiseSchedule {
  std::map<std::pair<Axis, Quantity>, CubicSchedule> components;
  double floor_variance = kVarianceFloor;

  double step_duration() const;
  const CubicSchedule& at(Axis axis, Quantity q) const;
  /// Constant schedule with the given 6-vector of variances.
  static NoiseSchedule constant(const Vec6& variances, double step_duration);
  /// Mean of each component over the step.
  Vec6 time_average(int samples = 421) const;
};

struct MeasurementVariances {
  Vec6 sigma2_imu0 = Vec6::Constant(1e-6);
  Vec6 sigma2_JC0 = Vec6::Constant(1e-6);
  /// FP accelerometer variance, used to account for acceleration-input noise.
  Vec3 sigma2_afp = Vec3::Constant(1e-2);

  void validate() const;
};

/// Streaming per-bin error statistics (pooled over trials, mean removed).
class BinnedVariance {
 public:
  explicit BinnedVariance(double bin_s = 0.01);

  void add(double time_s, int trial_id, double error);
  void add(const ErrorSample& s) { add(s.time_s, s.trial_id, s.error); }
  /// Pool another accumulator with the same bin width into this one.
  void merge(const BinnedVariance& other);
  /// Sample variance per bin; every bin between the first and last occupied
  /// one must hold samples from at least 2 trials.
  ErrorVarianceSeries finish() const;

 private:
  struct Bin {
    double n = 0.0;
    double mean = 0.0;
    double m2 = 0.0;
    double time_sum = 0.0;
    std::vector<int> trials;  // sorted, unique
  };
  double bin_s_;
  std::map<std::size_t, Bin> bins_;
  std::size_t added_ = 0;
};

/// Bin the per-trial errors truth - measured and return the sample variance
/// of each bin. Requires trials sampled on a common grid.
ErrorVarianceSeries compute_error_variance(const TrajectorySamples& truth,
                                           const TrajectorySamples& measured, double bin_s = 0.01);

/// Same, for pre-computed error samples (CSV input path).
ErrorVarianceSeries compute_error_variance(const ErrorSampleSeries& series, double bin_s = 0.01);

/// Gaussian weight of a knot at offset `dt` from the window center.
inline double window_weight(double dt, double tau_w) {
  return std::exp(-(dt * dt) / (2.0 * tau_w * tau_w));
}

WindowCenters window_representatives(const ErrorVarianceSeries& series, const WindowConfig& cfg,
                                     const Segmentation& seg);

enum class FitMethod {
  /// All segments solved together under the boundary constraints.
  Joint,
  /// First segment by plain least squares, then each later segment
  /// constrained to the value and slope its predecessor left behind.
  /// Boundary errors grow by roughly 2x per segment on noisy data.
  Sequential,
};

/// C1 piecewise-cubic fit of window representatives. Segments with fewer
/// than 4 centers drop the cubic term.
CubicSchedule fit_schedule(const WindowCenters& centers, const Segmentation& seg,
                           double floor = kVarianceFloor, FitMethod method = FitMethod::Joint);

/// Cubic Hermite segment through (t0, v0, s0) and (t1, v1, s1).
CubicSegment hermite_segment(double t0, double t1, double v0, double v1, double s0, double s1);

/// Full regression chain for one component.
CubicSchedule regress_component(const ErrorSampleSeries& series, const WindowConfig& cfg,
                                const Segmentation& seg, double bin_s,
                                FitMethod method = FitMethod::Joint);

/// Variances of [px, py, pz, vx, vy, vz] at step time `t`, floored.
Vec6 evaluate_schedule(const NoiseSchedule& schedule, double t);

}  // namespace gaitd
