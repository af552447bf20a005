// Stage-2 adaptive Kalman filtering of the fused body state, plus the EKF and
// AEKF baselines used for comparison.
//
// Each axis carries an independent [position, velocity] filter driven by an
// acceleration input. The hierarchical estimator blends pendulum-model and
// accelerometer accelerations, mixes scheduled priors with residual-based
// covariance estimates, and refreshes the sensor variances fed back into the
// stage-1 fusion.
#pragma once

#include "gaitd/gait_sim.hpp"
#include "gaitd/noise_regression.hpp"
#include "gaitd/pre_estimator.hpp"
#include "gaitd/types.hpp"

#include <array>
#include <deque>
#include <memory>
#include <string_view>

namespace gaitd {

enum class TransitionModel {
  Zoh,       ///< input matrix [dt^2/2, dt]
  FullStep,  ///< input matrix [dt^2, dt]
};

struct AdaptiveParams {
  Vec6 alpha = Vec6::Constant(0.7);
  Vec6 beta0 = Vec6::Constant(0.5);
  Vec6 beta1 = Vec6::Constant(0.3);
  Vec6 beta2 = Vec6::Constant(0.2);
  double tau_a = 0.05;
  int n_res = 100;
  TransitionModel transition = TransitionModel::Zoh;
  /// Weights on the squared position and velocity deviations in the kernel.
  double kernel_weight_pos = 1.0;
  double kernel_weight_vel = 1.0;
  double floor = kVarianceFloor;
  /// AEKF baseline: weight of the fresh Q estimate per tick (the rest
  /// carries over from the previous tick).
  double aekf_q_rate = 0.01;

  void validate() const;
};

struct AccelerationFusion {
  Vec3 a_check = Vec3::Zero();
  Vec3 gain = Vec3::Zero();  ///< weight on the pendulum acceleration, in (0, 1]
  Vec3 a_hlip = Vec3::Zero();
};

/// Blend the accelerometer with the pendulum acceleration a_hlip = gain * p_rel
/// (zero vertically) using K = exp(-(w_p dp^2 + w_v dv^2) / (2 tau_a^2)).
AccelerationFusion fuse_acceleration(const Vec3& a_fp, const Vec3& p_rel, const Vec3& v_rel,
                                     const Vec3& p_des, const Vec3& v_des, double pendulum_gain,
                                     double tau_a, double weight_pos = 1.0,
                                     double weight_vel = 1.0);

/// Variance of a_check when the pendulum term inherits position noise.
Vec3 fused_acceleration_variance(const AccelerationFusion& fusion, const Vec3& sigma2_afp,
                                 const Vec3& sigma2_pos, double pendulum_gain);

/// Bounded FIFO of the most recent residuals.
class ResidualBuffer {
 public:
  explicit ResidualBuffer(std::size_t capacity = 100) : capacity_(capacity) {}
  void push(const Vec2& r);
  bool full() const { return data_.size() >= capacity_; }
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Vec2>& data() const { return data_; }
  Vec2 mean() const;
  Vec2 mean_square() const;
  /// Per-component sample variance (mean removed, n - 1 denominator).
  Vec2 sample_variance() const;

 private:
  std::size_t capacity_;
  std::deque<Vec2> data_;
};

struct ResidualBuffers {
  explicit ResidualBuffers(std::size_t n = 100)
      : innovation(n), prior_variance(n), correction(n), e_jc(n), e_imu(n) {}
  ResidualBuffer innovation;      ///< z - x_prior
  ResidualBuffer prior_variance;  ///< diag of the predicted covariance
  ResidualBuffer correction;      ///< K * innovation
  ResidualBuffer e_jc;            ///< joint stream minus posterior
  ResidualBuffer e_imu;           ///< IMU stream minus posterior
};

struct FilterAxisState {
  Vec2 x = Vec2::Zero();
  Mat2 P = Mat2::Identity();
  Mat2 R_tilde = Mat2::Identity();
  Mat2 Q_tilde = Mat2::Zero();
  ResidualBuffers buffers;
  double accel = 0.0;         ///< input applied over the next transition
  double accel_variance = 0.0;
  bool initialized = false;
};

struct CovarianceUpdate {
  Mat2 R_tilde = Mat2::Zero();
  Mat2 Q_tilde = Mat2::Zero();
  bool adapted = false;  ///< false while the residual window is still filling
};

/// R~ = alpha R + (1 - alpha) R^, Q~ = b0 Q + b1 Q^ + b2 Q~prev. R^ is the
/// innovation mean square minus the mean predicted variance (floored at 0),
/// Q^ the mean square of the state corrections. Weights are the two diagonal
/// entries of the 6-vectors belonging to `axis`.
CovarianceUpdate update_covariances(const Mat2& prior_R, const Mat2& prior_Q,
                                    const ResidualBuffers& buffers, const Mat2& prev_Q_tilde,
                                    const AdaptiveParams& params, Axis axis);

struct AxisUpdate {
  Vec2 innovation = Vec2::Zero();
  Mat2 S = Mat2::Zero();
  Mat2 gain = Mat2::Zero();
  Mat2 P_prior = Mat2::Zero();
};

/// Predict with the stored acceleration input, then update with z = (p, v)
/// using the state's R~ and Q~. Appends to the innovation buffers.
AxisUpdate ekf_axis_step(FilterAxisState& state, const Vec2& z, double dt,
                         TransitionModel transition = TransitionModel::Zoh);

struct VarianceRefresh {
  Vec2 variance = Vec2::Zero();
  bool updated = false;
};

/// Windowed sample variance of a residual stream; keeps `previous` when the
/// window holds fewer than two samples.
VarianceRefresh update_sensor_variances(const ResidualBuffer& residuals, const Vec2& previous,
                                        double floor = kVarianceFloor);

struct BodyEstimate {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  std::array<Mat2, 3> P{Mat2::Zero(), Mat2::Zero(), Mat2::Zero()};
  std::array<Mat2, 3> R_tilde{Mat2::Zero(), Mat2::Zero(), Mat2::Zero()};
  std::array<Mat2, 3> Q_tilde{Mat2::Zero(), Mat2::Zero(), Mat2::Zero()};
  Vec3 accel_gain = Vec3::Zero();
};

/// Normalized estimation error squared e^T P^-1 e.
double nees(const Vec2& error, const Mat2& P);

class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual std::string_view name() const = 0;
  virtual BodyEstimate step(const SensorFrame& frame) = 0;
};

class HierarchicalEstimator final : public Estimator {
 public:
  HierarchicalEstimator(const GaitConfig& gait, const AdaptiveParams& params,
                        NoiseSchedule schedule, const MeasurementVariances& variances);

  std::string_view name() const override { return "proposed"; }
  BodyEstimate step(const SensorFrame& frame) override;

  const std::array<FilterAxisState, 3>& axes() const { return axes_; }
  const SensorVariances& sensor_variances() const { return sensor_vars_; }
  const PreEstimate& last_pre_estimate() const { return last_pre_; }

 private:
  GaitConfig gait_;
  AdaptiveParams params_;
  NoiseSchedule schedule_;
  MeasurementVariances variances0_;
  SensorVariances sensor_vars_;
  PreEstimator pre_;
  PreEstimate last_pre_;
  std::array<FilterAxisState, 3> axes_;
  double prev_time_in_step_ = 0.0;
  bool started_ = false;
};

enum class BaselineKind { EKF, AEKF };

/// Filters the equal-weight average of the two raw streams with the
/// accelerometer as input. EKF keeps R and Q fixed; AEKF adapts both from
/// residuals alone.
class BaselineEstimator final : public Estimator {
 public:
  BaselineEstimator(BaselineKind kind, const GaitConfig& gait, const NoiseSchedule& schedule,
                    const MeasurementVariances& variances, int n_res = 100,
                    TransitionModel transition = TransitionModel::Zoh, double q_rate = 0.01);

  std::string_view name() const override { return kind_ == BaselineKind::EKF ? "EKF" : "AEKF"; }
  BodyEstimate step(const SensorFrame& frame) override;
  const std::array<FilterAxisState, 3>& axes() const { return axes_; }

  /// Adaptation weights used by the AEKF variant.
  static AdaptiveParams aekf_params(int n_res, double q_rate);

 private:
  BaselineKind kind_;
  GaitConfig gait_;
  AdaptiveParams params_;
  Vec6 R_;
  Vec6 Q_;
  Vec3 sigma2_afp_;
  std::array<FilterAxisState, 3> axes_;
};

enum class EstimatorKind { Proposed, EKF, AEKF };
std::string_view to_string(EstimatorKind k);
EstimatorKind estimator_from_string(std::string_view s);

std::unique_ptr<Estimator> make_estimator(EstimatorKind kind, const GaitConfig& gait,
                                          const AdaptiveParams& params,
                                          const NoiseSchedule& schedule,
                                          const MeasurementVariances& variances);

}  // namespace gaitd
