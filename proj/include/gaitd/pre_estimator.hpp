// Stage-1 fusion of the joint-kinematics and IMU body-state streams.
//
// All fusions are per-axis scalar and variance-optimal for independent
// sources: position first, then a finite-difference velocity from the fused
// positions, then a two-stage velocity fusion (differential + IMU, then joint).
#pragma once

#include "gaitd/types.hpp"

#include <optional>

namespace gaitd {

struct SensorVariances {
  Vec3 sigma2_posJC = Vec3::Constant(1e-6);
  Vec3 sigma2_velJC = Vec3::Constant(4e-4);
  Vec3 sigma2_posimu = Vec3::Constant(1e-6);
  Vec3 sigma2_velimu = Vec3::Constant(4e-4);

  /// Split 6-vectors laid out as [px, py, pz, vx, vy, vz].
  static SensorVariances from(const Vec6& imu, const Vec6& jc);
  void validate() const;
};

struct PositionFusion {
  Vec3 p_check = Vec3::Zero();
  Vec3 sigma2 = Vec3::Zero();
  Vec3 gain = Vec3::Zero();
};

struct DifferentialVelocity {
  Vec3 v_diff = Vec3::Zero();
  Vec3 sigma2 = Vec3::Zero();
};

struct VelocityFusion {
  Vec3 v_check = Vec3::Zero();
  Vec3 sigma2 = Vec3::Zero();
  Vec3 gain_imu = Vec3::Zero();  ///< stage 1 gain toward the IMU velocity
  Vec3 gain_jc = Vec3::Zero();   ///< stage 2 gain toward the stage-1 result
  Vec3 v_bar = Vec3::Zero();
  Vec3 sigma2_bar = Vec3::Zero();
};

struct PreEstimate {
  Vec3 p_check = Vec3::Zero();
  Vec3 v_check = Vec3::Zero();
  Vec3 sigma2_pos = Vec3::Zero();
  Vec3 sigma2_vel = Vec3::Zero();

  Vec3 gain_pos = Vec3::Zero();
  Vec3 gain_vel_imu = Vec3::Zero();
  Vec3 gain_vel_jc = Vec3::Zero();
  Vec3 v_diff = Vec3::Zero();
  Vec3 sigma2_diff = Vec3::Zero();
  Vec3 v_bar = Vec3::Zero();
  Vec3 sigma2_vel_bar = Vec3::Zero();
};

/// Scalar optimal fusion of x0 (var0) and x1 (var1): returns the gain toward x1.
inline double optimal_gain(double var0, double var1) { return var0 / (var0 + var1); }

/// Variance of x0 + k (x1 - x0) for independent sources.
inline double fused_variance(double k, double var0, double var1) {
  return (1.0 - k) * (1.0 - k) * var0 + k * k * var1;
}

PositionFusion fuse_position(const Vec3& p_jc, const Vec3& p_imu, const SensorVariances& vars);

/// Finite-difference velocity of the fused position and its variance
/// (var_now + var_prev) / dt^2.
DifferentialVelocity differential_velocity(const Vec3& p_now, const Vec3& p_prev, double dt,
                                           const Vec3& sigma2_now, const Vec3& sigma2_prev);

VelocityFusion fuse_velocity(const Vec3& v_diff, const Vec3& sigma2_diff, const Vec3& v_imu,
                             const Vec3& v_jc, const SensorVariances& vars);

/// Stateful wrapper holding the previous fused position.
class PreEstimator {
 public:
  explicit PreEstimator(double dt) : dt_(dt) {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  }

  PreEstimate step(const Vec3& p_jc, const Vec3& v_jc, const Vec3& p_imu, const Vec3& v_imu,
                   const SensorVariances& vars);
  void reset() { prev_.reset(); }

 private:
  struct Previous {
    Vec3 p;
    Vec3 sigma2;
  };
  double dt_;
  std::optional<Previous> prev_;
};

}  // namespace gaitd
