#include "gaitd/pre_estimator.hpp"

#include <cmath>

namespace gaitd {

namespace {

void require_positive(const Vec3& v, const char* what) {
  for (int i = 0; i < 3; ++i) {
    if (!(v(i) > 0.0) || !std::isfinite(v(i))) {
      throw IndexedError(std::string(what) + " must be positive and finite", static_cast<std::size_t>(i));
    }
  }
}

}  // namespace

SensorVariances SensorVariances::from(const Vec6& imu, const Vec6& jc) {
  SensorVariances s;
  s.sigma2_posimu = imu.head<3>();
  s.sigma2_velimu = imu.tail<3>();
  s.sigma2_posJC = jc.head<3>();
  s.sigma2_velJC = jc.tail<3>();
  return s;
}

void SensorVariances::validate() const {
  require_positive(sigma2_posJC, "JC position variance");
  require_positive(sigma2_velJC, "JC velocity variance");
  require_positive(sigma2_posimu, "IMU position variance");
  require_positive(sigma2_velimu, "IMU velocity variance");
}

PositionFusion fuse_position(const Vec3& p_jc, const Vec3& p_imu, const SensorVariances& vars) {
  require_positive(vars.sigma2_posJC, "JC position variance");
  require_positive(vars.sigma2_posimu, "IMU position variance");
  PositionFusion out;
  for (int i = 0; i < 3; ++i) {
    const double k = optimal_gain(vars.sigma2_posJC(i), vars.sigma2_posimu(i));
    out.gain(i) = k;
    out.p_check(i) = p_jc(i) + k * (p_imu(i) - p_jc(i));
    out.sigma2(i) = fused_variance(k, vars.sigma2_posJC(i), vars.sigma2_posimu(i));
  }
  return out;
}

DifferentialVelocity differential_velocity(const Vec3& p_now, const Vec3& p_prev, double dt,
                                           const Vec3& sigma2_now, const Vec3& sigma2_prev) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  DifferentialVelocity out;
  out.v_diff = (p_now - p_prev) / dt;
  out.sigma2 = (sigma2_now + sigma2_prev) / (dt * dt);
  return out;
}

VelocityFusion fuse_velocity(const Vec3& v_diff, const Vec3& sigma2_diff, const Vec3& v_imu,
                             const Vec3& v_jc, const SensorVariances& vars) {
  require_positive(sigma2_diff, "differential velocity variance");
  require_positive(vars.sigma2_velimu, "IMU velocity variance");
  require_positive(vars.sigma2_velJC, "JC velocity variance");
  VelocityFusion out;
  for (int i = 0; i < 3; ++i) {
    const double k1 = optimal_gain(sigma2_diff(i), vars.sigma2_velimu(i));
    out.gain_imu(i) = k1;
    out.v_bar(i) = v_diff(i) + k1 * (v_imu(i) - v_diff(i));
    out.sigma2_bar(i) = fused_variance(k1, sigma2_diff(i), vars.sigma2_velimu(i));

    const double k2 = optimal_gain(vars.sigma2_velJC(i), out.sigma2_bar(i));
    out.gain_jc(i) = k2;
    out.v_check(i) = v_jc(i) + k2 * (out.v_bar(i) - v_jc(i));
    out.sigma2(i) = fused_variance(k2, vars.sigma2_velJC(i), out.sigma2_bar(i));
  }
  return out;
}

PreEstimate PreEstimator::step(const Vec3& p_jc, const Vec3& v_jc, const Vec3& p_imu,
                               const Vec3& v_imu, const SensorVariances& vars) {
  const PositionFusion pos = fuse_position(p_jc, p_imu, vars);
  DifferentialVelocity diff;
  if (prev_) {
    diff = differential_velocity(pos.p_check, prev_->p, dt_, pos.sigma2, prev_->sigma2);
  } else {
    // No previous position yet: lean on the joint velocity with a wide variance.
    diff.v_diff = v_jc;
    diff.sigma2 = 10.0 * vars.sigma2_velJC;
  }
  const VelocityFusion vel = fuse_velocity(diff.v_diff, diff.sigma2, v_imu, v_jc, vars);
  prev_ = Previous{pos.p_check, pos.sigma2};

  PreEstimate out;
  out.p_check = pos.p_check;
  out.sigma2_pos = pos.sigma2;
  out.gain_pos = pos.gain;
  out.v_diff = diff.v_diff;
  out.sigma2_diff = diff.sigma2;
  out.v_bar = vel.v_bar;
  out.sigma2_vel_bar = vel.sigma2_bar;
  out.gain_vel_imu = vel.gain_imu;
  out.gain_vel_jc = vel.gain_jc;
  out.v_check = vel.v_check;
  out.sigma2_vel = vel.sigma2;
  return out;
}

}  // namespace gaitd
