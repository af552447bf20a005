#include "gaitd/post_estimator.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace gaitd {

void AdaptiveParams::validate() const {
  auto in_unit = [](const Vec6& v) { return (v.array() >= 0.0).all() && (v.array() <= 1.0).all(); };
  if (!in_unit(alpha) || !in_unit(beta0) || !in_unit(beta1) || !in_unit(beta2)) {
    throw ConfigError("adaptive weights must lie in [0, 1]");
  }
  const Vec6 sum = beta0 + beta1 + beta2;
  for (int i = 0; i < 6; ++i) {
    if (std::abs(sum(i) - 1.0) > 1e-12) throw IndexedError("beta0 + beta1 + beta2 must equal 1", i);
  }
  if (!(tau_a > 0.0)) throw ConfigError("tau_a must be positive");
  if (n_res < 2) throw ConfigError("n_res must be at least 2");
  if (kernel_weight_pos < 0.0 || kernel_weight_vel < 0.0) {
    throw ConfigError("kernel weights must be non-negative");
  }
  if (!(floor > 0.0)) throw ConfigError("variance floor must be positive");
  if (!(aekf_q_rate >= 0.0 && aekf_q_rate <= 1.0)) throw ConfigError("aekf_q_rate must lie in [0, 1]");
}

// ---------------------------------------------------------------------------
// Acceleration fusion

AccelerationFusion fuse_acceleration(const Vec3& a_fp, const Vec3& p_rel, const Vec3& v_rel,
                                     const Vec3& p_des, const Vec3& v_des, double pendulum_gain,
                                     double tau_a, double weight_pos, double weight_vel) {
  if (!(tau_a > 0.0)) throw ConfigError("tau_a must be positive");
  AccelerationFusion out;
  out.a_hlip = Vec3(pendulum_gain * p_rel(0), pendulum_gain * p_rel(1), 0.0);
  for (int i = 0; i < 3; ++i) {
    const double dp = p_rel(i) - p_des(i);
    const double dv = v_rel(i) - v_des(i);
    const double k = std::exp(-(weight_pos * dp * dp + weight_vel * dv * dv) / (2.0 * tau_a * tau_a));
    out.gain(i) = k;
    out.a_check(i) = a_fp(i) + k * (out.a_hlip(i) - a_fp(i));
  }
  return out;
}

Vec3 fused_acceleration_variance(const AccelerationFusion& fusion, const Vec3& sigma2_afp,
                                 const Vec3& sigma2_pos, double pendulum_gain) {
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    const double k = fusion.gain(i);
    const double model = i < 2 ? pendulum_gain * pendulum_gain * sigma2_pos(i) : 0.0;
    out(i) = (1.0 - k) * (1.0 - k) * sigma2_afp(i) + k * k * model;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Residual buffers

void ResidualBuffer::push(const Vec2& r) {
  data_.push_back(r);
  while (data_.size() > capacity_) data_.pop_front();
}

Vec2 ResidualBuffer::mean() const {
  Vec2 m = Vec2::Zero();
  if (data_.empty()) return m;
  for (const auto& r : data_) m += r;
  return m / static_cast<double>(data_.size());
}

Vec2 ResidualBuffer::mean_square() const {
  Vec2 m = Vec2::Zero();
  if (data_.empty()) return m;
  for (const auto& r : data_) m += r.cwiseProduct(r);
  return m / static_cast<double>(data_.size());
}

Vec2 ResidualBuffer::sample_variance() const {
  if (data_.size() < 2) return Vec2::Zero();
  const Vec2 m = mean();
  Vec2 ss = Vec2::Zero();
  for (const auto& r : data_) ss += (r - m).cwiseProduct(r - m);
  return ss / static_cast<double>(data_.size() - 1);
}

// ---------------------------------------------------------------------------
// Covariance adaptation and the per-axis filter

CovarianceUpdate update_covariances(const Mat2& prior_R, const Mat2& prior_Q,
                                    const ResidualBuffers& buffers, const Mat2& prev_Q_tilde,
                                    const AdaptiveParams& params, Axis axis) {
  CovarianceUpdate out;
  Vec2 R_hat = prior_R.diagonal();
  Vec2 Q_hat = prior_Q.diagonal();
  if (buffers.innovation.full()) {
    R_hat = (buffers.innovation.mean_square() - buffers.prior_variance.mean()).cwiseMax(0.0);
    Q_hat = buffers.correction.mean_square();
    out.adapted = true;
  }
  for (int q = 0; q < 2; ++q) {
    const int idx = state_index(axis, static_cast<Quantity>(q));
    const double a = params.alpha(idx);
    const double r = a * prior_R(q, q) + (1.0 - a) * R_hat(q);
    out.R_tilde(q, q) = std::max(r, params.floor);
    out.Q_tilde(q, q) = params.beta0(idx) * prior_Q(q, q) + params.beta1(idx) * Q_hat(q) +
                        params.beta2(idx) * prev_Q_tilde(q, q);
  }
  return out;
}

AxisUpdate ekf_axis_step(FilterAxisState& s, const Vec2& z, double dt, TransitionModel transition) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  Mat2 F;
  F << 1.0, dt, 0.0, 1.0;
  const Vec2 B(transition == TransitionModel::Zoh ? 0.5 * dt * dt : dt * dt, dt);

  AxisUpdate out;
  const Vec2 x_prior = F * s.x + B * s.accel;
  out.P_prior = F * s.P * F.transpose() + s.Q_tilde + B * s.accel_variance * B.transpose();
  out.innovation = z - x_prior;
  out.S = out.P_prior + s.R_tilde;

  Eigen::LLT<Mat2> llt(out.S);
  if (llt.info() != Eigen::Success || !out.S.allFinite()) {
    throw DivergenceError("innovation covariance is singular");
  }
  out.gain = llt.solve(out.P_prior).transpose();  // P S^-1, both symmetric
  const Mat2 I_K = Mat2::Identity() - out.gain;
  s.x = x_prior + out.gain * out.innovation;
  s.P = I_K * out.P_prior * I_K.transpose() + out.gain * s.R_tilde * out.gain.transpose();
  s.P = (0.5 * (s.P + s.P.transpose())).eval();  // eval: transpose would alias
  if (!s.x.allFinite() || !s.P.allFinite()) throw DivergenceError("filter state is not finite");

  s.buffers.innovation.push(out.innovation);
  s.buffers.prior_variance.push(out.P_prior.diagonal());
  s.buffers.correction.push(out.gain * out.innovation);
  return out;
}

VarianceRefresh update_sensor_variances(const ResidualBuffer& residuals, const Vec2& previous,
                                        double floor) {
  if (residuals.size() < 2) return {previous, false};
  return {residuals.sample_variance().cwiseMax(floor), true};
}

double nees(const Vec2& error, const Mat2& P) {
  return error.dot(P.ldlt().solve(error));
}

// ---------------------------------------------------------------------------
// Hierarchical estimator

namespace {

Mat2 diag2(double a, double b) {
  Mat2 m = Mat2::Zero();
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

Mat2 diag_of(const Vec6& v, int axis) { return diag2(v(axis), v(3 + axis)); }

void fill_estimate(BodyEstimate& est, const std::array<FilterAxisState, 3>& axes) {
  for (int i = 0; i < 3; ++i) {
    est.p(i) = axes[i].x(0);
    est.v(i) = axes[i].x(1);
    est.P[i] = axes[i].P;
    est.R_tilde[i] = axes[i].R_tilde;
    est.Q_tilde[i] = axes[i].Q_tilde;
  }
}

}  // namespace

HierarchicalEstimator::HierarchicalEstimator(const GaitConfig& gait, const AdaptiveParams& params,
                                             NoiseSchedule schedule,
                                             const MeasurementVariances& variances)
    : gait_(gait), params_(params), schedule_(std::move(schedule)), variances0_(variances),
      sensor_vars_(SensorVariances::from(variances.sigma2_imu0, variances.sigma2_JC0)),
      pre_(gait.dt) {
  gait_.validate();
  params_.validate();
  variances0_.validate();
  if (schedule_.components.empty()) throw ConfigError("process schedule is empty");
  for (auto& a : axes_) a.buffers = ResidualBuffers(static_cast<std::size_t>(params_.n_res));
}

BodyEstimate HierarchicalEstimator::step(const SensorFrame& f) {
  last_pre_ = pre_.step(f.p_jc, f.v_jc, f.p_imu, f.v_imu, sensor_vars_);
  const PreEstimate& pre = last_pre_;

  const bool exchange = started_ && f.time_in_step < prev_time_in_step_;
  const Vec6 Q_prior = evaluate_schedule(schedule_, prev_time_in_step_);

  for (int i = 0; i < 3; ++i) {
    FilterAxisState& s = axes_[i];
    const Axis axis = static_cast<Axis>(i);
    const Mat2 prior_R = diag2(pre.sigma2_pos(i), pre.sigma2_vel(i));
    const Vec2 z(pre.p_check(i), pre.v_check(i));
    if (!s.initialized) {
      s.R_tilde = prior_R;
      s.Q_tilde = diag_of(Q_prior, i);
      s.x = z;
      s.P = prior_R;
      s.initialized = true;
      continue;
    }
    const Mat2 prev_Q = s.Q_tilde;
    const CovarianceUpdate cov =
        update_covariances(prior_R, diag_of(Q_prior, i), s.buffers, prev_Q, params_, axis);
    s.R_tilde = cov.R_tilde;
    s.Q_tilde = exchange ? prev_Q : cov.Q_tilde;
    ekf_axis_step(s, z, gait_.dt, params_.transition);
  }

  // Acceleration input for the next transition.
  const double pend = gait_.hlip_accel_gain();
  const Vec3 p_rel = pre.p_check - f.stance_foot;
  const Vec3 p_des(f.hlip_p(0), f.hlip_p(1), gait_.h0);
  const Vec3 v_des(f.hlip_v(0), f.hlip_v(1), 0.0);
  const AccelerationFusion acc =
      fuse_acceleration(f.a_fp, p_rel, pre.v_check, p_des, v_des, pend, params_.tau_a,
                        params_.kernel_weight_pos, params_.kernel_weight_vel);
  const Vec3 acc_var = fused_acceleration_variance(acc, variances0_.sigma2_afp, pre.sigma2_pos, pend);

  // Sensor variance refresh from the posterior residuals.
  for (int i = 0; i < 3; ++i) {
    FilterAxisState& s = axes_[i];
    s.accel = acc.a_check(i);
    s.accel_variance = acc_var(i);
    s.buffers.e_jc.push(Vec2(f.p_jc(i), f.v_jc(i)) - s.x);
    s.buffers.e_imu.push(Vec2(f.p_imu(i), f.v_imu(i)) - s.x);
    if (s.buffers.e_jc.full()) {
      const VarianceRefresh jc = update_sensor_variances(
          s.buffers.e_jc, Vec2(sensor_vars_.sigma2_posJC(i), sensor_vars_.sigma2_velJC(i)),
          params_.floor);
      const VarianceRefresh imu = update_sensor_variances(
          s.buffers.e_imu, Vec2(sensor_vars_.sigma2_posimu(i), sensor_vars_.sigma2_velimu(i)),
          params_.floor);
      sensor_vars_.sigma2_posJC(i) = jc.variance(0);
      sensor_vars_.sigma2_velJC(i) = jc.variance(1);
      sensor_vars_.sigma2_posimu(i) = imu.variance(0);
      sensor_vars_.sigma2_velimu(i) = imu.variance(1);
    }
  }

  prev_time_in_step_ = f.time_in_step;
  started_ = true;

  BodyEstimate est;
  est.t = f.t;
  fill_estimate(est, axes_);
  est.accel_gain = acc.gain;
  return est;
}

// ---------------------------------------------------------------------------
// Baselines

AdaptiveParams BaselineEstimator::aekf_params(int n_res, double q_rate) {
  AdaptiveParams p;
  p.alpha = Vec6::Zero();
  p.beta0 = Vec6::Zero();
  p.beta1 = Vec6::Constant(q_rate);
  p.beta2 = Vec6::Constant(1.0 - q_rate);
  p.aekf_q_rate = q_rate;
  p.n_res = n_res;
  return p;
}

BaselineEstimator::BaselineEstimator(BaselineKind kind, const GaitConfig& gait,
                                     const NoiseSchedule& schedule,
                                     const MeasurementVariances& variances, int n_res,
                                     TransitionModel transition, double q_rate)
    : kind_(kind), gait_(gait), params_(aekf_params(n_res, q_rate)) {
  gait_.validate();
  variances.validate();
  params_.transition = transition;
  params_.validate();
  R_ = (variances.sigma2_JC0 + variances.sigma2_imu0) / 4.0;
  Q_ = schedule.components.empty() ? Vec6::Constant(kVarianceFloor) : schedule.time_average();
  sigma2_afp_ = variances.sigma2_afp;
  for (auto& a : axes_) a.buffers = ResidualBuffers(static_cast<std::size_t>(n_res));
}

BodyEstimate BaselineEstimator::step(const SensorFrame& f) {
  const Vec3 p_avg = 0.5 * (f.p_jc + f.p_imu);
  const Vec3 v_avg = 0.5 * (f.v_jc + f.v_imu);
  for (int i = 0; i < 3; ++i) {
    FilterAxisState& s = axes_[i];
    const Mat2 R = diag_of(R_, i);
    const Mat2 Q = diag_of(Q_, i);
    const Vec2 z(p_avg(i), v_avg(i));
    if (!s.initialized) {
      s.R_tilde = R;
      s.Q_tilde = Q;
      s.x = z;
      s.P = R;
      s.initialized = true;
    } else {
      if (kind_ == BaselineKind::AEKF) {
        const CovarianceUpdate cov =
            update_covariances(R, Q, s.buffers, s.Q_tilde, params_, static_cast<Axis>(i));
        s.R_tilde = cov.R_tilde;
        s.Q_tilde = cov.Q_tilde;
      }
      ekf_axis_step(s, z, gait_.dt, params_.transition);
    }
    s.accel = f.a_fp(i);
    s.accel_variance = sigma2_afp_(i);
  }
  BodyEstimate est;
  est.t = f.t;
  fill_estimate(est, axes_);
  return est;
}

// ---------------------------------------------------------------------------

std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Proposed: return "proposed";
    case EstimatorKind::EKF: return "EKF";
    case EstimatorKind::AEKF: return "AEKF";
  }
  return "?";
}

EstimatorKind estimator_from_string(std::string_view s) {
  if (s == "proposed") return EstimatorKind::Proposed;
  if (s == "EKF" || s == "ekf") return EstimatorKind::EKF;
  if (s == "AEKF" || s == "aekf") return EstimatorKind::AEKF;
  throw ConfigError("unknown estimator '" + std::string(s) + "'");
}

std::unique_ptr<Estimator> make_estimator(EstimatorKind kind, const GaitConfig& gait,
                                          const AdaptiveParams& params,
                                          const NoiseSchedule& schedule,
                                          const MeasurementVariances& variances) {
  switch (kind) {
    case EstimatorKind::Proposed:
      return std::make_unique<HierarchicalEstimator>(gait, params, schedule, variances);
    case EstimatorKind::EKF:
      return std::make_unique<BaselineEstimator>(BaselineKind::EKF, gait, schedule, variances,
                                                 params.n_res, params.transition);
    case EstimatorKind::AEKF:
      return std::make_unique<BaselineEstimator>(BaselineKind::AEKF, gait, schedule, variances,
                                                 params.n_res, params.transition,
                                                 params.aekf_q_rate);
  }
  throw ConfigError("unknown estimator");
}

}  // namespace gaitd
