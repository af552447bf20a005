#include "gaitd/gait_sim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

namespace gaitd {

std::string_view to_string(Support s) { return s == Support::Left ? "LSP" : "RSP"; }

// ---------------------------------------------------------------------------
// Gait configuration and orbits

double GaitConfig::lambda() const { return std::sqrt(g / h0); }

double GaitConfig::hlip_accel_gain() const { return hlip_accel_gravity ? g / h0 : 1.0 / h0; }

int GaitConfig::ticks_per_step() const {
  return static_cast<int>(std::lround((T_ssp + T_dsp) / dt));
}

void GaitConfig::validate() const {
  if (!(T_ssp > 0.0)) throw ConfigError("T_ssp must be positive");
  if (T_dsp != 0.0) throw ConfigError("only instantaneous support exchange (T_dsp = 0) is supported");
  if (!(h0 > 0.0)) throw ConfigError("h0 must be positive");
  if (!(g > 0.0)) throw ConfigError("gravity must be positive");
  if (!(dt > 0.0) || dt > T_ssp) throw ConfigError("dt must be in (0, T_ssp]");
  if (std::abs(ticks_per_step() * dt - T_ssp) > 1e-9) {
    throw ConfigError("T_ssp must be a whole number of ticks");
  }
  if (!(lever_arm > 0.0)) throw ConfigError("lever arm must be positive");
  if (!(max_step_correction > 0.0)) throw ConfigError("max step correction must be positive");
}

Mat2 s2s_matrix(const GaitConfig& gait) {
  const double l = gait.lambda();
  const double c = std::cosh(l * gait.T_ssp);
  const double s = std::sinh(l * gait.T_ssp);
  Mat2 A;
  A << c, s / l, l * s, c;
  return A;
}

Vec2 deadbeat_gain(const GaitConfig& gait) {
  const double l = gait.lambda();
  return {1.0, 1.0 / (l * std::tanh(l * gait.T_ssp))};
}

OrbitSpec hlip_orbit(const GaitConfig& gait, OrbitKind kind, double v_cmd) {
  gait.validate();
  if (!std::isfinite(v_cmd)) throw ConfigError("commanded velocity is not finite");
  const double stride = v_cmd * gait.T_ssp;
  const Mat2 A = s2s_matrix(gait);
  const Vec2 Ae1 = A.col(0);

  OrbitSpec out;
  out.kind = kind;
  out.v_cmd = v_cmd;
  out.lambda = gait.lambda();
  if (kind == OrbitKind::P1Sagittal) {
    if (std::abs(stride) > 2.0 * std::abs(gait.step_length_nominal)) {
      throw ConfigError("commanded sagittal velocity exceeds the step length limit");
    }
    const Vec2 x = (Mat2::Identity() - A).partialPivLu().solve(-Ae1 * stride);
    out.pre_impact = {x, x};
    out.step_length = {stride, stride};
    return out;
  }
  if (std::abs(stride) >= std::abs(gait.step_length_nominal)) {
    throw ConfigError("commanded lateral velocity would cross the feet");
  }
  const double u_left = gait.step_length_nominal + stride;
  const double u_right = -gait.step_length_nominal + stride;
  const Vec2 x_left =
      (Mat2::Identity() - A * A).partialPivLu().solve(-A * Ae1 * u_left - Ae1 * u_right);
  const Vec2 x_right = A * x_left - Ae1 * u_left;
  out.pre_impact = {x_left, x_right};
  out.step_length = {u_left, u_right};
  return out;
}

Vec2 OrbitSpec::desired(Support phase, double t) const {
  const int other = phase == Support::Left ? 1 : 0;
  const double p0 = pre_impact[other](0) - step_length[other];
  const double v0 = pre_impact[other](1);
  const double c = std::cosh(lambda * t), s = std::sinh(lambda * t);
  return {p0 * c + v0 / lambda * s, p0 * lambda * s + v0 * c};
}

// ---------------------------------------------------------------------------
// Scenario

double GaitScenario::velocity_at(int step) const {
  double v = 0.0;
  for (const auto& c : velocity_profile) {
    if (c.step <= step) v = c.velocity;
  }
  return v;
}

void GaitScenario::validate() const {
  gait.validate();
  // Zero is allowed here: noise-free logs are a valid simulator setting.
  const auto& m = noise.measurement;
  if ((m.sigma2_imu0.array() < 0.0).any() || (m.sigma2_JC0.array() < 0.0).any() ||
      (m.sigma2_afp.array() < 0.0).any() || !m.sigma2_imu0.allFinite() ||
      !m.sigma2_JC0.allFinite() || !m.sigma2_afp.allFinite()) {
    throw ConfigError("sensor noise variances must be finite and non-negative");
  }
  if (noise.imu_drift < 0.0) throw ConfigError("IMU drift intensity must be non-negative");
  if (noise.vibration_gain < 0.0 || noise.vibration_max < 1.0 || !(noise.vibration_scale > 0.0)) {
    throw ConfigError("invalid vibration model");
  }
  if (kind == ScenarioKind::FixedPointTracking) {
    if (!(tracking_duration > 0.0)) throw ConfigError("tracking duration must be positive");
    return;
  }
  if (n_steps < 1) throw ConfigError("scenario needs at least one step");
  for (std::size_t i = 1; i < velocity_profile.size(); ++i) {
    if (velocity_profile[i].step <= velocity_profile[i - 1].step) {
      throw IndexedError("velocity profile steps must be ascending", i);
    }
  }
  if (!process_schedule.components.empty() &&
      std::abs(process_schedule.step_duration() - gait.T_ssp) > 1e-9) {
    throw ConfigError("process schedule duration does not match the step duration");
  }
  for (const auto& c : velocity_profile) hlip_orbit(gait, OrbitKind::P2Lateral, c.velocity);
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint32_t stream) : dist_(0.0, 1.0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    engine_.seed(seq);
  }
  double operator()() { return dist_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> dist_;
};

struct NoiseStreams {
  explicit NoiseStreams(std::uint64_t seed)
      : process(seed, 1), jc(seed, 2), imu(seed, 3), drift(seed, 4), afp(seed, 5) {}
  NormalStream process, jc, imu, drift, afp;
};

Vec6 sqrt_vec(const Vec6& v) { return v.cwiseMax(0.0).cwiseSqrt(); }

/// Synthesizes the two sensory streams from a true state.
class SensorModel {
 public:
  SensorModel(const GaitScenario& sc, NoiseStreams& rng)
      : sc_(sc), rng_(rng),
        jc_sd_(sqrt_vec(sc.noise.measurement.sigma2_JC0)),
        imu_sd_(sqrt_vec(sc.noise.measurement.sigma2_imu0)),
        afp_sd_(sc.noise.measurement.sigma2_afp.cwiseMax(0.0).cwiseSqrt()) {}

  void emit(SensorFrame& f, const Vec3& p, const Vec3& v, const Vec3& a, double kappa,
            bool rolling) {
    Vec6 n_jc, n_imu;
    Vec3 n_drift, n_afp;
    for (int i = 0; i < 6; ++i) n_jc(i) = rng_.jc();
    for (int i = 0; i < 6; ++i) n_imu(i) = rng_.imu();
    for (int i = 0; i < 3; ++i) n_drift(i) = rng_.drift();
    for (int i = 0; i < 3; ++i) n_afp(i) = rng_.afp();

    BodyState rel{p - f.stance_foot, v};
    if (rolling) rel = through_contact(rel);
    f.p_jc = f.stance_foot + rel.p + kappa * jc_sd_.head<3>().cwiseProduct(n_jc.head<3>());
    f.v_jc = rel.v + kappa * jc_sd_.tail<3>().cwiseProduct(n_jc.tail<3>());

    f.p_imu = p + drift_ + imu_sd_.head<3>().cwiseProduct(n_imu.head<3>());
    f.v_imu = v + imu_sd_.tail<3>().cwiseProduct(n_imu.tail<3>());
    drift_ += sc_.noise.imu_drift * std::sqrt(sc_.gait.dt) * n_drift;

    f.a_fp = a + (sc_.noise.vibration_afp ? kappa : 1.0) * afp_sd_.cwiseProduct(n_afp);
  }

 private:
  // Joint-space state of the true motion, mapped back with the configured
  // contact model. Exact mode is an identity round trip.
  BodyState through_contact(const BodyState& rel) const {
    const auto& g = sc_.gait;
    const auto& prof = sc_.profile;
    const double raw = g.roll_ratio * std::atan(rel.p(1) / g.lever_arm);
    FootState foot;
    const double lo = prof.roll_min() * (1.0 - 1e-9), hi = prof.roll_max() * (1.0 - 1e-9);
    foot.roll = std::clamp(raw, lo, hi);
    if (foot.roll == raw) {
      foot.roll_rate = g.roll_ratio * g.lever_arm * rel.v(1) /
                       (g.lever_arm * g.lever_arm + rel.p(1) * rel.p(1));
    }
    const BodyState internal =
        joints_from_body_state(rel, contact_transform(prof, foot, ContactMode::Exact));
    if (sc_.esvc_mode == ContactMode::Exact) return rel;
    return body_state_from_joints(internal, contact_transform(prof, foot, sc_.esvc_mode));
  }

  const GaitScenario& sc_;
  NoiseStreams& rng_;
  Vec6 jc_sd_, imu_sd_;
  Vec3 afp_sd_;
  Vec3 drift_ = Vec3::Zero();
};

SensorLog simulate_tracking(const GaitScenario& sc) {
  NoiseStreams rng(sc.seed);
  SensorModel sensors(sc, rng);
  SensorLog log;
  log.dt = sc.gait.dt;
  const int n = static_cast<int>(std::lround(sc.tracking_duration / sc.gait.dt));
  log.ticks_per_step = n;
  // Figure-eight in the (y, z) plane while standing.
  const double amp_y = 0.03, amp_z = 0.02, w = 2.0 * std::numbers::pi / 2.0;
  for (int i = 0; i < n; ++i) {
    const double t = i * sc.gait.dt;
    const double s1 = std::sin(w * t), c1 = std::cos(w * t);
    const double s2 = std::sin(2 * w * t), c2 = std::cos(2 * w * t);
    const Vec3 p(0.0, amp_y * s1, sc.gait.h0 + 0.5 * amp_z * s2);
    const Vec3 v(0.0, amp_y * w * c1, amp_z * w * c2);
    const Vec3 a(0.0, -amp_y * w * w * s1, -2.0 * amp_z * w * w * s2);
    log.truth.push_back({t, p, v, a});
    SensorFrame f;
    f.t = t;
    f.time_in_step = t;
    f.hlip_p = p.head<2>();
    f.hlip_v = v.head<2>();
    sensors.emit(f, p, v, a, 1.0, false);
    log.ticks.push_back(f);
  }
  return log;
}

SensorLog simulate(const GaitScenario& sc, const StateObserver* observer) {
  sc.validate();
  if (sc.kind == ScenarioKind::FixedPointTracking) return simulate_tracking(sc);

  const GaitConfig& g = sc.gait;
  const double dt = g.dt;
  const int N = g.ticks_per_step();
  const double lam2 = g.lambda() * g.lambda();
  const Vec2 K = deadbeat_gain(g);
  const OrbitSpec sagittal = hlip_orbit(g, OrbitKind::P1Sagittal, 0.0);
  const bool has_process = !sc.process_schedule.components.empty();

  NoiseStreams rng(sc.seed);
  SensorModel sensors(sc, rng);

  SensorLog log;
  log.dt = dt;
  log.ticks_per_step = N;
  log.ticks.reserve(static_cast<std::size_t>(sc.n_steps) * N);
  log.truth.reserve(static_cast<std::size_t>(sc.n_steps) * N);

  // Start on the commanded orbit at the beginning of a left-support step.
  OrbitSpec lateral = hlip_orbit(g, OrbitKind::P2Lateral, sc.velocity_at(0));
  Vec3 foot = Vec3::Zero();
  const Vec2 y0 = lateral.desired(Support::Left, 0.0);
  const Vec2 x0 = sagittal.desired(Support::Left, 0.0);
  Vec3 p(x0(0), y0(0), g.h0);
  Vec3 v(x0(1), y0(1), 0.0);
  double kappa = 1.0;

  for (int k = 0; k < sc.n_steps; ++k) {
    const Support phase = k % 2 == 0 ? Support::Left : Support::Right;
    const int ph = static_cast<int>(phase);
    lateral = hlip_orbit(g, OrbitKind::P2Lateral, sc.velocity_at(k));
    StepRecord rec;
    rec.index = k;
    rec.support = phase;
    rec.v_cmd = lateral.v_cmd;
    rec.pre_impact_target = lateral.pre_impact[ph];
    rec.vibration = kappa;

    Vec2 est_x = Vec2::Zero(), est_y = Vec2::Zero();
    for (int j = 0; j < N; ++j) {
      const double tis = j * dt;
      const Vec3 rel = p - foot;
      const Vec3 a(lam2 * rel(0), lam2 * rel(1), 0.0);
      const double t = (static_cast<double>(k) * N + j) * dt;
      log.truth.push_back({t, p, v, a});

      SensorFrame f;
      f.t = t;
      f.support = phase;
      f.step = k;
      f.time_in_step = tis;
      f.stance_foot = foot;
      const Vec2 dy = lateral.desired(phase, tis);
      const Vec2 dx = sagittal.desired(phase, tis);
      f.hlip_p = Vec2(dx(0), dy(0));
      f.hlip_v = Vec2(dx(1), dy(1));
      sensors.emit(f, p, v, a, kappa, true);
      log.ticks.push_back(f);

      if (j == N - 1) {
        // Pre-impact estimate: last feedback pushed one tick through the pendulum.
        StateFeedback fb{p, v};
        if (observer) {
          try {
            fb = (*observer)(f);
          } catch (const DivergenceError&) {
            log.diverged = true;
            return log;
          }
        }
        const Vec3 r = fb.p - foot;
        const Vec3 acc(lam2 * r(0), lam2 * r(1), 0.0);
        const Vec3 pp = fb.p + fb.v * dt + 0.5 * acc * dt * dt - foot;
        const Vec3 vp = fb.v + acc * dt;
        est_x = Vec2(pp(0), vp(0));
        est_y = Vec2(pp(1), vp(1));
      } else if (observer) {
        try {
          (*observer)(f);
        } catch (const DivergenceError&) {
          log.diverged = true;
          return log;
        }
      }

      p += v * dt + 0.5 * a * dt * dt;
      v += a * dt;
      if (has_process) {
        const Vec6 sd = sqrt_vec(evaluate_schedule(sc.process_schedule, tis));
        for (int i = 0; i < 3; ++i) p(i) += sd(i) * rng.process();
        for (int i = 0; i < 3; ++i) v(i) += sd(3 + i) * rng.process();
      } else {
        for (int i = 0; i < 6; ++i) rng.process();
      }
    }

    // Support exchange: place the swing foot for the next commanded orbit.
    const OrbitSpec next = hlip_orbit(g, OrbitKind::P2Lateral, sc.velocity_at(k + 1));
    const Vec3 rel = p - foot;
    rec.pre_impact_truth = Vec2(rel(1), v(1));
    const double corr_y = std::clamp(K.dot(est_y - next.pre_impact[ph]), -g.max_step_correction,
                                     g.max_step_correction);
    const double corr_x = std::clamp(K.dot(est_x - sagittal.pre_impact[ph]),
                                     -g.max_step_correction, g.max_step_correction);
    rec.step = next.step_length[ph] + corr_y;
    foot += Vec3(sagittal.step_length[ph] + corr_x, rec.step, 0.0);
    kappa = std::min(sc.noise.vibration_max,
                     1.0 + sc.noise.vibration_gain * std::pow(corr_y / sc.noise.vibration_scale, 2));
    if (sc.noise.premature_contact) v(1) = -sc.noise.premature_ratio * v(1);
    log.steps.push_back(rec);

    if (!p.allFinite() || (p - foot).head<2>().norm() > 1.0) {
      log.fell = true;
      return log;
    }
  }
  return log;
}

}  // namespace

SensorLog simulate_walk(const GaitScenario& scenario) { return simulate(scenario, nullptr); }

SensorLog simulate_walk(const GaitScenario& scenario, const StateObserver& observer) {
  return simulate(scenario, observer ? &observer : nullptr);
}

std::vector<double> step_events(const SensorLog& log) {
  std::vector<double> out;
  for (std::size_t i = 1; i < log.ticks.size(); ++i) {
    if (log.ticks[i].step != log.ticks[i - 1].step) out.push_back(log.ticks[i].t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Defaults

NoiseSchedule default_process_schedule(double step_duration) {
  // Smooth bump around both ends of the step (impact), sampled as a C1
  // Hermite cubic through the bump's value and slope at each 0.05 s knot.
  struct Shape {
    double base;
    double bump;
  };
  const std::map<std::pair<Axis, Quantity>, Shape> shapes{
      {{Axis::X, Quantity::Position}, {4e-10, 1.5}}, {{Axis::Y, Quantity::Position}, {4e-10, 1.5}},
      {{Axis::Z, Quantity::Position}, {1e-10, 1.0}}, {{Axis::X, Quantity::Velocity}, {1e-7, 1.5}},
      {{Axis::Y, Quantity::Velocity}, {1e-7, 1.5}},  {{Axis::Z, Quantity::Velocity}, {1e-8, 1.0}}};
  constexpr double kWidth = 0.05;
  const Segmentation seg = Segmentation::for_step(step_duration);

  NoiseSchedule out;
  for (const auto& [key, shape] : shapes) {
    auto value = [&](double t) {
      const double u0 = t / kWidth, u1 = (step_duration - t) / kWidth;
      return shape.base * (1.0 + shape.bump * (std::exp(-u0 * u0) + std::exp(-u1 * u1)));
    };
    auto slope = [&](double t) {
      const double u0 = t / kWidth, u1 = (step_duration - t) / kWidth;
      return shape.base * shape.bump * (-2.0 * u0 * std::exp(-u0 * u0) + 2.0 * u1 * std::exp(-u1 * u1)) /
             kWidth;
    };
    CubicSchedule cs;
    for (std::size_t j = 0; j < seg.segment_count(); ++j) {
      const double t0 = seg.boundaries_s[j], t1 = seg.boundaries_s[j + 1];
      cs.segments.push_back(hermite_segment(t0, t1, value(t0), value(t1), slope(t0), slope(t1)));
    }
    out.components[key] = cs;
  }
  return out;
}

namespace {

SensorNoiseModel default_noise() {
  SensorNoiseModel n;
  n.measurement.sigma2_JC0 << 1e-6, 1e-6, 1e-6, 4e-4, 4e-4, 4e-4;
  n.measurement.sigma2_imu0 << 1e-6, 1e-6, 1e-6, 4e-4, 4e-4, 4e-4;
  n.measurement.sigma2_afp = Vec3::Constant(1e-2);
  return n;
}

}  // namespace

GaitScenario marking_time_scenario(int n_steps, std::uint64_t seed) {
  GaitScenario sc;
  sc.n_steps = n_steps;
  sc.seed = seed;
  sc.noise = default_noise();
  sc.process_schedule = default_process_schedule(sc.gait.T_ssp);
  sc.esvc_mode = ContactMode::Approx;
  return sc;
}

GaitScenario fixed_point_tracking_scenario(std::uint64_t seed) {
  GaitScenario sc;
  sc.kind = ScenarioKind::FixedPointTracking;
  sc.seed = seed;
  sc.noise = default_noise();
  return sc;
}

GaitScenario speed_change_scenario(std::uint64_t seed) {
  GaitScenario sc = marking_time_scenario(28, seed);
  sc.velocity_profile = {{0, 0.1}, {8, 0.0}, {18, 0.2}};
  sc.noise.vibration_gain = 16.0;
  sc.noise.vibration_max = 60.0;
  sc.noise.vibration_afp = false;
  return sc;
}

}  // namespace gaitd
