// HLIP walking template and a sensor-level simulator of a biped CoM.
//
// The simulator stands in for the robot: it integrates the CoM under
// pendulum dynamics with scheduled process noise, places feet with a
// step-to-step controller, and synthesizes the IMU and joint-kinematics
// streams (the latter routed through the ESVC rollover transform).
#pragma once

#include "gaitd/esvc_contact.hpp"
#include "gaitd/noise_regression.hpp"
#include "gaitd/types.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

namespace gaitd {

enum class OrbitKind { P1Sagittal, P2Lateral };
enum class Support { Left = 0, Right = 1 };

std::string_view to_string(Support s);

struct GaitConfig {
  double T_ssp = 0.42;
  double T_dsp = 0.0;
  double h0 = 0.6;
  /// Lateral step placed during left support [m].
  double step_length_nominal = -0.303;
  double g = 9.81;
  double dt = 1e-3;
  /// Hip-to-contact distance used to derive foot roll from the CoM offset [m].
  double lever_arm = 0.55;
  double roll_ratio = 1.0;
  /// Largest foot-placement correction away from the orbit step [m].
  double max_step_correction = 0.2;
  /// a_hlip = (g/h0) p when on, p/h0 when off.
  bool hlip_accel_gravity = true;

  double lambda() const;
  /// Pendulum gain used by the acceleration model (lambda^2 or 1/h0).
  double hlip_accel_gain() const;
  int ticks_per_step() const;
  void validate() const;
};

/// Pre-impact state (offset from stance foot, velocity) per support phase.
struct OrbitSpec {
  OrbitKind kind = OrbitKind::P2Lateral;
  double v_cmd = 0.0;
  double lambda = 0.0;
  std::array<Vec2, 2> pre_impact{Vec2::Zero(), Vec2::Zero()};
  /// Step placed at the end of each phase, relative to the stance foot.
  std::array<double, 2> step_length{0.0, 0.0};

  /// Desired (offset, velocity) at time t into a step of `phase`.
  Vec2 desired(Support phase, double t) const;
};

/// Step-to-step map of the pre-impact state: X+ = A (X - e1 u).
Mat2 s2s_matrix(const GaitConfig& gait);
/// Deadbeat feedback gain on the pre-impact error.
Vec2 deadbeat_gain(const GaitConfig& gait);
OrbitSpec hlip_orbit(const GaitConfig& gait, OrbitKind kind, double v_cmd);

struct VelocityCommand {
  int step = 0;
  double velocity = 0.0;  ///< lateral commanded average velocity [m/s]
};

struct SensorNoiseModel {
  MeasurementVariances measurement;
  /// Random-walk intensity of the IMU position drift [m/sqrt(s)].
  double imu_drift = 5e-5;
  /// Joint-stream vibration after large foot-placement corrections:
  /// kappa = min(vibration_max, 1 + vibration_gain (|du| / vibration_scale)^2),
  /// applied as a standard-deviation factor for the following step.
  double vibration_gain = 0.0;
  double vibration_max = 8.0;
  double vibration_scale = 0.05;
  /// Whether the foot-mounted accelerometer shakes along with the joints.
  bool vibration_afp = true;
  /// Flip and shrink lateral velocity at support exchange.
  bool premature_contact = false;
  double premature_ratio = 0.2;
};

enum class ScenarioKind { Walking, FixedPointTracking };

struct GaitScenario {
  GaitConfig gait;
  ScenarioKind kind = ScenarioKind::Walking;
  std::vector<VelocityCommand> velocity_profile{{0, 0.0}};
  int n_steps = 20;
  std::uint64_t seed = 1;
  SensorNoiseModel noise;
  NoiseSchedule process_schedule;
  ContactMode esvc_mode = ContactMode::Exact;
  EsvcProfile profile = EsvcProfile::default_profile();
  /// Length of a fixed-point tracking trial [s].
  double tracking_duration = 2.0;

  double velocity_at(int step) const;
  void validate() const;
};

struct SensorFrame {
  double t = 0.0;
  Support support = Support::Left;
  int step = 0;
  double time_in_step = 0.0;
  Vec3 p_jc = Vec3::Zero(), v_jc = Vec3::Zero();
  Vec3 p_imu = Vec3::Zero(), v_imu = Vec3::Zero();
  Vec3 a_fp = Vec3::Zero();
  /// Desired lateral-plane state relative to the stance foot, (x, y).
  Vec2 hlip_p = Vec2::Zero(), hlip_v = Vec2::Zero();
  Vec3 stance_foot = Vec3::Zero();
};

struct TruthSample {
  double t = 0.0;
  Vec3 p = Vec3::Zero(), v = Vec3::Zero(), a = Vec3::Zero();
};

struct StepRecord {
  int index = 0;
  Support support = Support::Left;
  double v_cmd = 0.0;
  Vec2 pre_impact_truth = Vec2::Zero();  ///< lateral (offset, velocity)
  Vec2 pre_impact_target = Vec2::Zero();
  double step = 0.0;  ///< lateral placement relative to the old stance foot
  double vibration = 1.0;  ///< factor applied during this step
};

struct SensorLog {
  double dt = 1e-3;
  int ticks_per_step = 0;
  std::vector<SensorFrame> ticks;
  std::vector<TruthSample> truth;
  std::vector<StepRecord> steps;
  /// The observer threw DivergenceError; the log stops at that tick.
  bool diverged = false;
  /// The CoM left the 1 m reach of the stance foot; the log stops there.
  bool fell = false;
};

/// Estimated world-frame CoM (p, v) given the frame just emitted.
struct StateFeedback {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};
using StateObserver = std::function<StateFeedback(const SensorFrame&)>;

/// Walk with foot placement driven by the true state.
SensorLog simulate_walk(const GaitScenario& scenario);
/// Walk with foot placement driven by `observer`, called once per tick.
SensorLog simulate_walk(const GaitScenario& scenario, const StateObserver& observer);

/// Support-exchange times (end of each completed step).
std::vector<double> step_events(const SensorLog& log);

/// C1 piecewise-cubic process-noise schedule peaking around support exchange.
NoiseSchedule default_process_schedule(double step_duration = 0.42);

/// Scenario presets.
GaitScenario marking_time_scenario(int n_steps, std::uint64_t seed);
GaitScenario fixed_point_tracking_scenario(std::uint64_t seed);
/// 0.1 m/s for 8 steps, marking time for 10, then 0.2 m/s for 10.
GaitScenario speed_change_scenario(std::uint64_t seed);

}  // namespace gaitd
