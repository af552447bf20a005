// File formats: JSON configs and schedules, CSV logs, estimates and error samples.
#pragma once

#include "gaitd/esvc_contact.hpp"
#include "gaitd/gait_sim.hpp"
#include "gaitd/harness.hpp"
#include "gaitd/noise_regression.hpp"
#include "gaitd/post_estimator.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace gaitd {

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Schedule JSON: array of {axis, quantity, segments:[{t0,t1,a1,a2,a3,a4}], floor}.
std::string schedule_to_json(const NoiseSchedule& schedule);
NoiseSchedule schedule_from_json(const std::string& text);

std::string variances_to_json(const MeasurementVariances& v);
MeasurementVariances variances_from_json(const std::string& text);

// Profile JSON: {segments:[{a,b,theta0,theta1,cx,cz}], roll_min, roll_max}.
std::string profile_to_json(const EsvcProfile& profile);
EsvcProfile profile_from_json(const std::string& text);

// Parameter JSON: {alpha:[6], beta0:[6], beta1:[6], beta2:[6], tau_a, n_res, transition}.
std::string params_to_json(const AdaptiveParams& p);
AdaptiveParams params_from_json(const std::string& text);

std::string scenario_to_json(const GaitScenario& sc);
/// Missing fields keep the values of `base`.
GaitScenario scenario_from_json(const std::string& text,
                                const GaitScenario& base = marking_time_scenario(20, 1));

/// Experiment config; relative schedule/variance/profile paths resolve
/// against `base_dir`.
ExperimentConfig experiment_from_json(const std::string& text,
                                      const std::filesystem::path& base_dir = ".");

// Log CSV: t,support,time_in_step,pjx..vjz,pix..viz,afx,afy,afz,hpx,hpy,hvx,hvy,sfx,sfy
std::string log_to_csv(const SensorLog& log);
SensorLog log_from_csv(const std::string& text, double dt = 1e-3);
// Truth CSV: t,px,py,pz,vx,vy,vz,ax,ay,az
std::string truth_to_csv(const SensorLog& log);
std::vector<TruthSample> truth_from_csv(const std::string& text);

/// Error samples CSV (time_s,trial_id,axis,quantity,error), one series per
/// (axis, quantity) present in the file.
std::vector<ErrorSampleSeries> error_samples_from_csv(const std::string& text,
                                                      double step_duration_s);

/// Estimate CSV: t,axis,p_hat,v_hat,P11,P22,Ka,Rtilde11,Rtilde22,Qtilde11,Qtilde22
std::string estimates_to_csv(const std::vector<BodyEstimate>& estimates);

}  // namespace gaitd
