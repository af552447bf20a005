// Experiment driver: noise characterization runs, estimator benchmarks over
// seeded Monte-Carlo scenarios, metrics and report output.
#pragma once

#include "gaitd/gait_sim.hpp"
#include "gaitd/noise_regression.hpp"
#include "gaitd/post_estimator.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gaitd {

struct CharacterizationConfig {
  int fp_trials = 10;
  int marking_trials = 16;
  /// Steps pooled per marking-time trial, after `skip_steps` warm-up steps.
  int steps_per_trial = 240;
  int skip_steps = 1;
  double bin_s = 0.01;
  /// Process-noise windows: spacing and knots (dt-wide bins) per window.
  double window_s = 0.01;
  int knots_per_window = 10;
  std::uint64_t seed = 100000;

  void validate() const;
};

struct ConvergenceCriterion {
  double band = 0.1;  ///< fraction of the orbit amplitude
  int dwell = 2;      ///< consecutive in-band steps
};

struct ExperimentConfig {
  GaitScenario scenario = speed_change_scenario(1);
  std::vector<EstimatorKind> estimators{EstimatorKind::Proposed, EstimatorKind::AEKF,
                                        EstimatorKind::EKF};
  int n_seeds = 40;
  std::uint64_t seed = 1;
  std::vector<std::string> metrics{"rmse", "nees", "convergence_steps"};
  std::string output_dir = "out";
  AdaptiveParams params;
  CharacterizationConfig characterization;
  ConvergenceCriterion convergence;
  /// Ticks excluded from RMSE and NEES at the start of each run.
  int warmup_ticks = 420;
  /// Characterized inputs; filled by run_characterization when absent.
  std::optional<MeasurementVariances> variances;
  std::optional<NoiseSchedule> schedule;
  unsigned threads = 0;

  void validate() const;
  bool wants(const std::string& metric) const;
};

struct CharacterizationResult {
  MeasurementVariances variances;
  NoiseSchedule schedule;
};

/// Raw error-sample series for the process noise of one set of trials:
/// one-step truth residuals x[i+1] - (F x[i] + B a[i]) against time in step.
std::vector<ErrorSampleSeries> process_error_samples(const std::vector<SensorLog>& trials,
                                                     int skip_steps, int steps_per_trial);

CharacterizationResult run_characterization(const ExperimentConfig& cfg);

/// Metrics of one estimator on one seed, in a stable order.
struct RunRecord {
  std::string estimator;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> values;

  std::optional<double> get(const std::string& metric) const;
};

struct Summary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

struct BenchmarkReport {
  std::vector<RunRecord> runs;
  bool any_diverged() const;
  std::vector<std::string> estimators() const;
  /// Per-seed values of a metric for one estimator, in seed order.
  std::vector<double> series(const std::string& estimator, const std::string& metric) const;
  Summary summarize(const std::string& estimator, const std::string& metric) const;
};

/// Steps from a velocity change until the pre-impact state enters the band of
/// the new orbit and stays for `dwell` steps (1-based). Empty when it never does.
std::vector<std::optional<int>> convergence_steps(const SensorLog& log, const GaitScenario& sc,
                                                  const ConvergenceCriterion& crit);

BenchmarkReport run_benchmark(const ExperimentConfig& cfg);

enum class ReportFormat { Json, Csv };

/// Writes report.json or report.csv under `dir`; returns the file path.
std::filesystem::path emit_report(const BenchmarkReport& report, ReportFormat format,
                                  const std::filesystem::path& dir);
BenchmarkReport read_report(const std::filesystem::path& file);

std::string report_to_json(const BenchmarkReport& report);
std::string report_to_csv(const BenchmarkReport& report);
BenchmarkReport report_from_json(const std::string& text);
BenchmarkReport report_from_csv(const std::string& text);

/// Median of a sample (linear interpolation between order statistics).
double quantile(std::vector<double> values, double q);

}  // namespace gaitd
