// gaitd: noise characterization, estimator benchmarks and log replay.
#include "gaitd/harness.hpp"
#include "gaitd/io.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace gaitd;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg = experiment_from_json(read_text(path), fs::path(path).parent_path());
  if (const char* env = std::getenv("GAITD_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("GAITD_SEED is not an unsigned integer: ") + env);
    }
    cfg.scenario.seed = cfg.seed;
  }
  return cfg;
}

int characterize(const std::string& config, const std::string& out) {
  const ExperimentConfig cfg = load_config(config);
  const CharacterizationResult res = run_characterization(cfg);
  write_text(fs::path(out) / "schedule.json", schedule_to_json(res.schedule));
  write_text(fs::path(out) / "variances.json", variances_to_json(res.variances));
  std::cout << "wrote " << (fs::path(out) / "schedule.json").string() << " and variances.json\n";
  return 0;
}

int bench(const std::string& config, const std::string& out_arg) {
  const ExperimentConfig cfg = load_config(config);
  const std::string out = out_arg.empty() ? cfg.output_dir : out_arg;
  const BenchmarkReport report = run_benchmark(cfg);
  emit_report(report, ReportFormat::Json, out);
  emit_report(report, ReportFormat::Csv, out);
  for (const auto& est : report.estimators()) {
    std::cout << est;
    for (const char* m : {"convergence_total", "rmse_py", "rmse_vy", "nees_y"}) {
      if (report.series(est, m).empty()) continue;
      std::cout << "  " << m << " median " << report.summarize(est, m).median;
    }
    std::cout << "\n";
  }
  if (report.any_diverged()) {
    std::cerr << "one or more runs diverged\n";
    return kExitDivergence;
  }
  return 0;
}

int replay(const std::string& log_path, const std::string& params_path,
           const std::string& schedule_path, const std::string& variances_path,
           const std::string& scenario_path, const std::string& estimator, const std::string& out) {
  const AdaptiveParams params = params_from_json(read_text(params_path));
  GaitScenario sc = marking_time_scenario(20, 1);
  if (!scenario_path.empty()) sc = scenario_from_json(read_text(scenario_path));
  const NoiseSchedule schedule = schedule_path.empty() ? sc.process_schedule
                                                       : schedule_from_json(read_text(schedule_path));
  const MeasurementVariances vars = variances_path.empty()
                                        ? sc.noise.measurement
                                        : variances_from_json(read_text(variances_path));
  const SensorLog log = log_from_csv(read_text(log_path), sc.gait.dt);
  auto est = make_estimator(estimator_from_string(estimator), sc.gait, params, schedule, vars);
  std::vector<BodyEstimate> estimates;
  estimates.reserve(log.ticks.size());
  for (const auto& f : log.ticks) estimates.push_back(est->step(f));
  const std::string csv = estimates_to_csv(estimates);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
  }
  return 0;
}

int simulate(const std::string& scenario_path, const std::string& out) {
  GaitScenario sc = marking_time_scenario(20, 1);
  if (!scenario_path.empty()) sc = scenario_from_json(read_text(scenario_path));
  if (const char* env = std::getenv("GAITD_SEED")) sc.seed = std::stoull(env);
  const SensorLog log = simulate_walk(sc);
  write_text(fs::path(out) / "log.csv", log_to_csv(log));
  write_text(fs::path(out) / "truth.csv", truth_to_csv(log));
  return log.diverged ? kExitDivergence : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical body-state estimation toolkit"};
  app.require_subcommand(1);

  std::string config, out, log, params, schedule, variances, scenario, estimator = "proposed";

  auto* c = app.add_subcommand("characterize", "Fit measurement variances and the process-noise schedule");
  c->add_option("--config", config, "Experiment JSON")->required();
  c->add_option("--out", out, "Output directory")->required();

  auto* b = app.add_subcommand("bench", "Run the estimator benchmark");
  b->add_option("--config", config, "Experiment JSON")->required();
  b->add_option("--out", out, "Output directory (defaults to output_dir in the config)");

  auto* r = app.add_subcommand("replay", "Run an estimator over a recorded log");
  r->add_option("--log", log, "Log CSV")->required();
  r->add_option("--params", params, "Adaptive parameter JSON")->required();
  r->add_option("--schedule", schedule, "Schedule JSON");
  r->add_option("--variances", variances, "Measurement variance JSON");
  r->add_option("--scenario", scenario, "Scenario JSON for gait constants");
  r->add_option("--estimator", estimator, "proposed | EKF | AEKF");
  r->add_option("--out", out, "Estimate CSV (stdout when omitted)");

  auto* s = app.add_subcommand("simulate", "Write a simulated log and its truth");
  s->add_option("--scenario", scenario, "Scenario JSON");
  s->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*c) return characterize(config, out);
    if (*b) return bench(config, out);
    if (*r) return replay(log, params, schedule, variances, scenario, estimator, out);
    if (*s) return simulate(scenario, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IndexedError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
