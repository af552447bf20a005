#include "gaitd/harness.hpp"

#include "json.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace gaitd {

using ordered_json = nlohmann::ordered_json;

void CharacterizationConfig::validate() const {
  if (fp_trials < 2) throw ConfigError("fixed-point tracking needs at least 2 trials");
  if (marking_trials < 2) throw ConfigError("marking-time characterization needs at least 2 trials");
  if (steps_per_trial < 1) throw ConfigError("steps_per_trial must be positive");
  if (skip_steps < 0) throw ConfigError("skip_steps must be non-negative");
  if (!(bin_s > 0.0)) throw ConfigError("bin width must be positive");
  if (!(window_s > 0.0)) throw ConfigError("window spacing must be positive");
  if (knots_per_window < 2) throw ConfigError("knots_per_window must be >= 2");
}

void ExperimentConfig::validate() const {
  scenario.validate();
  if (scenario.kind != ScenarioKind::Walking) throw ConfigError("benchmark scenario must be walking");
  if (estimators.empty()) throw ConfigError("at least one estimator is required");
  if (n_seeds < 1) throw ConfigError("n_seeds must be at least 1");
  for (const auto& m : metrics) {
    if (m != "rmse" && m != "nees" && m != "convergence_steps") {
      throw ConfigError("unknown metric '" + m + "'");
    }
  }
  params.validate();
  characterization.validate();
  if (!(convergence.band > 0.0) || convergence.dwell < 1) throw ConfigError("invalid convergence criterion");
  if (warmup_ticks < 0) throw ConfigError("warmup_ticks must be non-negative");
  if (variances) variances->validate();
  if (schedule && std::abs(schedule->step_duration() - scenario.gait.T_ssp) > 1e-9) {
    throw ConfigError("schedule duration does not match the scenario step");
  }
}

bool ExperimentConfig::wants(const std::string& metric) const {
  return std::find(metrics.begin(), metrics.end(), metric) != metrics.end();
}

namespace {

unsigned worker_count(unsigned requested, std::size_t jobs) {
  unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

/// Runs job(i) for i in [0, n) on a small pool; results land by index.
template <typename Job>
void parallel_for(std::size_t n, unsigned threads, const Job& job) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned w = worker_count(threads, n);
  for (unsigned k = 1; k < w; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double mean_bin_variance(const TrajectorySamples& truth, const TrajectorySamples& measured,
                         double bin_s) {
  const ErrorVarianceSeries s = compute_error_variance(truth, measured, bin_s);
  double sum = 0.0;
  for (double v : s.variance) sum += v;
  return sum / static_cast<double>(s.variance.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Characterization

std::vector<ErrorSampleSeries> process_error_samples(const std::vector<SensorLog>& trials,
                                                     int skip_steps, int steps_per_trial) {
  std::vector<ErrorSampleSeries> out;
  for (Axis axis : kAxes) {
    for (Quantity q : kQuantities) {
      ErrorSampleSeries s;
      s.axis = axis;
      s.quantity = q;
      out.push_back(s);
    }
  }
  for (std::size_t k = 0; k < trials.size(); ++k) {
    const SensorLog& log = trials[k];
    const double dt = log.dt;
    for (std::size_t i = 0; i + 1 < log.truth.size(); ++i) {
      const SensorFrame& f = log.ticks[i];
      if (f.step < skip_steps || f.step >= skip_steps + steps_per_trial) continue;
      const TruthSample& a = log.truth[i];
      const TruthSample& b = log.truth[i + 1];
      const Vec3 dp = b.p - (a.p + a.v * dt + 0.5 * a.a * dt * dt);
      const Vec3 dv = b.v - (a.v + a.a * dt);
      for (std::size_t c = 0; c < out.size(); ++c) {
        const int axis = static_cast<int>(out[c].axis);
        const double e = out[c].quantity == Quantity::Position ? dp(axis) : dv(axis);
        out[c].samples.push_back({f.time_in_step, static_cast<int>(k), e});
      }
    }
    if (!log.ticks_per_step) continue;
    for (auto& s : out) s.step_duration_s = log.ticks_per_step * dt;
  }
  return out;
}

CharacterizationResult run_characterization(const ExperimentConfig& cfg) {
  const CharacterizationConfig& cc = cfg.characterization;
  cc.validate();
  cfg.scenario.validate();

  // Fixed-point tracking while standing: constant measurement variances.
  std::vector<SensorLog> fp(static_cast<std::size_t>(cc.fp_trials));
  parallel_for(fp.size(), cfg.threads, [&](std::size_t i) {
    GaitScenario sc = fixed_point_tracking_scenario(cc.seed + i);
    sc.gait = cfg.scenario.gait;
    sc.noise = cfg.scenario.noise;
    sc.noise.vibration_gain = 0.0;
    fp[i] = simulate_walk(sc);
  });

  CharacterizationResult out;
  auto traces = [&](auto&& pick_truth, auto&& pick_meas) {
    TrajectorySamples truth, meas;
    for (std::size_t k = 0; k < fp.size(); ++k) {
      TrialTrace tt{static_cast<int>(k), {}, {}}, mt{static_cast<int>(k), {}, {}};
      for (std::size_t i = 0; i < fp[k].ticks.size(); ++i) {
        tt.time_s.push_back(fp[k].truth[i].t);
        mt.time_s.push_back(fp[k].ticks[i].t);
        tt.value.push_back(pick_truth(fp[k].truth[i]));
        mt.value.push_back(pick_meas(fp[k].ticks[i]));
      }
      truth.push_back(std::move(tt));
      meas.push_back(std::move(mt));
    }
    return mean_bin_variance(truth, meas, cc.bin_s);
  };
  for (int a = 0; a < 3; ++a) {
    auto tp = [a](const TruthSample& s) { return s.p(a); };
    auto tv = [a](const TruthSample& s) { return s.v(a); };
    out.variances.sigma2_JC0(a) = traces(tp, [a](const SensorFrame& f) { return f.p_jc(a); });
    out.variances.sigma2_JC0(3 + a) = traces(tv, [a](const SensorFrame& f) { return f.v_jc(a); });
    out.variances.sigma2_imu0(a) = traces(tp, [a](const SensorFrame& f) { return f.p_imu(a); });
    out.variances.sigma2_imu0(3 + a) = traces(tv, [a](const SensorFrame& f) { return f.v_imu(a); });
    out.variances.sigma2_afp(a) = traces([a](const TruthSample& s) { return s.a(a); },
                                         [a](const SensorFrame& f) { return f.a_fp(a); });
  }
  const Vec6 floor6 = Vec6::Constant(kVarianceFloor);
  out.variances.sigma2_JC0 = out.variances.sigma2_JC0.cwiseMax(floor6);
  out.variances.sigma2_imu0 = out.variances.sigma2_imu0.cwiseMax(floor6);
  out.variances.sigma2_afp = out.variances.sigma2_afp.cwiseMax(Vec3::Constant(kVarianceFloor));

  // Marking time: process-noise schedule. Trials are reduced to per-bin
  // statistics as they finish so long runs stay small in memory.
  const double bin = cfg.scenario.gait.dt;
  using Accumulators = std::vector<BinnedVariance>;
  std::vector<Accumulators> per_trial(static_cast<std::size_t>(cc.marking_trials));
  std::vector<std::pair<Axis, Quantity>> keys;
  parallel_for(per_trial.size(), cfg.threads, [&](std::size_t i) {
    GaitScenario sc = cfg.scenario;
    sc.velocity_profile = {{0, 0.0}};
    sc.n_steps = cc.skip_steps + cc.steps_per_trial;
    sc.noise.vibration_gain = 0.0;
    sc.noise.premature_contact = false;
    sc.seed = cc.seed + 5000 + i;
    std::vector<SensorLog> one;
    one.push_back(simulate_walk(sc));
    if (one[0].diverged || one[0].fell) throw DivergenceError("marking-time trial fell");
    for (const auto& series : process_error_samples(one, cc.skip_steps, cc.steps_per_trial)) {
      BinnedVariance acc(bin);
      for (const auto& s : series.samples) acc.add(s.time_s, static_cast<int>(i), s.error);
      per_trial[i].push_back(std::move(acc));
    }
  });
  for (Axis axis : kAxes) {
    for (Quantity q : kQuantities) keys.emplace_back(axis, q);
  }
  const Segmentation seg = Segmentation::for_step(cfg.scenario.gait.T_ssp);
  WindowConfig win = WindowConfig::for_segmentation(seg, cc.window_s);
  win.knots_per_window = cc.knots_per_window;
  for (std::size_t c = 0; c < keys.size(); ++c) {
    BinnedVariance pooled(bin);
    for (const auto& trial : per_trial) pooled.merge(trial[c]);
    out.schedule.components[keys[c]] =
        fit_schedule(window_representatives(pooled.finish(), win, seg), seg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

std::optional<double> RunRecord::get(const std::string& metric) const {
  for (const auto& [k, v] : values) {
    if (k == metric) return v;
  }
  return std::nullopt;
}

bool BenchmarkReport::any_diverged() const {
  for (const auto& r : runs) {
    if (r.get("diverged").value_or(0.0) != 0.0) return true;
  }
  return false;
}

std::vector<std::string> BenchmarkReport::estimators() const {
  std::vector<std::string> out;
  for (const auto& r : runs) {
    if (std::find(out.begin(), out.end(), r.estimator) == out.end()) out.push_back(r.estimator);
  }
  return out;
}

std::vector<double> BenchmarkReport::series(const std::string& estimator,
                                            const std::string& metric) const {
  std::vector<double> out;
  for (const auto& r : runs) {
    if (r.estimator != estimator) continue;
    if (auto v = r.get(metric)) out.push_back(*v);
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Summary BenchmarkReport::summarize(const std::string& estimator, const std::string& metric) const {
  const auto s = series(estimator, metric);
  return {quantile(s, 0.5), quantile(s, 0.25), quantile(s, 0.75)};
}

std::vector<std::optional<int>> convergence_steps(const SensorLog& log, const GaitScenario& sc,
                                                  const ConvergenceCriterion& crit) {
  std::vector<int> changes;
  for (std::size_t i = 0; i < sc.velocity_profile.size(); ++i) {
    const int c = sc.velocity_profile[i].step;
    if (c <= 0 || c >= sc.n_steps) continue;
    if (sc.velocity_at(c) != sc.velocity_at(c - 1)) changes.push_back(c);
  }
  std::vector<std::optional<int>> out;
  for (std::size_t j = 0; j < changes.size(); ++j) {
    const int c = changes[j];
    const int end = j + 1 < changes.size() ? changes[j + 1] : sc.n_steps;
    const OrbitSpec orbit = hlip_orbit(sc.gait, OrbitKind::P2Lateral, sc.velocity_at(c));
    const double amp_p = 0.5 * (std::abs(orbit.pre_impact[0](0)) + std::abs(orbit.pre_impact[1](0)));
    const double amp_v = 0.5 * (std::abs(orbit.pre_impact[0](1)) + std::abs(orbit.pre_impact[1](1)));
    auto in_band = [&](int m) {
      if (m >= static_cast<int>(log.steps.size())) return false;
      const StepRecord& r = log.steps[static_cast<std::size_t>(m)];
      const Vec2 d = r.pre_impact_truth - r.pre_impact_target;
      return std::max(std::abs(d(0)) / amp_p, std::abs(d(1)) / amp_v) <= crit.band;
    };
    std::optional<int> found;
    for (int m = c; m + crit.dwell - 1 < end && !found; ++m) {
      bool ok = true;
      for (int d = 0; d < crit.dwell && ok; ++d) ok = in_band(m + d);
      if (ok) found = m - c + 1;
    }
    out.push_back(found);
  }
  return out;
}

namespace {

const char* kComponentNames[6] = {"px", "py", "pz", "vx", "vy", "vz"};

RunRecord evaluate_run(const ExperimentConfig& cfg, EstimatorKind kind, std::uint64_t seed,
                       const MeasurementVariances& variances, const NoiseSchedule& schedule) {
  GaitScenario sc = cfg.scenario;
  sc.seed = seed;
  auto estimator = make_estimator(kind, sc.gait, cfg.params, schedule, variances);
  std::vector<BodyEstimate> estimates;
  estimates.reserve(static_cast<std::size_t>(sc.n_steps * sc.gait.ticks_per_step()));
  StateObserver observer = [&](const SensorFrame& f) {
    BodyEstimate e = estimator->step(f);
    estimates.push_back(e);
    return StateFeedback{e.p, e.v};
  };
  const SensorLog log = simulate_walk(sc, observer);

  RunRecord rec;
  rec.estimator = std::string(to_string(kind));
  rec.seed = seed;
  rec.values.emplace_back("diverged", log.diverged ? 1.0 : 0.0);
  rec.values.emplace_back("fell", log.fell ? 1.0 : 0.0);

  const std::size_t n = std::min(estimates.size(), log.truth.size());
  const auto start = std::min<std::size_t>(static_cast<std::size_t>(cfg.warmup_ticks), n);
  // A diverged filter leaves no usable error statistics; convergence is still
  // scored (the missing steps count as out of band) so seeds stay paired.
  if (cfg.wants("rmse") && !log.diverged) {
    Vec6 se = Vec6::Zero(), se_jc = Vec6::Zero(), se_imu = Vec6::Zero();
    for (std::size_t i = start; i < n; ++i) {
      const TruthSample& t = log.truth[i];
      const SensorFrame& f = log.ticks[i];
      Vec6 e, ej, ei;
      e << estimates[i].p - t.p, estimates[i].v - t.v;
      ej << f.p_jc - t.p, f.v_jc - t.v;
      ei << f.p_imu - t.p, f.v_imu - t.v;
      se += e.cwiseProduct(e);
      se_jc += ej.cwiseProduct(ej);
      se_imu += ei.cwiseProduct(ei);
    }
    const double cnt = static_cast<double>(std::max<std::size_t>(n - start, 1));
    for (int c = 0; c < 6; ++c) rec.values.emplace_back(std::string("rmse_") + kComponentNames[c], std::sqrt(se(c) / cnt));
    for (int c = 0; c < 6; ++c) rec.values.emplace_back(std::string("raw_jc_rmse_") + kComponentNames[c], std::sqrt(se_jc(c) / cnt));
    for (int c = 0; c < 6; ++c) rec.values.emplace_back(std::string("raw_imu_rmse_") + kComponentNames[c], std::sqrt(se_imu(c) / cnt));
  }
  if (cfg.wants("nees") && !log.diverged) {
    Vec3 sum = Vec3::Zero();
    for (std::size_t i = start; i < n; ++i) {
      const TruthSample& t = log.truth[i];
      for (int a = 0; a < 3; ++a) {
        const Vec2 e(estimates[i].p(a) - t.p(a), estimates[i].v(a) - t.v(a));
        sum(a) += nees(e, estimates[i].P[a]);
      }
    }
    const double cnt = static_cast<double>(std::max<std::size_t>(n - start, 1));
    rec.values.emplace_back("nees_x", sum(0) / cnt);
    rec.values.emplace_back("nees_y", sum(1) / cnt);
    rec.values.emplace_back("nees_z", sum(2) / cnt);
    // Smallest covariance eigenvalue over every tick, warm-up included.
    double min_eig = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      for (const Mat2& P : estimates[i].P) {
        const double asym = std::abs(P(0, 1) - P(1, 0));
        const double e = Eigen::SelfAdjointEigenSolver<Mat2>(P, Eigen::EigenvaluesOnly).eigenvalues()(0);
        min_eig = std::min(min_eig, asym > 1e-12 * P.norm() ? -asym : e);
      }
    }
    rec.values.emplace_back("min_cov_eigenvalue", min_eig);
  }
  if (cfg.wants("convergence_steps")) {
    const auto conv = convergence_steps(log, sc, cfg.convergence);
    // Non-converged changes count as one step past the end of their window.
    std::vector<int> change_steps;
    for (const auto& c : sc.velocity_profile) {
      if (c.step > 0 && c.step < sc.n_steps && sc.velocity_at(c.step) != sc.velocity_at(c.step - 1)) {
        change_steps.push_back(c.step);
      }
    }
    double total = 0.0;
    int missing = 0;
    for (std::size_t j = 0; j < conv.size(); ++j) {
      const int end = j + 1 < change_steps.size() ? change_steps[j + 1] : sc.n_steps;
      rec.values.emplace_back("convergence_" + std::to_string(j + 1), conv[j] ? *conv[j] : -1.0);
      if (conv[j]) {
        total += *conv[j];
      } else {
        total += end - change_steps[j] + 1;
        ++missing;
      }
    }
    rec.values.emplace_back("convergence_total", total);
    rec.values.emplace_back("nonconverged", missing);
  }
  return rec;
}

}  // namespace

BenchmarkReport run_benchmark(const ExperimentConfig& cfg) {
  cfg.validate();
  MeasurementVariances variances;
  NoiseSchedule schedule;
  if (cfg.variances && cfg.schedule) {
    variances = *cfg.variances;
    schedule = *cfg.schedule;
  } else {
    const CharacterizationResult ch = run_characterization(cfg);
    variances = cfg.variances.value_or(ch.variances);
    schedule = cfg.schedule.value_or(ch.schedule);
  }

  const std::size_t n_est = cfg.estimators.size();
  std::vector<RunRecord> runs(static_cast<std::size_t>(cfg.n_seeds) * n_est);
  parallel_for(runs.size(), cfg.threads, [&](std::size_t job) {
    const std::size_t s = job / n_est;
    const EstimatorKind kind = cfg.estimators[job % n_est];
    runs[job] = evaluate_run(cfg, kind, cfg.seed + s, variances, schedule);
  });

  // Group by estimator, seeds ascending.
  BenchmarkReport report;
  for (std::size_t e = 0; e < n_est; ++e) {
    for (std::size_t s = 0; s < static_cast<std::size_t>(cfg.n_seeds); ++s) {
      report.runs.push_back(std::move(runs[s * n_est + e]));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report output

std::string report_to_json(const BenchmarkReport& report) {
  ordered_json j;
  j["runs"] = ordered_json::array();
  for (const auto& r : report.runs) {
    ordered_json run;
    run["estimator"] = r.estimator;
    run["seed"] = r.seed;
    ordered_json m = ordered_json::object();
    for (const auto& [k, v] : r.values) m[k] = v;
    run["metrics"] = m;
    j["runs"].push_back(run);
  }
  ordered_json summary = ordered_json::object();
  for (const auto& est : report.estimators()) {
    ordered_json per = ordered_json::object();
    std::vector<std::string> names;
    for (const auto& r : report.runs) {
      if (r.estimator != est) continue;
      for (const auto& kv : r.values) {
        if (std::find(names.begin(), names.end(), kv.first) == names.end()) names.push_back(kv.first);
      }
    }
    for (const auto& name : names) {
      const Summary s = report.summarize(est, name);
      per[name] = {{"median", s.median}, {"q1", s.q1}, {"q3", s.q3}};
    }
    summary[est] = per;
  }
  j["summary"] = summary;
  return j.dump(2) + "\n";
}

std::string report_to_csv(const BenchmarkReport& report) {
  std::string out = "estimator,seed,metric,value\n";
  char buf[64];
  for (const auto& r : report.runs) {
    for (const auto& [k, v] : r.values) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += r.estimator + "," + std::to_string(r.seed) + "," + k + "," + buf + "\n";
    }
  }
  return out;
}

BenchmarkReport report_from_json(const std::string& text) {
  BenchmarkReport report;
  const ordered_json j = ordered_json::parse(text);
  for (const auto& run : j.at("runs")) {
    RunRecord r;
    r.estimator = run.at("estimator").get<std::string>();
    r.seed = run.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : run.at("metrics").items()) r.values.emplace_back(k, v.get<double>());
    report.runs.push_back(std::move(r));
  }
  return report;
}

BenchmarkReport report_from_csv(const std::string& text) {
  BenchmarkReport report;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "estimator,seed,metric,value") {
    throw ConfigError("report CSV header mismatch");
  }
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string est, seed, metric, value;
    if (!std::getline(ls, est, ',') || !std::getline(ls, seed, ',') ||
        !std::getline(ls, metric, ',') || !std::getline(ls, value)) {
      throw IndexedError("malformed report row", row);
    }
    const std::uint64_t sd = std::stoull(seed);
    if (report.runs.empty() || report.runs.back().estimator != est || report.runs.back().seed != sd) {
      report.runs.push_back({est, sd, {}});
    }
    report.runs.back().values.emplace_back(metric, std::stod(value));
  }
  return report;
}

std::filesystem::path emit_report(const BenchmarkReport& report, ReportFormat format,
                                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto path = dir / (format == ReportFormat::Json ? "report.json" : "report.csv");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write to output directory " + dir.string());
  out << (format == ReportFormat::Json ? report_to_json(report) : report_to_csv(report));
  if (!out) throw ConfigError("failed writing " + path.string());
  return path;
}

BenchmarkReport read_report(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return file.extension() == ".csv" ? report_from_csv(ss.str()) : report_from_json(ss.str());
}

}  // namespace gaitd
