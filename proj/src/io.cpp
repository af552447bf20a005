#include "gaitd/io.hpp"

#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace gaitd {

using json = nlohmann::ordered_json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

namespace {

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

template <int N>
Eigen::Matrix<double, N, 1> vec_or(const json& j, const char* key,
                                   const Eigen::Matrix<double, N, 1>& fallback) {
  if (!j.contains(key)) return fallback;
  const json& a = j.at(key);
  Eigen::Matrix<double, N, 1> out;
  if (a.is_number()) return Eigen::Matrix<double, N, 1>::Constant(a.get<double>());
  if (!a.is_array() || a.size() != static_cast<std::size_t>(N)) {
    throw ConfigError(std::string("field '") + key + "' must be a number or an array of " +
                      std::to_string(N));
  }
  for (int i = 0; i < N; ++i) out(i) = a.at(static_cast<std::size_t>(i)).get<double>();
  return out;
}

template <int N>
json vec_json(const Eigen::Matrix<double, N, 1>& v) {
  json a = json::array();
  for (int i = 0; i < N; ++i) a.push_back(v(i));
  return a;
}

json schedule_json(const NoiseSchedule& schedule) {
  json arr = json::array();
  for (const auto& [key, comp] : schedule.components) {
    json segs = json::array();
    for (const auto& s : comp.segments) {
      segs.push_back({{"t0", s.t_start}, {"t1", s.t_end}, {"a1", s.a[0]}, {"a2", s.a[1]},
                      {"a3", s.a[2]}, {"a4", s.a[3]}});
    }
    arr.push_back({{"axis", std::string(to_string(key.first))},
                   {"quantity", std::string(to_string(key.second))},
                   {"segments", segs},
                   {"floor", comp.floor}});
  }
  return arr;
}

NoiseSchedule schedule_of(const json& arr) {
  if (!arr.is_array()) throw ConfigError("schedule JSON must be an array");
  NoiseSchedule out;
  for (const auto& c : arr) {
    CubicSchedule comp;
    comp.floor = get_or<double>(c, "floor", kVarianceFloor);
    if (!(comp.floor > 0.0)) throw ConfigError("schedule floor must be positive");
    for (const auto& s : c.at("segments")) {
      CubicSegment seg;
      seg.t_start = s.at("t0").get<double>();
      seg.t_end = s.at("t1").get<double>();
      seg.a = {s.at("a1").get<double>(), s.at("a2").get<double>(), s.at("a3").get<double>(),
               s.at("a4").get<double>()};
      comp.segments.push_back(seg);
    }
    if (comp.segments.empty()) throw ConfigError("schedule component without segments");
    for (std::size_t i = 0; i < comp.segments.size(); ++i) {
      const double expect = i == 0 ? 0.0 : comp.segments[i - 1].t_end;
      if (std::abs(comp.segments[i].t_start - expect) > 1e-12 ||
          !(comp.segments[i].t_end > comp.segments[i].t_start)) {
        throw IndexedError("schedule segments must tile the step", i);
      }
    }
    out.components[{axis_from_string(c.at("axis").get<std::string>()),
                    quantity_from_string(c.at("quantity").get<std::string>())}] = comp;
  }
  out.floor_variance = kVarianceFloor;
  if (out.components.size() != 6) throw ConfigError("schedule must cover all six components");
  return out;
}

json variances_json(const MeasurementVariances& v) {
  return {{"sigma2_imu0", vec_json<6>(v.sigma2_imu0)},
          {"sigma2_JC0", vec_json<6>(v.sigma2_JC0)},
          {"sigma2_afp", vec_json<3>(v.sigma2_afp)}};
}

MeasurementVariances variances_of(const json& j, const MeasurementVariances& base) {
  MeasurementVariances v = base;
  v.sigma2_imu0 = vec_or<6>(j, "sigma2_imu0", v.sigma2_imu0);
  v.sigma2_JC0 = vec_or<6>(j, "sigma2_JC0", v.sigma2_JC0);
  v.sigma2_afp = vec_or<3>(j, "sigma2_afp", v.sigma2_afp);
  v.validate();
  return v;
}

json profile_json(const EsvcProfile& p) {
  json segs = json::array();
  for (const auto& s : p.segments()) {
    segs.push_back({{"a", s.a}, {"b", s.b}, {"theta0", s.theta0}, {"theta1", s.theta1},
                    {"cx", s.center(0)}, {"cz", s.center(1)}});
  }
  return {{"segments", segs}, {"roll_min", p.roll_min()}, {"roll_max", p.roll_max()}};
}

EsvcProfile profile_of(const json& j) {
  std::vector<EllipseSegment> segs;
  for (const auto& s : j.at("segments")) {
    EllipseSegment e;
    e.a = s.at("a").get<double>();
    e.b = s.at("b").get<double>();
    e.theta0 = s.at("theta0").get<double>();
    e.theta1 = s.at("theta1").get<double>();
    e.center = Vec2(s.at("cx").get<double>(), s.at("cz").get<double>());
    segs.push_back(e);
  }
  return EsvcProfile(std::move(segs), j.at("roll_min").get<double>(), j.at("roll_max").get<double>());
}

json params_json(const AdaptiveParams& p) {
  return {{"alpha", vec_json<6>(p.alpha)},
          {"beta0", vec_json<6>(p.beta0)},
          {"beta1", vec_json<6>(p.beta1)},
          {"beta2", vec_json<6>(p.beta2)},
          {"tau_a", p.tau_a},
          {"n_res", p.n_res},
          {"transition", p.transition == TransitionModel::Zoh ? "zoh" : "full_step"},
          {"kernel_weight_pos", p.kernel_weight_pos},
          {"kernel_weight_vel", p.kernel_weight_vel},
          {"floor", p.floor},
          {"aekf_q_rate", p.aekf_q_rate}};
}

AdaptiveParams params_of(const json& j) {
  AdaptiveParams p;
  p.alpha = vec_or<6>(j, "alpha", p.alpha);
  p.beta0 = vec_or<6>(j, "beta0", p.beta0);
  p.beta1 = vec_or<6>(j, "beta1", p.beta1);
  p.beta2 = vec_or<6>(j, "beta2", p.beta2);
  p.tau_a = get_or<double>(j, "tau_a", p.tau_a);
  p.n_res = get_or<int>(j, "n_res", p.n_res);
  const std::string tr = get_or<std::string>(j, "transition", "zoh");
  if (tr == "zoh") {
    p.transition = TransitionModel::Zoh;
  } else if (tr == "full_step") {
    p.transition = TransitionModel::FullStep;
  } else {
    throw ConfigError("transition must be 'zoh' or 'full_step'");
  }
  p.kernel_weight_pos = get_or<double>(j, "kernel_weight_pos", p.kernel_weight_pos);
  p.kernel_weight_vel = get_or<double>(j, "kernel_weight_vel", p.kernel_weight_vel);
  p.floor = get_or<double>(j, "floor", p.floor);
  p.aekf_q_rate = get_or<double>(j, "aekf_q_rate", p.aekf_q_rate);
  p.validate();
  return p;
}

bool switch_of(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (v.is_boolean()) return v.get<bool>();
  const std::string s = v.get<std::string>();
  if (s == "on") return true;
  if (s == "off") return false;
  throw ConfigError(std::string("field '") + key + "' must be on|off");
}

GaitScenario scenario_of(const json& j, const GaitScenario& base_in,
                         const std::filesystem::path& base_dir) {
  GaitScenario sc = base_in;
  if (j.contains("preset")) {
    const std::string preset = j.at("preset").get<std::string>();
    if (preset == "speed_change") {
      sc = speed_change_scenario(sc.seed);
    } else if (preset == "marking_time") {
      sc = marking_time_scenario(sc.n_steps, sc.seed);
    } else if (preset == "fixed_point_tracking") {
      sc = fixed_point_tracking_scenario(sc.seed);
    } else {
      throw ConfigError("unknown scenario preset '" + preset + "'");
    }
  }
  const std::string kind = get_or<std::string>(
      j, "kind", sc.kind == ScenarioKind::Walking ? "walking" : "fixed_point_tracking");
  if (kind == "walking") {
    sc.kind = ScenarioKind::Walking;
  } else if (kind == "fixed_point_tracking") {
    sc.kind = ScenarioKind::FixedPointTracking;
  } else {
    throw ConfigError("unknown scenario kind '" + kind + "'");
  }
  if (j.contains("gait")) {
    const json& g = j.at("gait");
    GaitConfig& gc = sc.gait;
    gc.T_ssp = get_or(g, "T_ssp", gc.T_ssp);
    gc.T_dsp = get_or(g, "T_dsp", gc.T_dsp);
    gc.h0 = get_or(g, "h0", gc.h0);
    gc.step_length_nominal = get_or(g, "step_length_nominal", gc.step_length_nominal);
    gc.g = get_or(g, "g", gc.g);
    gc.dt = get_or(g, "dt", gc.dt);
    gc.lever_arm = get_or(g, "lever_arm", gc.lever_arm);
    gc.roll_ratio = get_or(g, "roll_ratio", gc.roll_ratio);
    gc.max_step_correction = get_or(g, "max_step_correction", gc.max_step_correction);
    gc.hlip_accel_gravity = switch_of(g, "hlip_accel_gravity", gc.hlip_accel_gravity);
    if (g.contains("orbit") && g.at("orbit").get<std::string>() != "SP1-CP2") {
      throw ConfigError("only the SP1-CP2 orbit composition is supported");
    }
  }
  if (j.contains("velocity_profile")) {
    sc.velocity_profile.clear();
    for (const auto& c : j.at("velocity_profile")) {
      sc.velocity_profile.push_back({c.at("step").get<int>(), c.at("velocity").get<double>()});
    }
  }
  sc.n_steps = get_or(j, "n_steps", sc.n_steps);
  sc.seed = get_or(j, "seed", sc.seed);
  sc.tracking_duration = get_or(j, "tracking_duration", sc.tracking_duration);
  if (j.contains("esvc_mode")) {
    const std::string m = j.at("esvc_mode").get<std::string>();
    if (m == "exact") {
      sc.esvc_mode = ContactMode::Exact;
    } else if (m == "approx") {
      sc.esvc_mode = ContactMode::Approx;
    } else {
      throw ConfigError("esvc_mode must be exact|approx");
    }
  }
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    SensorNoiseModel& nm = sc.noise;
    nm.measurement = variances_of(n, nm.measurement);
    nm.imu_drift = get_or(n, "imu_drift", nm.imu_drift);
    nm.vibration_gain = get_or(n, "vibration_gain", nm.vibration_gain);
    nm.vibration_max = get_or(n, "vibration_max", nm.vibration_max);
    nm.vibration_scale = get_or(n, "vibration_scale", nm.vibration_scale);
    nm.vibration_afp = get_or(n, "vibration_afp", nm.vibration_afp);
    nm.premature_contact = get_or(n, "premature_contact", nm.premature_contact);
    nm.premature_ratio = get_or(n, "premature_ratio", nm.premature_ratio);
  }
  if (j.contains("process_schedule")) sc.process_schedule = schedule_of(j.at("process_schedule"));
  if (j.contains("process_schedule_file")) {
    sc.process_schedule =
        schedule_of(parse(read_text(base_dir / j.at("process_schedule_file").get<std::string>())));
  }
  if (j.contains("profile")) sc.profile = profile_of(j.at("profile"));
  if (j.contains("profile_file")) {
    sc.profile = profile_of(parse(read_text(base_dir / j.at("profile_file").get<std::string>())));
  }
  sc.validate();
  return sc;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double number(const std::string& s, std::size_t row) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw IndexedError("malformed number '" + s + "'", row);
  }
}

void append(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace

std::string schedule_to_json(const NoiseSchedule& schedule) { return schedule_json(schedule).dump(2) + "\n"; }
NoiseSchedule schedule_from_json(const std::string& text) { return schedule_of(parse(text)); }

std::string variances_to_json(const MeasurementVariances& v) { return variances_json(v).dump(2) + "\n"; }
MeasurementVariances variances_from_json(const std::string& text) {
  return variances_of(parse(text), MeasurementVariances{});
}

std::string profile_to_json(const EsvcProfile& profile) { return profile_json(profile).dump(2) + "\n"; }
EsvcProfile profile_from_json(const std::string& text) { return profile_of(parse(text)); }

std::string params_to_json(const AdaptiveParams& p) { return params_json(p).dump(2) + "\n"; }
AdaptiveParams params_from_json(const std::string& text) { return params_of(parse(text)); }

std::string scenario_to_json(const GaitScenario& sc) {
  const GaitConfig& g = sc.gait;
  json profile = json::array();
  for (const auto& c : sc.velocity_profile) profile.push_back({{"step", c.step}, {"velocity", c.velocity}});
  json noise = variances_json(sc.noise.measurement);
  noise["imu_drift"] = sc.noise.imu_drift;
  noise["vibration_gain"] = sc.noise.vibration_gain;
  noise["vibration_max"] = sc.noise.vibration_max;
  noise["vibration_scale"] = sc.noise.vibration_scale;
  noise["vibration_afp"] = sc.noise.vibration_afp;
  noise["premature_contact"] = sc.noise.premature_contact;
  noise["premature_ratio"] = sc.noise.premature_ratio;
  json j = {
      {"kind", sc.kind == ScenarioKind::Walking ? "walking" : "fixed_point_tracking"},
      {"gait",
       {{"T_ssp", g.T_ssp}, {"T_dsp", g.T_dsp}, {"h0", g.h0},
        {"step_length_nominal", g.step_length_nominal}, {"orbit", "SP1-CP2"}, {"g", g.g},
        {"dt", g.dt}, {"lever_arm", g.lever_arm}, {"roll_ratio", g.roll_ratio},
        {"max_step_correction", g.max_step_correction},
        {"hlip_accel_gravity", g.hlip_accel_gravity ? "on" : "off"}}},
      {"velocity_profile", profile},
      {"n_steps", sc.n_steps},
      {"seed", sc.seed},
      {"esvc_mode", sc.esvc_mode == ContactMode::Exact ? "exact" : "approx"},
      {"tracking_duration", sc.tracking_duration},
      {"noise", noise},
      {"profile", profile_json(sc.profile)}};
  if (!sc.process_schedule.components.empty()) j["process_schedule"] = schedule_json(sc.process_schedule);
  return j.dump(2) + "\n";
}

GaitScenario scenario_from_json(const std::string& text, const GaitScenario& base) {
  return scenario_of(parse(text), base, ".");
}

ExperimentConfig experiment_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  const json j = parse(text);
  ExperimentConfig cfg;
  cfg.seed = get_or(j, "seed", cfg.seed);
  cfg.n_seeds = get_or(j, "n_seeds", cfg.n_seeds);
  cfg.output_dir = get_or(j, "output_dir", cfg.output_dir);
  cfg.threads = get_or(j, "threads", cfg.threads);
  cfg.warmup_ticks = get_or(j, "warmup_ticks", cfg.warmup_ticks);
  if (j.contains("estimators")) {
    cfg.estimators.clear();
    for (const auto& e : j.at("estimators")) cfg.estimators.push_back(estimator_from_string(e.get<std::string>()));
  }
  if (j.contains("metrics")) cfg.metrics = j.at("metrics").get<std::vector<std::string>>();
  if (j.contains("scenario")) cfg.scenario = scenario_of(j.at("scenario"), cfg.scenario, base_dir);
  if (j.contains("params")) cfg.params = params_of(j.at("params"));
  if (j.contains("params_file")) {
    cfg.params = params_of(parse(read_text(base_dir / j.at("params_file").get<std::string>())));
  }
  if (j.contains("characterization")) {
    const json& c = j.at("characterization");
    auto& cc = cfg.characterization;
    cc.fp_trials = get_or(c, "fp_trials", cc.fp_trials);
    cc.marking_trials = get_or(c, "marking_trials", cc.marking_trials);
    cc.steps_per_trial = get_or(c, "steps_per_trial", cc.steps_per_trial);
    cc.skip_steps = get_or(c, "skip_steps", cc.skip_steps);
    cc.bin_s = get_or(c, "bin_s", cc.bin_s);
    cc.window_s = get_or(c, "window_s", cc.window_s);
    cc.knots_per_window = get_or(c, "knots_per_window", cc.knots_per_window);
    cc.seed = get_or(c, "seed", cc.seed);
  }
  if (j.contains("convergence")) {
    const json& c = j.at("convergence");
    cfg.convergence.band = get_or(c, "band", cfg.convergence.band);
    cfg.convergence.dwell = get_or(c, "dwell", cfg.convergence.dwell);
  }
  if (j.contains("schedule_file")) {
    cfg.schedule = schedule_of(parse(read_text(base_dir / j.at("schedule_file").get<std::string>())));
  }
  if (j.contains("variances_file")) {
    cfg.variances = variances_of(parse(read_text(base_dir / j.at("variances_file").get<std::string>())),
                                 MeasurementVariances{});
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// CSV

namespace {
constexpr const char* kLogHeader =
    "t,support,time_in_step,pjx,pjy,pjz,vjx,vjy,vjz,pix,piy,piz,vix,viy,viz,afx,afy,afz,hpx,hpy,hvx,"
    "hvy,sfx,sfy";
constexpr const char* kTruthHeader = "t,px,py,pz,vx,vy,vz,ax,ay,az";
}  // namespace

std::string log_to_csv(const SensorLog& log) {
  std::string out = std::string(kLogHeader) + "\n";
  for (const auto& f : log.ticks) {
    append(out, f.t);
    out += ",";
    out += to_string(f.support);
    const double vals[] = {f.time_in_step, f.p_jc(0), f.p_jc(1), f.p_jc(2), f.v_jc(0), f.v_jc(1),
                           f.v_jc(2), f.p_imu(0), f.p_imu(1), f.p_imu(2), f.v_imu(0), f.v_imu(1),
                           f.v_imu(2), f.a_fp(0), f.a_fp(1), f.a_fp(2), f.hlip_p(0), f.hlip_p(1),
                           f.hlip_v(0), f.hlip_v(1), f.stance_foot(0), f.stance_foot(1)};
    for (double v : vals) {
      out += ",";
      append(out, v);
    }
    out += "\n";
  }
  return out;
}

SensorLog log_from_csv(const std::string& text, double dt) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader) throw ConfigError("log CSV header mismatch");
  SensorLog log;
  log.dt = dt;
  std::size_t row = 1;
  int step = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto c = split(line);
    if (c.size() != 24) throw IndexedError("log row has wrong column count", row);
    SensorFrame f;
    f.t = number(c[0], row);
    if (c[1] == "LSP") {
      f.support = Support::Left;
    } else if (c[1] == "RSP") {
      f.support = Support::Right;
    } else {
      throw IndexedError("support must be LSP or RSP", row);
    }
    std::vector<double> v;
    for (std::size_t i = 2; i < c.size(); ++i) v.push_back(number(c[i], row));
    f.time_in_step = v[0];
    f.p_jc = Vec3(v[1], v[2], v[3]);
    f.v_jc = Vec3(v[4], v[5], v[6]);
    f.p_imu = Vec3(v[7], v[8], v[9]);
    f.v_imu = Vec3(v[10], v[11], v[12]);
    f.a_fp = Vec3(v[13], v[14], v[15]);
    f.hlip_p = Vec2(v[16], v[17]);
    f.hlip_v = Vec2(v[18], v[19]);
    f.stance_foot = Vec3(v[20], v[21], 0.0);
    if (!log.ticks.empty() && log.ticks.back().support != f.support) ++step;
    f.step = step;
    log.ticks.push_back(f);
  }
  return log;
}

std::string truth_to_csv(const SensorLog& log) {
  std::string out = std::string(kTruthHeader) + "\n";
  for (const auto& s : log.truth) {
    const double vals[] = {s.t, s.p(0), s.p(1), s.p(2), s.v(0), s.v(1), s.v(2), s.a(0), s.a(1), s.a(2)};
    for (std::size_t i = 0; i < 10; ++i) {
      if (i) out += ",";
      append(out, vals[i]);
    }
    out += "\n";
  }
  return out;
}

std::vector<TruthSample> truth_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTruthHeader) throw ConfigError("truth CSV header mismatch");
  std::vector<TruthSample> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto c = split(line);
    if (c.size() != 10) throw IndexedError("truth row has wrong column count", row);
    double v[10];
    for (int i = 0; i < 10; ++i) v[i] = number(c[static_cast<std::size_t>(i)], row);
    out.push_back({v[0], Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6]), Vec3(v[7], v[8], v[9])});
  }
  return out;
}

std::vector<ErrorSampleSeries> error_samples_from_csv(const std::string& text, double step_duration_s) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "time_s,trial_id,axis,quantity,error") {
    throw ConfigError("error-sample CSV header mismatch");
  }
  std::map<std::pair<Axis, Quantity>, ErrorSampleSeries> series;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto c = split(line);
    if (c.size() != 5) throw IndexedError("error-sample row has wrong column count", row);
    const Axis axis = axis_from_string(c[2]);
    const Quantity q = quantity_from_string(c[3]);
    const double t = number(c[0], row);
    if (t < 0.0 || t > step_duration_s + 1e-9) throw IndexedError("sample time outside the step", row);
    auto& s = series[{axis, q}];
    s.axis = axis;
    s.quantity = q;
    s.step_duration_s = step_duration_s;
    s.samples.push_back({t, static_cast<int>(number(c[1], row)), number(c[4], row)});
  }
  std::vector<ErrorSampleSeries> out;
  for (auto& [k, s] : series) out.push_back(std::move(s));
  return out;
}

std::string estimates_to_csv(const std::vector<BodyEstimate>& estimates) {
  std::string out = "t,axis,p_hat,v_hat,P11,P22,Ka,Rtilde11,Rtilde22,Qtilde11,Qtilde22\n";
  for (const auto& e : estimates) {
    for (int a = 0; a < 3; ++a) {
      append(out, e.t);
      out += ",";
      out += to_string(static_cast<Axis>(a));
      const double vals[] = {e.p(a), e.v(a), e.P[a](0, 0), e.P[a](1, 1), e.accel_gain(a),
                             e.R_tilde[a](0, 0), e.R_tilde[a](1, 1), e.Q_tilde[a](0, 0),
                             e.Q_tilde[a](1, 1)};
      for (double v : vals) {
        out += ",";
        append(out, v);
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace gaitd
