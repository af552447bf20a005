#include "gaitd/noise_regression.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <iterator>

namespace gaitd {

std::string_view to_string(Axis axis) {
  switch (axis) {
    case Axis::X: return "X";
    case Axis::Y: return "Y";
    case Axis::Z: return "Z";
  }
  return "?";
}

std::string_view to_string(Quantity q) {
  return q == Quantity::Position ? "position" : "velocity";
}

Axis axis_from_string(std::string_view s) {
  if (s == "X" || s == "x") return Axis::X;
  if (s == "Y" || s == "y") return Axis::Y;
  if (s == "Z" || s == "z") return Axis::Z;
  throw ConfigError("unknown axis '" + std::string(s) + "'");
}

Quantity quantity_from_string(std::string_view s) {
  if (s == "position" || s == "pos") return Quantity::Position;
  if (s == "velocity" || s == "vel") return Quantity::Velocity;
  throw ConfigError("unknown quantity '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Configuration types

void WindowConfig::validate(std::size_t segment_count) const {
  if (knots_per_window < 1) throw ConfigError("knots_per_window must be >= 1");
  if (!(tau_w > 0.0)) throw ConfigError("tau_w must be positive");
  if (windows_per_segment.size() != segment_count) {
    throw ConfigError("windows_per_segment has " + std::to_string(windows_per_segment.size()) +
                      " entries for " + std::to_string(segment_count) + " segments");
  }
  for (std::size_t j = 0; j < windows_per_segment.size(); ++j) {
    if (windows_per_segment[j] < 1) throw IndexedError("segment without windows", j);
  }
}

WindowConfig WindowConfig::for_segmentation(const Segmentation& seg, double window_s) {
  if (!(window_s > 0.0)) throw ConfigError("window length must be positive");
  seg.validate();
  WindowConfig cfg;
  cfg.windows_per_segment.clear();
  for (std::size_t j = 0; j < seg.segment_count(); ++j) {
    const double len = seg.boundaries_s[j + 1] - seg.boundaries_s[j];
    cfg.windows_per_segment.push_back(std::max(2, static_cast<int>(std::lround(len / window_s))));
  }
  return cfg;
}

void Segmentation::validate() const {
  if (boundaries_s.size() < 2) throw ConfigError("segmentation needs at least one segment");
  if (boundaries_s.front() != 0.0) throw ConfigError("segmentation must start at 0");
  for (std::size_t i = 1; i < boundaries_s.size(); ++i) {
    if (!(boundaries_s[i] > boundaries_s[i - 1])) {
      throw IndexedError("segment boundaries must be strictly ascending", i);
    }
  }
}

Segmentation Segmentation::standard_step() { return for_step(0.42, 0.05); }

Segmentation Segmentation::for_step(double step_duration, double segment_s) {
  if (!(step_duration > 0.0) || !(segment_s > 0.0)) throw ConfigError("invalid segmentation");
  Segmentation seg;
  for (int k = 0;; ++k) {
    const double t = k * segment_s;
    if (t >= step_duration - 1e-9) break;
    seg.boundaries_s.push_back(t);
  }
  seg.boundaries_s.push_back(step_duration);
  return seg;
}

void MeasurementVariances::validate() const {
  if ((sigma2_imu0.array() <= 0.0).any() || (sigma2_JC0.array() <= 0.0).any() ||
      (sigma2_afp.array() <= 0.0).any()) {
    throw ConfigError("measurement variances must be strictly positive");
  }
}

// ---------------------------------------------------------------------------
// Schedules

double CubicSegment::value(double t) const { return ((a[0] * t + a[1]) * t + a[2]) * t + a[3]; }

double CubicSegment::slope(double t) const { return (3.0 * a[0] * t + 2.0 * a[1]) * t + a[2]; }

double CubicSchedule::raw(double t) const {
  if (segments.empty()) throw ConfigError("empty cubic schedule");
  t = std::clamp(t, 0.0, duration());
  for (const auto& s : segments) {
    if (t < s.t_end) return s.value(t);
  }
  return segments.back().value(t);
}

double CubicSchedule::evaluate(double t) const { return std::max(raw(t), floor); }

double NoiseSchedule::step_duration() const {
  if (components.empty()) throw ConfigError("empty noise schedule");
  return components.begin()->second.duration();
}

const CubicSchedule& NoiseSchedule::at(Axis axis, Quantity q) const {
  auto it = components.find({axis, q});
  if (it == components.end()) {
    throw ConfigError("noise schedule missing component " + std::string(to_string(axis)) + "/" +
                      std::string(to_string(q)));
  }
  return it->second;
}

NoiseSchedule NoiseSchedule::constant(const Vec6& variances, double step_duration) {
  NoiseSchedule out;
  for (Axis ax : kAxes) {
    for (Quantity q : kQuantities) {
      CubicSchedule c;
      CubicSegment s;
      s.t_start = 0.0;
      s.t_end = step_duration;
      s.a = {0.0, 0.0, 0.0, variances(state_index(ax, q))};
      c.segments.push_back(s);
      c.residual_norm.push_back(0.0);
      out.components[{ax, q}] = c;
    }
  }
  return out;
}

Vec6 NoiseSchedule::time_average(int samples) const {
  const double T = step_duration();
  Vec6 acc = Vec6::Zero();
  for (int i = 0; i < samples; ++i) {
    const double w = (i == 0 || i == samples - 1) ? 0.5 : 1.0;
    acc += w * evaluate_schedule(*this, T * i / (samples - 1));
  }
  return acc / (samples - 1);
}

Vec6 evaluate_schedule(const NoiseSchedule& schedule, double t) {
  Vec6 out;
  for (Axis ax : kAxes) {
    for (Quantity q : kQuantities) {
      const auto& c = schedule.at(ax, q);
      out(state_index(ax, q)) = std::max(c.raw(t), std::max(c.floor, schedule.floor_variance));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binned error variance

namespace {

std::size_t bin_of(double t, double bin_s) {
  return static_cast<std::size_t>(std::floor(t / bin_s + 1e-9));
}

}  // namespace

BinnedVariance::BinnedVariance(double bin_s) : bin_s_(bin_s) {
  if (!(bin_s > 0.0)) throw ConfigError("bin width must be positive");
}

void BinnedVariance::add(double time_s, int trial_id, double error) {
  const std::size_t index = added_++;
  if (!std::isfinite(error) || !std::isfinite(time_s)) {
    throw IndexedError("non-finite error sample", index);
  }
  if (time_s < 0.0) throw IndexedError("negative sample time", index);
  Bin& b = bins_[bin_of(time_s, bin_s_)];
  // Welford update.
  b.n += 1.0;
  const double delta = error - b.mean;
  b.mean += delta / b.n;
  b.m2 += delta * (error - b.mean);
  b.time_sum += time_s;
  auto it = std::lower_bound(b.trials.begin(), b.trials.end(), trial_id);
  if (it == b.trials.end() || *it != trial_id) b.trials.insert(it, trial_id);
}

void BinnedVariance::merge(const BinnedVariance& other) {
  if (std::abs(other.bin_s_ - bin_s_) > 1e-15) throw ConfigError("merging different bin widths");
  for (const auto& [k, o] : other.bins_) {
    Bin& b = bins_[k];
    const double n = b.n + o.n;
    const double delta = o.mean - b.mean;
    b.m2 += o.m2 + delta * delta * b.n * o.n / n;
    b.mean += delta * o.n / n;
    b.n = n;
    b.time_sum += o.time_sum;
    std::vector<int> trials;
    std::set_union(b.trials.begin(), b.trials.end(), o.trials.begin(), o.trials.end(),
                   std::back_inserter(trials));
    b.trials = std::move(trials);
  }
  added_ += other.added_;
}

ErrorVarianceSeries BinnedVariance::finish() const {
  if (bins_.empty()) throw ConfigError("no error samples");
  ErrorVarianceSeries out;
  const std::size_t first = bins_.begin()->first;
  const std::size_t last = bins_.rbegin()->first;
  for (std::size_t k = first; k <= last; ++k) {
    auto it = bins_.find(k);
    if (it == bins_.end() || it->second.trials.size() < 2) {
      throw IndexedError("fewer than 2 trials in variance bin", k);
    }
    const Bin& b = it->second;
    out.time_s.push_back(b.time_sum / b.n);
    out.variance.push_back(b.m2 / (b.n - 1.0));
    out.count.push_back(static_cast<int>(b.n));
  }
  return out;
}

ErrorVarianceSeries compute_error_variance(const ErrorSampleSeries& series, double bin_s) {
  BinnedVariance acc(bin_s);
  if (series.samples.empty()) throw ConfigError("no error samples");
  for (const auto& s : series.samples) acc.add(s);
  return acc.finish();
}

ErrorVarianceSeries compute_error_variance(const TrajectorySamples& truth,
                                           const TrajectorySamples& measured, double bin_s) {
  if (truth.size() != measured.size()) throw ConfigError("truth/measured trial count mismatch");
  ErrorSampleSeries series;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const auto& tr = truth[k];
    const auto& me = measured[k];
    if (tr.time_s.size() != me.time_s.size() || tr.value.size() != tr.time_s.size() ||
        me.value.size() != me.time_s.size()) {
      throw IndexedError("trial traces are not on a common grid", k);
    }
    for (std::size_t i = 0; i < tr.time_s.size(); ++i) {
      if (std::abs(tr.time_s[i] - me.time_s[i]) > 1e-9) {
        throw IndexedError("trial traces are not on a common grid", k);
      }
      series.samples.push_back({tr.time_s[i], tr.trial_id, tr.value[i] - me.value[i]});
    }
  }
  return compute_error_variance(series, bin_s);
}

// ---------------------------------------------------------------------------
// Weighted windows

WindowCenters window_representatives(const ErrorVarianceSeries& series, const WindowConfig& cfg,
                                     const Segmentation& seg) {
  seg.validate();
  cfg.validate(seg.segment_count());
  const auto& ts = series.time_s;
  const std::size_t n_knots = static_cast<std::size_t>(cfg.knots_per_window);

  WindowCenters out;
  out.time_s.resize(seg.segment_count());
  out.value.resize(seg.segment_count());
  std::size_t window_index = 0;
  for (std::size_t j = 0; j < seg.segment_count(); ++j) {
    const double t0 = seg.boundaries_s[j];
    const double t1 = seg.boundaries_s[j + 1];
    const int n_win = cfg.windows_per_segment[j];
    for (int k = 0; k < n_win; ++k, ++window_index) {
      if (ts.empty()) throw IndexedError("empty variance window", window_index);
      const double tk = t0 + (k + 0.5) * (t1 - t0) / n_win;

      // Contiguous block of knots centred on the sample nearest to tk.
      auto it = std::lower_bound(ts.begin(), ts.end(), tk);
      std::size_t nearest = static_cast<std::size_t>(it - ts.begin());
      if (nearest == ts.size() || (nearest > 0 && tk - ts[nearest - 1] < ts[nearest] - tk)) {
        nearest = nearest == 0 ? 0 : nearest - 1;
      }
      const std::size_t count = std::min(n_knots, ts.size());
      std::size_t begin = nearest >= count / 2 ? nearest - count / 2 : 0;
      begin = std::min(begin, ts.size() - count);

      double acc = 0.0;
      double wsum = 0.0;
      double tsum = 0.0;
      for (std::size_t i = begin; i < begin + count; ++i) {
        const double w = window_weight(ts[i] - tk, cfg.tau_w);
        acc += w * series.variance[i];
        wsum += w;
        tsum += w * ts[i];
      }
      // Knot blocks clamped at the series ends are off-center; place the
      // representative at the weighted knot time it actually describes.
      out.time_s[j].push_back(tsum / wsum);
      out.value[j].push_back(cfg.normalized ? acc / wsum : acc / static_cast<double>(count));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Constrained piecewise-cubic regression

namespace {

/// min ||A c - y|| subject to C c = d, by the null-space method.
/// Returns nullopt when the reduced problem is rank deficient.
std::optional<Eigen::VectorXd> constrained_lstsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& y,
                                                 const Eigen::MatrixXd& C,
                                                 const Eigen::VectorXd& d) {
  const Eigen::Index n = A.cols();
  Eigen::VectorXd c_part = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd null_basis = Eigen::MatrixXd::Identity(n, n);
  if (C.rows() > 0) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(C.transpose());
    const Eigen::MatrixXd Q = qr.householderQ();
    const Eigen::Index m = C.rows();
    const Eigen::MatrixXd R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    // C = R^T Q1^T, so c_part = Q1 R^-T d.
    const Eigen::VectorXd w = R.transpose().triangularView<Eigen::Lower>().solve(d);
    c_part = Q.leftCols(m) * w;
    null_basis = Q.rightCols(n - m);
  }
  if (null_basis.cols() == 0) return c_part;
  const Eigen::MatrixXd AN = A * null_basis;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(AN);
  qr.setThreshold(1e-10);
  if (qr.rank() < AN.cols()) return std::nullopt;
  const Eigen::VectorXd z = qr.solve(y - A * c_part);
  return Eigen::VectorXd(c_part + null_basis * z);
}

/// Convert local coefficients in tau = (t - t0)/h, ordered [c3, c2, c1, c0],
/// into coefficients of the absolute-time cubic.
std::array<double, 4> to_absolute(const Eigen::Vector4d& c, double t0, double h) {
  const double s = 1.0 / h;
  const double q = -t0 * s;
  const double c3 = c(0), c2 = c(1), c1 = c(2), c0 = c(3);
  return {c3 * s * s * s, 3.0 * c3 * s * s * q + c2 * s * s,
          3.0 * c3 * s * q * q + 2.0 * c2 * s * q + c1 * s, c3 * q * q * q + c2 * q * q + c1 * q + c0};
}

}  // namespace

namespace {

struct LocalDesign {
  Eigen::MatrixXd A;
  Eigen::VectorXd y;
};

/// Rows [tau^3, tau^2, tau, 1] for the centers of segment j.
LocalDesign local_design(const WindowCenters& centers, const Segmentation& seg, std::size_t j) {
  const double t0 = seg.boundaries_s[j];
  const double h = seg.boundaries_s[j + 1] - t0;
  const auto& tc = centers.time_s[j];
  const auto& yc = centers.value[j];
  if (tc.size() != yc.size()) throw IndexedError("center times and values differ in length", j);
  const Eigen::Index n = static_cast<Eigen::Index>(tc.size());
  LocalDesign d{Eigen::MatrixXd(n, 4), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double tau = (tc[static_cast<std::size_t>(i)] - t0) / h;
    d.A.row(i) << tau * tau * tau, tau * tau, tau, 1.0;
    d.y(i) = yc[static_cast<std::size_t>(i)];
  }
  return d;
}

CubicSchedule fit_sequential(const WindowCenters& centers, const Segmentation& seg) {
  CubicSchedule out;
  double boundary_value = 0.0;
  double boundary_slope = 0.0;  // d/dt in absolute time
  for (std::size_t j = 0; j < seg.segment_count(); ++j) {
    const double t0 = seg.boundaries_s[j];
    const double h = seg.boundaries_s[j + 1] - t0;
    const LocalDesign ld = local_design(centers, seg, j);
    const Eigen::Index n = ld.A.rows();

    Eigen::MatrixXd C(0, 4);
    Eigen::VectorXd d(0);
    if (j == 0) {
      if (n < 4) throw IndexedError("first segment needs at least 4 window centers", j);
    } else {
      const bool drop_cubic = n < 4;
      C.resize(drop_cubic ? 3 : 2, 4);
      d.resize(C.rows());
      C.row(0) << 0, 0, 0, 1;
      d(0) = boundary_value;
      C.row(1) << 0, 0, 1, 0;
      d(1) = boundary_slope * h;
      if (drop_cubic) {
        C.row(2) << 1, 0, 0, 0;
        d(2) = 0.0;
      }
      if (n < 4 - C.rows()) throw IndexedError("too few window centers for constrained segment", j);
    }

    const auto sol = constrained_lstsq(ld.A, ld.y, C, d);
    if (!sol) throw IndexedError("rank-deficient cubic regression", j);
    const Eigen::Vector4d c = *sol;

    CubicSegment s;
    s.t_start = t0;
    s.t_end = seg.boundaries_s[j + 1];
    s.a = to_absolute(c, t0, h);
    out.segments.push_back(s);
    out.residual_norm.push_back((ld.A * c - ld.y).norm());

    // Evaluate the boundary in local coordinates to avoid cancellation.
    boundary_value = c(0) + c(1) + c(2) + c(3);
    boundary_slope = (3.0 * c(0) + 2.0 * c(1) + c(2)) / h;
  }
  return out;
}

CubicSchedule fit_joint(const WindowCenters& centers, const Segmentation& seg) {
  const std::size_t n_seg = seg.segment_count();
  std::vector<LocalDesign> designs;
  Eigen::Index rows = 0;
  for (std::size_t j = 0; j < n_seg; ++j) {
    designs.push_back(local_design(centers, seg, j));
    rows += designs.back().A.rows();
  }
  if (designs[0].A.rows() < 4) throw IndexedError("first segment needs at least 4 window centers", 0);

  const Eigen::Index cols = static_cast<Eigen::Index>(4 * n_seg);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::VectorXd y(rows);
  std::vector<Eigen::RowVectorXd> cons;
  Eigen::Index r = 0;
  for (std::size_t j = 0; j < n_seg; ++j) {
    const Eigen::Index col = static_cast<Eigen::Index>(4 * j);
    const Eigen::Index n = designs[j].A.rows();
    A.block(r, col, n, 4) = designs[j].A;
    y.segment(r, n) = designs[j].y;
    r += n;
    if (n < 4) {
      if (n < 2) throw IndexedError("too few window centers for constrained segment", j);
      Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(cols);
      c(col) = 1.0;
      cons.push_back(c);
    }
    if (j == 0) continue;
    // Value and slope at the end of segment j-1 equal those at the start of j.
    const double h_prev = seg.boundaries_s[j] - seg.boundaries_s[j - 1];
    const double h = seg.boundaries_s[j + 1] - seg.boundaries_s[j];
    const Eigen::Index prev = col - 4;
    Eigen::RowVectorXd value = Eigen::RowVectorXd::Zero(cols);
    value.segment(prev, 4) << 1, 1, 1, 1;
    value(col + 3) = -1.0;
    Eigen::RowVectorXd slope = Eigen::RowVectorXd::Zero(cols);
    slope.segment(prev, 4) << 3.0 / h_prev, 2.0 / h_prev, 1.0 / h_prev, 0.0;
    slope(col + 2) = -1.0 / h;
    cons.push_back(value);
    cons.push_back(slope);
  }
  Eigen::MatrixXd C(static_cast<Eigen::Index>(cons.size()), cols);
  for (std::size_t i = 0; i < cons.size(); ++i) C.row(static_cast<Eigen::Index>(i)) = cons[i];
  const Eigen::VectorXd d = Eigen::VectorXd::Zero(C.rows());

  const auto sol = constrained_lstsq(A, y, C, d);
  if (!sol) {
    // Name the first segment that is singular on its own.
    for (std::size_t j = 0; j < n_seg; ++j) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(designs[j].A);
      qr.setThreshold(1e-10);
      if (qr.rank() < std::min<Eigen::Index>(designs[j].A.rows(), 4)) {
        throw IndexedError("rank-deficient cubic regression", j);
      }
    }
    throw IndexedError("rank-deficient cubic regression", n_seg - 1);
  }

  CubicSchedule out;
  for (std::size_t j = 0; j < n_seg; ++j) {
    const Eigen::Vector4d c = sol->segment(static_cast<Eigen::Index>(4 * j), 4);
    const double t0 = seg.boundaries_s[j];
    CubicSegment s;
    s.t_start = t0;
    s.t_end = seg.boundaries_s[j + 1];
    s.a = to_absolute(c, t0, s.t_end - t0);
    out.segments.push_back(s);
    out.residual_norm.push_back((designs[j].A * c - designs[j].y).norm());
  }
  return out;
}

}  // namespace

CubicSchedule fit_schedule(const WindowCenters& centers, const Segmentation& seg, double floor,
                           FitMethod method) {
  seg.validate();
  if (centers.time_s.size() != seg.segment_count() || centers.value.size() != seg.segment_count()) {
    throw ConfigError("window centers do not match the segmentation");
  }
  // Every segment's own design must have full rank (distinct center times);
  // the boundary constraints would otherwise hide a degenerate segment.
  for (std::size_t j = 0; j < seg.segment_count(); ++j) {
    const LocalDesign ld = local_design(centers, seg, j);
    const Eigen::Index n = ld.A.rows();
    if (n == 0) continue;  // reported by the fitter with its own message
    const Eigen::MatrixXd cols = n >= 4 ? ld.A : ld.A.rightCols(3);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(cols);
    qr.setThreshold(1e-10);
    if (qr.rank() < std::min<Eigen::Index>(n, cols.cols())) {
      throw IndexedError("rank-deficient cubic regression (duplicated center times?)", j);
    }
  }
  CubicSchedule out =
      method == FitMethod::Joint ? fit_joint(centers, seg) : fit_sequential(centers, seg);
  out.floor = floor;
  return out;
}

CubicSegment hermite_segment(double t0, double t1, double v0, double v1, double s0, double s1) {
  if (!(t1 > t0)) throw ConfigError("hermite segment needs t1 > t0");
  const double h = t1 - t0;
  // Local tau in [0, 1]: c0 = v0, c1 = h s0, then match value and slope at 1.
  const double c0 = v0, c1 = h * s0;
  const double c3 = h * (s0 + s1) - 2.0 * (v1 - v0);
  const double c2 = 3.0 * (v1 - v0) - h * (2.0 * s0 + s1);
  CubicSegment s;
  s.t_start = t0;
  s.t_end = t1;
  s.a = to_absolute(Eigen::Vector4d(c3, c2, c1, c0), t0, h);
  return s;
}

CubicSchedule regress_component(const ErrorSampleSeries& series, const WindowConfig& cfg,
                                const Segmentation& seg, double bin_s, FitMethod method) {
  const auto variances = compute_error_variance(series, bin_s);
  const auto centers = window_representatives(variances, cfg, seg);
  return fit_schedule(centers, seg, kVarianceFloor, method);
}

}  // namespace gaitd
