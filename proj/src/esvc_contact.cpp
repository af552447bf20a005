#include "gaitd/esvc_contact.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace gaitd {

namespace {

constexpr double kPi = std::numbers::pi;

// 7-point Gauss-Legendre rule on [-1, 1].
constexpr std::array<double, 7> kGlNodes{0.0,
                                         -0.4058451513773971669066064,
                                         0.4058451513773971669066064,
                                         -0.7415311855993944398638648,
                                         0.7415311855993944398638648,
                                         -0.9491079123427585245261897,
                                         0.9491079123427585245261897};
constexpr std::array<double, 7> kGlWeights{0.4179591836734693877551020,
                                           0.3818300505051189449503698,
                                           0.3818300505051189449503698,
                                           0.2797053914892766679014678,
                                           0.2797053914892766679014678,
                                           0.1294849661688696932706114,
                                           0.1294849661688696932706114};

template <typename F>
double gauss_legendre(const F& f, double lo, double hi) {
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  double acc = 0.0;
  for (std::size_t i = 0; i < kGlNodes.size(); ++i) acc += kGlWeights[i] * f(mid + half * kGlNodes[i]);
  return acc * half;
}

template <typename F>
double adaptive_gl(const F& f, double lo, double hi, double tol, double whole, int depth) {
  const double mid = 0.5 * (lo + hi);
  const double left = gauss_legendre(f, lo, mid);
  const double right = gauss_legendre(f, mid, hi);
  if (depth <= 0 || std::abs(left + right - whole) <= tol) return left + right;
  return adaptive_gl(f, lo, mid, 0.5 * tol, left, depth - 1) +
         adaptive_gl(f, mid, hi, 0.5 * tol, right, depth - 1);
}

/// Third derivative of the arc-length integrand, used for the Hermite remainder.
double speed_third_derivative(const EllipseSegment& seg, double theta) {
  const double A = 0.5 * (seg.a * seg.a + seg.b * seg.b);
  const double B = 0.5 * (seg.b * seg.b - seg.a * seg.a);
  const double s2 = std::sin(2.0 * theta);
  const double c2 = std::cos(2.0 * theta);
  const double g = A + B * c2;
  const double g1 = -2.0 * B * s2;
  const double g2 = -4.0 * B * c2;
  const double g3 = 8.0 * B * s2;
  const double f = std::sqrt(g);
  const double f1 = g1 / (2.0 * f);
  return g3 / (2.0 * f) - g2 * f1 / (2.0 * f * f) - g1 * g2 / (2.0 * f * f * f) +
         3.0 * g1 * g1 * f1 / (4.0 * f * f * f * f);
}

Eigen::Matrix3d rot_x(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d R;
  R << 1, 0, 0, 0, c, -s, 0, s, c;
  return R;
}

Eigen::Matrix3d rot_x_derivative(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d R;
  R << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return R;
}

Vec3 lift(const Vec2& yz) { return {0.0, yz(0), yz(1)}; }

}  // namespace

// ---------------------------------------------------------------------------
// EllipseSegment

Vec2 EllipseSegment::point(double theta) const {
  return center + Vec2(a * std::cos(theta), b * std::sin(theta));
}

Vec2 EllipseSegment::tangent(double theta) const {
  return {-a * std::sin(theta), b * std::cos(theta)};
}

double EllipseSegment::speed(double theta) const {
  const double s = std::sin(theta), c = std::cos(theta);
  return std::sqrt(a * a * s * s + b * b * c * c);
}

double EllipseSegment::tangent_angle(double theta) const {
  return std::atan2(b * std::cos(theta), -a * std::sin(theta));
}

double EllipseSegment::theta_at_roll(double roll) const {
  return -kPi / 2 + std::atan((a / b) * std::tan(roll));
}

double EllipseSegment::dtheta_droll(double roll) const {
  const double k = a / b;
  const double t = std::tan(roll);
  return k * (1.0 + t * t) / (1.0 + k * k * t * t);
}

double arc_length_exact(const EllipseSegment& seg, double theta0, double theta1) {
  if (!seg.contains_theta(theta0) || !seg.contains_theta(theta1)) {
    throw std::domain_error("arc angles outside the segment range");
  }
  if (theta0 == theta1) return 0.0;
  const double sign = theta1 > theta0 ? 1.0 : -1.0;
  const double lo = std::min(theta0, theta1), hi = std::max(theta0, theta1);
  auto f = [&seg](double t) { return seg.speed(t); };
  return sign * adaptive_gl(f, lo, hi, 1e-13, gauss_legendre(f, lo, hi), 40);
}

// ---------------------------------------------------------------------------
// ArcLengthApproximant

ArcLengthApproximant::ArcLengthApproximant(const EllipseSegment& seg, int pieces) : seg_(seg) {
  if (pieces < 1) throw ConfigError("arc approximant needs at least one piece");
  if (!(seg.theta1 > seg.theta0)) throw ConfigError("segment theta range is empty");
  const double h = (seg.theta1 - seg.theta0) / pieces;
  for (int i = 0; i <= pieces; ++i) {
    const double th = i == pieces ? seg.theta1 : seg.theta0 + i * h;
    knots_.push_back(th);
    knot_length_.push_back(i == 0 ? 0.0 : arc_length_exact(seg, seg.theta0, th));
    knot_slope_.push_back(seg.speed(th));
  }
  // Hermite remainder: |S - H| <= max|S''''| h^4 / 384, with S'''' = speed'''.
  constexpr int kSamples = 256;
  constexpr double kMargin = 1.25;
  for (int i = 0; i < pieces; ++i) {
    double peak = 0.0;
    for (int k = 0; k <= kSamples; ++k) {
      const double th = knots_[i] + (knots_[i + 1] - knots_[i]) * k / kSamples;
      peak = std::max(peak, std::abs(speed_third_derivative(seg, th)));
    }
    const double hi = knots_[i + 1] - knots_[i];
    piece_bound_.push_back(kMargin * peak * hi * hi * hi * hi / 384.0 + 1e-15);
  }
}

std::size_t ArcLengthApproximant::piece_of(double theta) const {
  if (!seg_.contains_theta(theta)) throw std::domain_error("angle outside the segment range");
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), theta);
  const std::size_t idx = it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  return std::min(idx, piece_bound_.size() - 1);
}

double ArcLengthApproximant::cumulative(double theta) const {
  const std::size_t i = piece_of(theta);
  const double h = knots_[i + 1] - knots_[i];
  const double x = (theta - knots_[i]) / h;
  const double x2 = x * x, x3 = x2 * x;
  return (2 * x3 - 3 * x2 + 1) * knot_length_[i] + (x3 - 2 * x2 + x) * h * knot_slope_[i] +
         (-2 * x3 + 3 * x2) * knot_length_[i + 1] + (x3 - x2) * h * knot_slope_[i + 1];
}

double ArcLengthApproximant::cumulative_derivative(double theta) const {
  const std::size_t i = piece_of(theta);
  const double h = knots_[i + 1] - knots_[i];
  const double x = (theta - knots_[i]) / h;
  const double x2 = x * x;
  return ((6 * x2 - 6 * x) * knot_length_[i] + (-6 * x2 + 6 * x) * knot_length_[i + 1]) / h +
         (3 * x2 - 4 * x + 1) * knot_slope_[i] + (3 * x2 - 2 * x) * knot_slope_[i + 1];
}

double ArcLengthApproximant::bound_at(double theta) const {
  for (double k : knots_) {
    if (theta == k) return 0.0;
  }
  return piece_bound_[piece_of(theta)];
}

ArcApprox ArcLengthApproximant::between(double theta0, double theta1) const {
  return {cumulative(theta1) - cumulative(theta0), bound_at(theta0) + bound_at(theta1)};
}

ArcApprox arc_length_approx(const EllipseSegment& seg, double theta0, double theta1) {
  if (!seg.contains_theta(theta0) || !seg.contains_theta(theta1)) {
    throw std::domain_error("arc angles outside the segment range");
  }
  return ArcLengthApproximant(seg).between(theta0, theta1);
}

// ---------------------------------------------------------------------------
// EsvcProfile

EsvcProfile::EsvcProfile(std::vector<EllipseSegment> segments, double roll_min, double roll_max,
                         int approx_pieces)
    : segments_(std::move(segments)), roll_min_(roll_min), roll_max_(roll_max) {
  if (segments_.empty()) throw ConfigError("ESVC profile needs at least one segment");
  for (std::size_t j = 0; j < segments_.size(); ++j) {
    const auto& s = segments_[j];
    if (!(s.a > 0.0) || !(s.b > 0.0)) throw IndexedError("non-positive semi-axis", j);
    if (!(s.theta1 > s.theta0) || s.theta0 <= -kPi || s.theta1 >= 0.0) {
      throw IndexedError("segment theta range must be increasing inside (-pi, 0)", j);
    }
    approximants_.emplace_back(s, approx_pieces);
    full_length_.push_back(arc_length_exact(s, s.theta0, s.theta1));
  }
  validate();
  home_ = segment_for_roll(0.0);
}

EsvcProfile EsvcProfile::default_profile() {
  constexpr double kSoleDepth = 0.04;  // foot upper center to lowest sole point
  constexpr double kMidEdge = 0.15;    // roll at the mid/edge junctions
  constexpr double kRollLimit = 0.45;

  EllipseSegment mid;
  mid.a = 0.12;
  mid.b = 0.03;
  mid.center = Vec2(0.0, -kSoleDepth + mid.b);
  mid.theta0 = mid.theta_at_roll(-kMidEdge);
  mid.theta1 = mid.theta_at_roll(kMidEdge);

  auto edge = [&](double sign) {
    EllipseSegment e;
    e.a = 0.04;
    e.b = 0.03;
    const double junction_roll = sign * kMidEdge;
    const double th_join = e.theta_at_roll(junction_roll);
    const Vec2 join_point = mid.point(mid.theta_at_roll(junction_roll));
    e.center = join_point - Vec2(e.a * std::cos(th_join), e.b * std::sin(th_join));
    if (sign > 0) {
      e.theta0 = th_join;
      e.theta1 = e.theta_at_roll(kRollLimit);
    } else {
      e.theta0 = e.theta_at_roll(-kRollLimit);
      e.theta1 = th_join;
    }
    return e;
  };
  return EsvcProfile({edge(-1.0), mid, edge(1.0)}, -kRollLimit, kRollLimit);
}

std::size_t EsvcProfile::segment_for_roll(double roll) const {
  constexpr double kTol = 1e-12;
  if (roll < roll_min_ - kTol || roll > roll_max_ + kTol) {
    throw std::domain_error("roll outside the profile range (foot edge reached)");
  }
  for (std::size_t j = 0; j < segments_.size(); ++j) {
    if (roll <= segments_[j].roll_max() + kTol) return j;
  }
  return segments_.size() - 1;
}

double EsvcProfile::g1_defect() const {
  double worst = 0.0;
  for (std::size_t j = 0; j + 1 < segments_.size(); ++j) {
    const auto& l = segments_[j];
    const auto& r = segments_[j + 1];
    worst = std::max(worst, (l.point(l.theta1) - r.point(r.theta0)).norm());
    worst = std::max(worst, std::abs(l.tangent_angle(l.theta1) - r.tangent_angle(r.theta0)));
  }
  return worst;
}

void EsvcProfile::validate() const {
  if (g1_defect() > 1e-9) throw ConfigError("ESVC segments are not G1-continuous");
  if (roll_min_ > 0.0 || roll_max_ < 0.0) throw ConfigError("roll range must contain 0");
  if (roll_min_ < segments_.front().roll_min() - 1e-12 ||
      roll_max_ > segments_.back().roll_max() + 1e-12) {
    throw ConfigError("roll range exceeds the profile's arcs");
  }
}

double EsvcProfile::rollover_exact(double roll) const {
  const std::size_t j = segment_for_roll(roll);
  const auto& home = segments_[home_];
  const double th_ref = home.theta_at_roll(0.0);
  const double th = segments_[j].theta_at_roll(roll);
  if (j == home_) return arc_length_exact(home, th_ref, th);
  if (j > home_) {
    double d = arc_length_exact(home, th_ref, home.theta1);
    for (std::size_t k = home_ + 1; k < j; ++k) d += full_length_[k];
    return d + arc_length_exact(segments_[j], segments_[j].theta0, th);
  }
  double d = arc_length_exact(home, home.theta0, th_ref);
  for (std::size_t k = j + 1; k < home_; ++k) d += full_length_[k];
  return -(d + arc_length_exact(segments_[j], th, segments_[j].theta1));
}

ArcApprox EsvcProfile::rollover_approx(double roll) const {
  const std::size_t j = segment_for_roll(roll);
  const auto& home = approximants_[home_];
  const double th_ref = segments_[home_].theta_at_roll(0.0);
  const double th = segments_[j].theta_at_roll(roll);
  if (j == home_) return home.between(th_ref, th);
  const auto& seg_j = segments_[j];
  const auto& approx_j = approximants_[j];
  if (j > home_) {
    ArcApprox out = home.between(th_ref, segments_[home_].theta1);
    for (std::size_t k = home_ + 1; k < j; ++k) out.length += full_length_[k];
    const ArcApprox tail = approx_j.between(seg_j.theta0, th);
    return {out.length + tail.length, out.error_bound + tail.error_bound};
  }
  ArcApprox out = home.between(segments_[home_].theta0, th_ref);
  for (std::size_t k = j + 1; k < home_; ++k) out.length += full_length_[k];
  const ArcApprox tail = approx_j.between(th, seg_j.theta1);
  return {-(out.length + tail.length), out.error_bound + tail.error_bound};
}

double EsvcProfile::rollover_derivative(double roll, ContactMode mode) const {
  const std::size_t j = segment_for_roll(roll);
  const auto& seg = segments_[j];
  const double th = seg.theta_at_roll(roll);
  const double ds_dtheta =
      mode == ContactMode::Exact ? seg.speed(th) : approximants_[j].cumulative_derivative(th);
  return ds_dtheta * seg.dtheta_droll(roll);
}

// ---------------------------------------------------------------------------
// Transforms

ContactTransform contact_transform(const EsvcProfile& profile, const FootState& foot,
                                   ContactMode mode) {
  const double r = foot.roll;
  const std::size_t j = profile.segment_for_roll(r);
  const auto& seg = profile.segments()[j];
  const double th = seg.theta_at_roll(r);

  ContactTransform out;
  if (mode == ContactMode::Exact) {
    out.rollover = profile.rollover_exact(r);
  } else {
    const ArcApprox ap = profile.rollover_approx(r);
    out.rollover = ap.length;
    out.rollover_bound = ap.error_bound;
  }
  const double rollover_rate = profile.rollover_derivative(r, mode);

  // Foot orientation is a rotation by -roll about x.
  const Eigen::Matrix3d R = rot_x(-r);
  const Eigen::Matrix3d dR = -rot_x_derivative(-r);
  const Vec3 s = lift(seg.point(th));
  const Vec3 ds = lift(seg.tangent(th)) * seg.dtheta_droll(r);
  const Vec3 t = Vec3(0.0, out.rollover, 0.0) - R * s;
  const Vec3 dt = Vec3(0.0, rollover_rate, 0.0) - dR * s - R * ds;

  out.T.setIdentity();
  out.T.topLeftCorner<3, 3>() = R;
  out.T.topRightCorner<3, 1>() = t;
  out.T_dot.setZero();
  out.T_dot.topLeftCorner<3, 3>() = dR * foot.roll_rate;
  out.T_dot.topRightCorner<3, 1>() = dt * foot.roll_rate;
  out.contact_point = Vec3(0.0, out.rollover, 0.0);
  return out;
}

BodyState body_state_from_joints(const BodyState& internal_state, const ContactTransform& transform) {
  const Eigen::Matrix3d R = transform.T.topLeftCorner<3, 3>();
  const Vec3 t = transform.T.topRightCorner<3, 1>();
  const Eigen::Matrix3d dR = transform.T_dot.topLeftCorner<3, 3>();
  const Vec3 dt = transform.T_dot.topRightCorner<3, 1>();
  BodyState out;
  out.p = R * internal_state.p + t;
  out.v = dR * internal_state.p + dt + R * internal_state.v;
  return out;
}

BodyState joints_from_body_state(const BodyState& contact_state, const ContactTransform& transform) {
  const Eigen::Matrix3d R = transform.T.topLeftCorner<3, 3>();
  const Vec3 t = transform.T.topRightCorner<3, 1>();
  const Eigen::Matrix3d dR = transform.T_dot.topLeftCorner<3, 3>();
  const Vec3 dt = transform.T_dot.topRightCorner<3, 1>();
  BodyState out;
  out.p = R.transpose() * (contact_state.p - t);
  out.v = R.transpose() * (contact_state.v - dR * out.p - dt);
  return out;
}

}  // namespace gaitd
