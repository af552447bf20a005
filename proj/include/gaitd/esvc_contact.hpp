// Rollover kinematics of an ellipse-based segmental varying-curvature foot in
// the coronal plane.
//
// Frames: O is the upper center of the support foot, C is a ground-fixed frame
// at the foot's touchdown reference with world-aligned axes. The sole is a
// chain of elliptical arcs; when the foot rolls by `roll` the contact point is
// the arc point whose tangent is horizontal, and the foot translates along the
// ground by the arc length rolled through (no slip). Coordinates are 3D with x
// sagittal; the transform acts on the (y, z) plane only.
#pragma once

#include "gaitd/types.hpp"

#include <numbers>
#include <vector>

namespace gaitd {

/// One elliptical arc of the sole, p(theta) = center + (a cos theta, b sin theta)
/// in the (y, z) plane of frame O. theta near -pi/2 is the bottom of the ellipse.
struct EllipseSegment {
  double a = 0.05;  ///< lateral semi-axis [m]
  double b = 0.05;  ///< vertical semi-axis [m]
  double theta0 = -std::numbers::pi / 2;
  double theta1 = -std::numbers::pi / 2;
  Vec2 center{0.0, 0.0};  ///< (lateral, vertical) offset in O [m]

  Vec2 point(double theta) const;
  Vec2 tangent(double theta) const;  ///< d point / d theta
  /// |d point / d theta|, the arc-length integrand sqrt(a^2 sin^2 + b^2 cos^2).
  double speed(double theta) const;
  /// Angle of the tangent above the lateral axis; equals the roll at which this
  /// point touches the ground.
  double tangent_angle(double theta) const;
  double theta_at_roll(double roll) const;
  double dtheta_droll(double roll) const;
  double roll_min() const { return tangent_angle(theta0); }
  double roll_max() const { return tangent_angle(theta1); }
  bool contains_theta(double theta, double tol = 1e-12) const {
    return theta >= theta0 - tol && theta <= theta1 + tol;
  }
};

/// Arc length of `seg` between theta0 and theta1 by adaptive Gauss-Legendre
/// quadrature (absolute tolerance 1e-12 m). Signed: negative when theta1 < theta0.
double arc_length_exact(const EllipseSegment& seg, double theta0, double theta1);

struct ArcApprox {
  double length = 0.0;
  double error_bound = 0.0;  ///< certified |approx - exact|
};

/// Elementary-function arc-length model: piecewise cubic Hermite in theta with
/// knots tabulated once per segment. Evaluation only uses sqrt, sin and cos.
class ArcLengthApproximant {
 public:
  explicit ArcLengthApproximant(const EllipseSegment& seg, int pieces = 4);

  /// Approximate arc length from the segment start to theta.
  double cumulative(double theta) const;
  /// d cumulative / d theta.
  double cumulative_derivative(double theta) const;
  /// Error bound at theta (zero at knots).
  double bound_at(double theta) const;
  ArcApprox between(double theta0, double theta1) const;
  const EllipseSegment& segment() const { return seg_; }

 private:
  std::size_t piece_of(double theta) const;

  EllipseSegment seg_;
  std::vector<double> knots_;
  std::vector<double> knot_length_;  // exact cumulative length at each knot
  std::vector<double> knot_slope_;
  std::vector<double> piece_bound_;
};

ArcApprox arc_length_approx(const EllipseSegment& seg, double theta0, double theta1);

struct FootState {
  double roll = 0.0;       ///< [rad], positive moves the contact toward +y
  double roll_rate = 0.0;  ///< [rad/s]
};

enum class ContactMode { Exact, Approx };

struct ContactTransform {
  Mat4 T = Mat4::Identity();      ///< maps O coordinates into C
  Mat4 T_dot = Mat4::Zero();      ///< time derivative of T
  double rollover = 0.0;          ///< contact displacement along +y from touchdown [m]
  double rollover_bound = 0.0;    ///< certified |approx - exact| of `rollover` (0 in exact mode)
  Vec3 contact_point = Vec3::Zero();  ///< contact location in C
};

class EsvcProfile {
 public:
  EsvcProfile() = default;
  EsvcProfile(std::vector<EllipseSegment> segments, double roll_min, double roll_max,
              int approx_pieces = 4);

  /// Three arcs (one flat middle arc, two more curved edge arcs) joined with
  /// shared tangents, spanning roll in [-0.45, 0.45] rad.
  static EsvcProfile default_profile();

  const std::vector<EllipseSegment>& segments() const { return segments_; }
  double roll_min() const { return roll_min_; }
  double roll_max() const { return roll_max_; }
  bool in_range(double roll) const { return roll >= roll_min_ && roll <= roll_max_; }

  std::size_t segment_for_roll(double roll) const;
  /// Signed exact ground displacement of the contact point for roll 0 -> roll.
  double rollover_exact(double roll) const;
  /// Elementary-function rollover with its certified error bound.
  ArcApprox rollover_approx(double roll) const;
  /// d rollover / d roll for either mode.
  double rollover_derivative(double roll, ContactMode mode) const;

  /// Max over the junctions of |position gap| and |tangent-angle gap|.
  double g1_defect() const;
  void validate() const;

 private:
  std::vector<EllipseSegment> segments_;
  std::vector<ArcLengthApproximant> approximants_;
  std::vector<double> full_length_;  // exact length of each segment
  double roll_min_ = 0.0;
  double roll_max_ = 0.0;
  std::size_t home_ = 0;  // segment containing roll 0
};

ContactTransform contact_transform(const EsvcProfile& profile, const FootState& foot,
                                   ContactMode mode);

struct BodyState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

/// Map a CoM state expressed in O into C with the block transform
/// [p; 1; v; 0] -> [[T, 0], [T_dot, T]] [p; 1; v; 0].
BodyState body_state_from_joints(const BodyState& internal_state, const ContactTransform& transform);

/// Exact inverse of body_state_from_joints.
BodyState joints_from_body_state(const BodyState& contact_state, const ContactTransform& transform);

}  // namespace gaitd
