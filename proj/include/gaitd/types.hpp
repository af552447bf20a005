// Shared vocabulary types for the gaitd estimator stack.
#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gaitd {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;

enum class Axis { X = 0, Y = 1, Z = 2 };
enum class Quantity { Position = 0, Velocity = 1 };

inline constexpr std::array<Axis, 3> kAxes{Axis::X, Axis::Y, Axis::Z};
inline constexpr std::array<Quantity, 2> kQuantities{Quantity::Position, Quantity::Velocity};

/// Default lower bound applied to every variance that feeds a fusion gain.
inline constexpr double kVarianceFloor = 1e-12;

/// Index into a 6-vector laid out as [px, py, pz, vx, vy, vz].
constexpr int state_index(Axis axis, Quantity q) {
  return static_cast<int>(q) * 3 + static_cast<int>(axis);
}

std::string_view to_string(Axis axis);
std::string_view to_string(Quantity q);
Axis axis_from_string(std::string_view s);
Quantity quantity_from_string(std::string_view s);

/// Invalid configuration or input data. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input rejected at a specific index (bin, segment, window).
class IndexedError : public std::invalid_argument {
 public:
  IndexedError(const std::string& what, std::size_t index)
      : std::invalid_argument(what + " (index " + std::to_string(index) + ")"), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Numerical breakdown inside a filter (singular innovation covariance, NaN state).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gaitd
