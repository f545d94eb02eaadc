#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace placerec {

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to (-pi, pi]. The top of the interval is closed so that
// -pi and pi share the single representative pi.
inline double wrap_angle(double a) {
  if (!std::isfinite(a)) {
    throw std::domain_error("wrap_angle: non-finite input");
  }
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r <= 0.0) {
    r += 2.0 * kPi;
  }
  return r - kPi;
}

// Planar rigid-body pose. theta is kept wrapped to (-pi, pi] by every
// constructor and group operation.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double theta_)
      : x(x_), y(y_), theta(wrap_angle(theta_)) {}

  static Pose2 identity() { return {}; }

  Eigen::Vector3d vec() const { return {x, y, theta}; }

  static Pose2 from_vec(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
};

// Group action a (+) b.
inline Pose2 se2_compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta};
}

inline Pose2 se2_inverse(const Pose2& p) {
  const double c = std::cos(p.theta);
  const double s = std::sin(p.theta);
  return {-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.theta};
}

// a^-1 (+) b: the pose of b expressed in the frame of a, so that
// se2_compose(a, se2_relative(a, b)) == b.
inline Pose2 se2_relative(const Pose2& a, const Pose2& b) {
  return se2_compose(se2_inverse(a), b);
}

inline double position_distance(const Pose2& a, const Pose2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

inline double bearing_gap(const Pose2& a, const Pose2& b) {
  return std::abs(wrap_angle(a.theta - b.theta));
}

}  // namespace placerec
