#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsmpc {

using Vec2 = Eigen::Vector2d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat62 = Eigen::Matrix<double, 6, 2>;
using Mat26 = Eigen::Matrix<double, 2, 6>;

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return m.allFinite();
}

/// AV state for the kinematic bicycle model: position, yaw, speed,
/// acceleration and steering angle.
struct EgoState {
  double x = 0.0;      // longitudinal position [m]
  double y = 0.0;      // lateral position [m]
  double phi = 0.0;    // yaw angle [rad]
  double v = 0.0;      // speed [m/s]
  double a = 0.0;      // acceleration [m/s^2]
  double delta = 0.0;  // steering angle [rad]

  Vec6 vec() const {
    Vec6 out;
    out << x, y, phi, v, a, delta;
    return out;
  }
  static EgoState from_vec(const Vec6& v6) {
    return EgoState{v6(0), v6(1), v6(2), v6(3), v6(4), v6(5)};
  }
  bool finite() const { return vec().allFinite(); }
};

/// Planner control input: jerk and steering rate.
struct ControlInput {
  double jerk = 0.0;        // [m/s^3]
  double steer_rate = 0.0;  // [rad/s]

  Vec2 vec() const { return Vec2(jerk, steer_rate); }
  static ControlInput from_vec(const Vec2& v2) { return ControlInput{v2(0), v2(1)}; }
  bool finite() const { return std::isfinite(jerk) && std::isfinite(steer_rate); }
};

/// Decoupled point-mass state in the lane frame (straight highway, so the
/// lane frame coincides with the global frame up to the lateral offset).
struct PointMassState {
  double s = 0.0;
  double s_dot = 0.0;
  double s_ddot = 0.0;
  double d = 0.0;
  double d_dot = 0.0;
  double d_ddot = 0.0;

  Vec6 vec() const {
    Vec6 out;
    out << s, s_dot, s_ddot, d, d_dot, d_ddot;
    return out;
  }
  static PointMassState from_vec(const Vec6& v6) {
    return PointMassState{v6(0), v6(1), v6(2), v6(3), v6(4), v6(5)};
  }
  Vec2 pos() const { return Vec2(s, d); }
  bool finite() const { return vec().allFinite(); }
};

/// High-level maneuver: target lane, target speed and lateral offset from
/// the target lane centerline.
struct Maneuver {
  int lane = 0;
  double v_ref = 0.0;  // [m/s]
  double d_ref = 0.0;  // offset from lane centerline [m]

  bool operator==(const Maneuver& o) const {
    return lane == o.lane && v_ref == o.v_ref && d_ref == o.d_ref;
  }
};

struct LaneGeometry {
  int id = 0;
  double center_y = 0.0;   // [m]
  double width = 3.5;      // [m]
  double speed_limit = 0;  // [m/s]
};

/// Straight multi-lane highway. Lanes are stored sorted by center_y.
class Road {
 public:
  Road() = default;
  explicit Road(std::vector<LaneGeometry> lanes) : lanes_(std::move(lanes)) {
    std::sort(lanes_.begin(), lanes_.end(),
              [](const LaneGeometry& a, const LaneGeometry& b) { return a.center_y < b.center_y; });
    for (const auto& l : lanes_) {
      if (l.width <= 0.0) throw std::invalid_argument("lane width must be positive");
      if (l.speed_limit <= 0.0) throw std::invalid_argument("lane speed limit must be positive");
    }
    for (size_t i = 1; i < lanes_.size(); ++i) {
      const double gap = lanes_[i].center_y - lanes_[i - 1].center_y;
      if (gap + 1e-9 < 0.5 * (lanes_[i].width + lanes_[i - 1].width))
        throw std::invalid_argument("lanes overlap");
    }
  }

  const std::vector<LaneGeometry>& lanes() const { return lanes_; }
  size_t size() const { return lanes_.size(); }

  const LaneGeometry& lane(int id) const {
    for (const auto& l : lanes_)
      if (l.id == id) return l;
    throw std::invalid_argument("unknown lane id " + std::to_string(id));
  }

  bool has_lane(int id) const {
    for (const auto& l : lanes_)
      if (l.id == id) return true;
    return false;
  }

  bool contains(double y) const {
    for (const auto& l : lanes_)
      if (std::abs(y - l.center_y) <= 0.5 * l.width + 1e-9) return true;
    return false;
  }

  /// Lane whose centerline is closest to y. Throws off-road.
  const LaneGeometry& lane_at(double y) const {
    if (!contains(y)) throw std::invalid_argument("position off road: y=" + std::to_string(y));
    const LaneGeometry* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& l : lanes_) {
      const double dd = std::abs(y - l.center_y);
      if (dd < best_d) {
        best_d = dd;
        best = &l;
      }
    }
    return *best;
  }

  /// Lanes physically adjacent (by sorted order) to the given lane.
  std::vector<int> adjacent(int id) const {
    std::vector<int> out;
    for (size_t i = 0; i < lanes_.size(); ++i) {
      if (lanes_[i].id != id) continue;
      if (i > 0) out.push_back(lanes_[i - 1].id);
      if (i + 1 < lanes_.size()) out.push_back(lanes_[i + 1].id);
    }
    return out;
  }

  double y_min() const { return lanes_.front().center_y - 0.5 * lanes_.front().width; }
  double y_max() const { return lanes_.back().center_y + 0.5 * lanes_.back().width; }

 private:
  std::vector<LaneGeometry> lanes_;
};

/// Shared vehicle geometry (uniform fleet).
struct VehicleParams {
  double wheelbase = 2.7;  // [m]
  double length = 4.5;     // [m]
  double width = 1.8;      // [m]

  double half_length() const { return 0.5 * length; }
  double half_width() const { return 0.5 * width; }
};

}  // namespace bsmpc
