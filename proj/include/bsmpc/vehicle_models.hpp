#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "bsmpc/core.hpp"

namespace bsmpc {

/// Continuous-time kinematic bicycle dynamics,
/// d/dt [x, y, phi, v, a, delta] = [v cos phi, v sin phi, v tan(delta)/L, a, jerk, steer_rate].
inline Vec6 bicycle_derivative(const EgoState& state, const ControlInput& input,
                               double wheelbase) {
  if (wheelbase <= 0.0) throw std::invalid_argument("bicycle_derivative: wheelbase must be > 0");
  if (!state.finite() || !input.finite())
    throw std::invalid_argument("bicycle_derivative: non-finite input");
  if (std::abs(state.delta) >= M_PI / 2.0)
    throw std::invalid_argument("bicycle_derivative: |delta| must be < pi/2");
  Vec6 dot;
  dot << state.v * std::cos(state.phi), state.v * std::sin(state.phi),
      state.v * std::tan(state.delta) / wheelbase, state.a, input.jerk, input.steer_rate;
  return dot;
}

/// One explicit Euler step of the bicycle model.
inline EgoState euler_step(const EgoState& state, const ControlInput& input, double dt,
                           double wheelbase) {
  if (dt <= 0.0) throw std::invalid_argument("euler_step: dt must be > 0");
  return EgoState::from_vec(state.vec() + bicycle_derivative(state, input, wheelbase) * dt);
}

/// Jacobians of the discrete map f_d(xi,u) = xi + f(xi,u) dt.
inline void bicycle_jacobians(const EgoState& s, double dt, double wheelbase, Mat6& A, Mat62& B) {
  const double cphi = std::cos(s.phi), sphi = std::sin(s.phi);
  const double cd = std::cos(s.delta);
  Mat6 J = Mat6::Zero();
  J(0, 2) = -s.v * sphi;
  J(0, 3) = cphi;
  J(1, 2) = s.v * cphi;
  J(1, 3) = sphi;
  J(2, 3) = std::tan(s.delta) / wheelbase;
  J(2, 5) = s.v / (wheelbase * cd * cd);
  J(3, 4) = 1.0;
  A = Mat6::Identity() + J * dt;
  B = Mat62::Zero();
  B(4, 0) = dt;
  B(5, 1) = dt;
}

/// Discrete LQR gain with the matrices it stabilizes. The gain is stored
/// such that u = K (x - x_ref) is the stabilizing feedback (A + B K stable).
struct LQRGain {
  Eigen::MatrixXd K;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
};

/// Fixed-point iteration on the discrete algebraic Riccati equation.
inline Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                  const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                                  double tol = 1e-10, int max_iter = 10000) {
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd BtP = B.transpose() * P;
    const Eigen::MatrixXd G = (R + BtP * B).ldlt().solve(BtP * A);
    const Eigen::MatrixXd Pn = Q + A.transpose() * P * A - A.transpose() * P * B * G;
    const double diff = (Pn - P).cwiseAbs().maxCoeff();
    P = 0.5 * (Pn + Pn.transpose());
    if (diff < tol) return P;
  }
  throw std::runtime_error("solve_dare: Riccati iteration did not converge");
}

inline LQRGain lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& state_weights, const Eigen::MatrixXd& input_weights,
                        double tol = 1e-10, int max_iter = 10000) {
  const Eigen::MatrixXd P = solve_dare(A, B, state_weights, input_weights, tol, max_iter);
  const Eigen::MatrixXd BtP = B.transpose() * P;
  LQRGain g;
  g.K = -(input_weights + BtP * B).ldlt().solve(BtP * A);
  g.A = A;
  g.B = B;
  return g;
}

/// Zero-order-hold discretization of two decoupled triple integrators
/// (position, velocity, acceleration per axis; jerk input per axis).
inline Mat6 pointmass_A(double dt) {
  Mat6 A = Mat6::Identity();
  for (int base : {0, 3}) {
    A(base, base + 1) = dt;
    A(base, base + 2) = 0.5 * dt * dt;
    A(base + 1, base + 2) = dt;
  }
  return A;
}

inline Mat62 pointmass_B(double dt) {
  Mat62 B = Mat62::Zero();
  for (int axis : {0, 1}) {
    const int base = 3 * axis;
    B(base, axis) = dt * dt * dt / 6.0;
    B(base + 1, axis) = 0.5 * dt * dt;
    B(base + 2, axis) = dt;
  }
  return B;
}

/// Point-mass LQR weights. The defaults give well-damped maneuver tracking;
/// longitudinal position carries a small weight so the closed loop is a
/// strict contraction.
struct PointMassWeights {
  Vec6 state = (Vec6() << 0.1, 4.0, 1.0, 4.0, 2.0, 1.0).finished();
  Vec2 input = Vec2(1.0, 1.0);
};

inline LQRGain pointmass_lqr(double dt, const PointMassWeights& w = PointMassWeights{}) {
  return lqr_gain(pointmass_A(dt), pointmass_B(dt), w.state.asDiagonal(), w.input.asDiagonal());
}

/// Maneuver reference at step k: s integrates v_ref from the initial s,
/// lateral target is an absolute coordinate, reference accelerations zero.
inline Vec6 maneuver_reference(double s0, double v_ref, double d_target, int k, double dt) {
  Vec6 r;
  r << s0 + v_ref * k * dt, v_ref, 0.0, d_target, 0.0, 0.0;
  return r;
}

/// Closed-loop rollout x_{k+1} = A x_k + B K (x_k - x_ref_k).
/// Returns horizon+1 states including x0. d_target is absolute lateral.
inline std::vector<PointMassState> pointmass_rollout(const PointMassState& x0, double v_ref,
                                                     double d_target, const LQRGain& gain,
                                                     int horizon, double dt) {
  if (horizon < 1) throw std::invalid_argument("pointmass_rollout: horizon must be >= 1");
  std::vector<PointMassState> out;
  out.reserve(horizon + 1);
  out.push_back(x0);
  Vec6 x = x0.vec();
  for (int k = 0; k < horizon; ++k) {
    const Vec6 ref = maneuver_reference(x0.s, v_ref, d_target, k, dt);
    const Vec2 u = gain.K * (x - ref);
    x = gain.A * x + gain.B * u;
    out.push_back(PointMassState::from_vec(x));
  }
  return out;
}

inline std::vector<PointMassState> pointmass_rollout(const PointMassState& x0, const Maneuver& m,
                                                     const Road& road, const LQRGain& gain,
                                                     int horizon, double dt) {
  const double d_target = road.lane(m.lane).center_y + m.d_ref;
  return pointmass_rollout(x0, m.v_ref, d_target, gain, horizon, dt);
}

/// EgoState -> lane-frame point mass (straight lanes: s = x, d = y).
inline PointMassState to_pointmass(const EgoState& e, double wheelbase) {
  const double cphi = std::cos(e.phi), sphi = std::sin(e.phi);
  const double yaw_rate = e.v * std::tan(e.delta) / wheelbase;
  PointMassState p;
  p.s = e.x;
  p.d = e.y;
  p.s_dot = e.v * cphi;
  p.d_dot = e.v * sphi;
  p.s_ddot = e.a * cphi - e.v * yaw_rate * sphi;
  p.d_ddot = e.a * sphi + e.v * yaw_rate * cphi;
  return p;
}

/// Inverse of to_pointmass for v > 0.
inline EgoState to_ego(const PointMassState& p, double wheelbase) {
  EgoState e;
  e.x = p.s;
  e.y = p.d;
  e.v = std::hypot(p.s_dot, p.d_dot);
  e.phi = std::atan2(p.d_dot, p.s_dot);
  if (e.v > 1e-9) {
    e.a = (p.s_dot * p.s_ddot + p.d_dot * p.d_ddot) / e.v;
    const double yaw_rate = (p.s_dot * p.d_ddot - p.d_dot * p.s_ddot) / (e.v * e.v);
    e.delta = std::atan(wheelbase * yaw_rate / e.v);
  } else {
    e.a = p.s_ddot;
    e.delta = 0.0;
  }
  return e;
}

}  // namespace bsmpc
