#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <vector>

#include "bsmpc/scenario_engine.hpp"
#include "bsmpc/vehicle_models.hpp"

namespace bsmpc {

struct ManeuverPlannerConfig {
  double w_speed = 1.0;        // W_v: deviation from lane speed limit
  double w_lateral = 0.5;      // W_d: deviation from lane centerline
  double w_lon_accel = 0.1;    // penalty on longitudinal acceleration
  double w_lat_accel = 0.1;    // penalty on lateral acceleration
  double margin_lon = 2.0;     // [m]
  double margin_lat = 0.5;     // [m]
  double headway = 0.5;        // [s], velocity-proportional longitudinal margin
  double v_grid = 0.5;         // [m/s]
  double d_grid = 0.25;        // [m]
};

struct ScoredManeuver {
  Maneuver maneuver;
  double ref_cost = 0.0;  // target-selection objective
  double cost = 0.0;      // full maneuver cost (accel terms + ref_cost)
  bool feasible = false;
  std::vector<PointMassState> rollout;
};

struct ScenarioDecision {
  int scenario_index = -1;
  std::optional<ScoredManeuver> best;
  std::vector<ScoredManeuver> backups;  // feasible alternatives, cost-ordered

  bool feasible() const { return best.has_value(); }
};

/// Current lane plus physically adjacent lanes.
inline std::vector<int> reachable_lanes(const EgoState& ego, const Road& road) {
  const LaneGeometry& cur = road.lane_at(ego.y);  // throws off-road
  std::vector<int> out{cur.id};
  for (int adj : road.adjacent(cur.id)) out.push_back(adj);
  return out;
}

namespace detail {

/// Rectangle-overlap collision test between the ego rollout point and one
/// SV nominal position, with longitudinal/lateral safety margins.
inline bool footprints_overlap(double ego_s, double ego_d, double ego_sdot, double sv_s,
                               double sv_d, const VehicleParams& vp,
                               const ManeuverPlannerConfig& cfg) {
  const double lon_gap = vp.length + cfg.margin_lon + cfg.headway * std::max(ego_sdot, 0.0);
  const double lat_gap = vp.width + cfg.margin_lat;
  return std::abs(ego_s - sv_s) < lon_gap && std::abs(ego_d - sv_d) < lat_gap;
}

/// Affine decomposition of the closed-loop rollout: the LQR recursion is
/// linear, so traj(v_ref, d_target) = base + v_ref * Rv + d_target * Rd.
struct AffineRollout {
  std::vector<Vec6> base, rv, rd;

  static AffineRollout build(const PointMassState& x0, const LQRGain& gain, int horizon,
                             double dt) {
    AffineRollout r;
    r.base.resize(horizon + 1);
    r.rv.assign(horizon + 1, Vec6::Zero());
    r.rd.assign(horizon + 1, Vec6::Zero());
    r.base[0] = x0.vec();
    const Mat6 Acl = gain.A + gain.B * gain.K;
    const Mat62 BK_B = gain.B;  // for clarity below
    for (int k = 0; k < horizon; ++k) {
      Vec6 ref0 = Vec6::Zero();
      ref0(0) = x0.s;
      Vec6 refv = Vec6::Zero();
      refv(0) = k * dt;
      refv(1) = 1.0;
      Vec6 refd = Vec6::Zero();
      refd(3) = 1.0;
      const Mat62& B = BK_B;
      const auto BK = [&](const Vec6& r6) { return B * (gain.K * r6); };
      r.base[k + 1] = Acl * r.base[k] - BK(ref0);
      r.rv[k + 1] = Acl * r.rv[k] - BK(refv);
      r.rd[k + 1] = Acl * r.rd[k] - BK(refd);
    }
    return r;
  }

  Vec6 at(int k, double v_ref, double d_target) const {
    return base[k] + v_ref * rv[k] + d_target * rd[k];
  }
};

}  // namespace detail

/// Maneuver cost: accumulated squared accelerations over k in [1,N] plus the
/// target-selection objective.
inline double maneuver_cost(const std::vector<PointMassState>& rollout, double ref_cost,
                            const ManeuverPlannerConfig& cfg) {
  double acc = 0.0;
  for (size_t k = 1; k < rollout.size(); ++k)
    acc += cfg.w_lon_accel * rollout[k].s_ddot * rollout[k].s_ddot +
           cfg.w_lat_accel * rollout[k].d_ddot * rollout[k].d_ddot;
  return acc + ref_cost;
}

/// Grid search for the collision-free (v_ref, d_ref) of one target lane.
/// Candidates are visited in ascending objective order, so the first
/// collision-free candidate is the grid optimum.
inline ScoredManeuver solve_maneuver_targets(
    const PointMassState& ego, int lane_id,
    const std::map<int, const PredictionMode*>& scenario_preds, const Road& road,
    const LQRGain& gain, int horizon, double dt, const VehicleParams& vp,
    const ManeuverPlannerConfig& cfg) {
  const LaneGeometry& lane = road.lane(lane_id);
  const double v_top = lane.speed_limit;
  const double d_max = std::max(0.0, 0.5 * lane.width - vp.half_width());

  struct Candidate {
    double v, d, obj;
  };
  std::vector<Candidate> grid;
  std::vector<double> d_values{0.0};
  for (double d = cfg.d_grid; d <= d_max + 1e-9; d += cfg.d_grid) {
    d_values.push_back(d);
    d_values.push_back(-d);
  }
  for (double v = v_top; v >= -1e-9; v -= cfg.v_grid) {
    const double vv = std::max(v, 0.0);
    for (double d : d_values) {
      const double dv = vv - v_top;
      grid.push_back({vv, d, cfg.w_speed * dv * dv + cfg.w_lateral * d * d});
    }
  }
  std::stable_sort(grid.begin(), grid.end(), [](const Candidate& a, const Candidate& b) {
    if (a.obj != b.obj) return a.obj < b.obj;
    if (std::abs(a.d) != std::abs(b.d)) return std::abs(a.d) < std::abs(b.d);
    if (a.d != b.d) return a.d > b.d;
    return a.v > b.v;
  });

  const auto affine = detail::AffineRollout::build(ego, gain, horizon, dt);
  for (const auto& c : grid) {
    const double d_target = lane.center_y + c.d;
    bool collision = false;
    for (int k = 1; k <= horizon && !collision; ++k) {
      const Vec6 x = affine.at(k, c.v, d_target);
      for (const auto& [sv_id, mode] : scenario_preds) {
        const auto& sv = mode->states[k];
        if (detail::footprints_overlap(x(0), x(3), x(1), sv.s, sv.d, vp, cfg)) {
          collision = true;
          break;
        }
      }
    }
    if (collision) continue;

    ScoredManeuver out;
    out.maneuver = Maneuver{lane_id, c.v, c.d};
    out.ref_cost = c.obj;
    out.feasible = true;
    out.rollout.reserve(horizon + 1);
    for (int k = 0; k <= horizon; ++k)
      out.rollout.push_back(PointMassState::from_vec(affine.at(k, c.v, d_target)));
    out.cost = maneuver_cost(out.rollout, out.ref_cost, cfg);
    return out;
  }

  ScoredManeuver infeasible;
  infeasible.maneuver = Maneuver{lane_id, v_top, 0.0};
  infeasible.feasible = false;
  infeasible.cost = std::numeric_limits<double>::infinity();
  return infeasible;
}

/// Evaluate every reachable lane for one scenario; the cheapest collision-free
/// maneuver wins, remaining candidates are kept as backups. Ties prefer the
/// current lane, then smaller |d_ref|, then the lower lane id.
inline ScenarioDecision plan_for_scenario(const EgoState& ego,
                                          const std::map<int, const PredictionMode*>& preds,
                                          const Road& road, const LQRGain& gain, int horizon,
                                          double dt, const VehicleParams& vp,
                                          const ManeuverPlannerConfig& cfg,
                                          int scenario_index = -1) {
  const int current_lane = road.lane_at(ego.y).id;
  const PointMassState ego_pm = to_pointmass(ego, vp.wheelbase);

  std::vector<ScoredManeuver> feasible;
  for (int lane : reachable_lanes(ego, road)) {
    ScoredManeuver sm = solve_maneuver_targets(ego_pm, lane, preds, road, gain, horizon, dt, vp, cfg);
    if (sm.feasible) feasible.push_back(std::move(sm));
  }
  std::stable_sort(feasible.begin(), feasible.end(),
                   [&](const ScoredManeuver& a, const ScoredManeuver& b) {
                     if (a.cost != b.cost) return a.cost < b.cost;
                     const bool ac = a.maneuver.lane == current_lane;
                     const bool bc = b.maneuver.lane == current_lane;
                     if (ac != bc) return ac;
                     if (std::abs(a.maneuver.d_ref) != std::abs(b.maneuver.d_ref))
                       return std::abs(a.maneuver.d_ref) < std::abs(b.maneuver.d_ref);
                     return a.maneuver.lane < b.maneuver.lane;
                   });

  ScenarioDecision out;
  out.scenario_index = scenario_index;
  if (!feasible.empty()) {
    out.best = feasible.front();
    out.backups.assign(feasible.begin() + 1, feasible.end());
  }
  return out;
}

}  // namespace bsmpc
