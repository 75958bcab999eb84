#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <vector>

#include "bsmpc/core.hpp"
#include "bsmpc/vehicle_models.hpp"

namespace bsmpc {

struct SVObservation {
  int sv_id = 0;
  PointMassState state;  // lane frame
  int t = 0;             // timestamp index
};

/// Stable mode identifiers so probabilities can be carried across steps.
enum class ModeKind : int {
  KeepCurrent = 0,
  KeepDecel = 1,  // KeepDecel + variant index for multiple variants
  ChangeLeft = 100,
  ChangeRight = 200,
};

/// One hypothesized SV intention: maneuver, probability, nominal trajectory
/// and position covariance sequence over the horizon.
struct PredictionMode {
  int id = 0;
  Maneuver maneuver;
  double mu = 0.0;
  std::vector<PointMassState> states;  // N+1 entries
  std::vector<Mat2> cov;               // N+1 position covariances

  Vec2 pos(int k) const { return states.at(k).pos(); }
};

struct MultiModalPrediction {
  int sv_id = 0;
  std::vector<PredictionMode> modes;

  const PredictionMode& mode_by_id(int id) const {
    for (const auto& m : modes)
      if (m.id == id) return m;
    throw std::invalid_argument("unknown mode id " + std::to_string(id));
  }
  const PredictionMode& most_likely() const {
    const PredictionMode* best = &modes.front();
    for (const auto& m : modes)
      if (m.mu > best->mu) best = &m;
    return *best;
  }
};

struct PredictorConfig {
  int decel_variants = 1;
  double decel_delta = 2.0;       // [m/s] per variant
  bool lane_changes = true;
  double obs_sigma = 0.1;         // [m] per position axis
  double vel_sigma = 0.1;         // [m/s] innovation noise per velocity axis
  double acc_sigma = 0.2;         // [m/s^2] innovation noise per accel axis
  double process_sigma2 = 0.05;   // [m^2] added per step per position axis
  double sticky_diag = 0.95;      // IMM transition matrix diagonal
  double mu_floor = 1e-3;
  double loglik_reset = -500.0;   // below this for every mode: reset uniform

  Mat2 obs_cov() const { return obs_sigma * obs_sigma * Mat2::Identity(); }
  Mat6 process_cov() const {
    Mat6 W = Mat6::Zero();
    W(0, 0) = process_sigma2;
    W(3, 3) = process_sigma2;
    return W;
  }
};

/// Candidate maneuvers for an SV: lane-keep at current speed, decelerated
/// lane-keep variants, and lane changes to adjacent lanes.
inline std::vector<std::pair<int, Maneuver>> enumerate_sv_modes(const SVObservation& sv,
                                                                const Road& road,
                                                                const PredictorConfig& cfg) {
  const LaneGeometry& cur = road.lane_at(sv.state.d);  // throws off-road
  const auto clamp_v = [](double v, double lim) { return std::clamp(v, 0.0, lim); };

  std::vector<std::pair<int, Maneuver>> out;
  out.push_back({static_cast<int>(ModeKind::KeepCurrent),
                 Maneuver{cur.id, clamp_v(sv.state.s_dot, cur.speed_limit), 0.0}});
  for (int i = 1; i <= cfg.decel_variants; ++i) {
    out.push_back({static_cast<int>(ModeKind::KeepDecel) + (i - 1),
                   Maneuver{cur.id, clamp_v(sv.state.s_dot - i * cfg.decel_delta, cur.speed_limit), 0.0}});
  }
  if (cfg.lane_changes) {
    for (int adj : road.adjacent(cur.id)) {
      const LaneGeometry& target = road.lane(adj);
      const bool left = target.center_y > cur.center_y;
      out.push_back({static_cast<int>(left ? ModeKind::ChangeLeft : ModeKind::ChangeRight),
                     Maneuver{adj, clamp_v(sv.state.s_dot, target.speed_limit), 0.0}});
    }
  }
  return out;
}

/// Nominal rollout plus covariance propagation through the closed-loop map:
/// Sigma_{k+1} = (A+BK) Sigma_k (A+BK)' + W, position block extracted.
inline PredictionMode propagate_mode(const SVObservation& sv, const Maneuver& maneuver,
                                     const Road& road, const LQRGain& gain, int horizon, double dt,
                                     const Mat6& process_cov, const Mat2& obs_cov) {
  PredictionMode mode;
  mode.maneuver = maneuver;
  mode.states = pointmass_rollout(sv.state, maneuver, road, gain, horizon, dt);

  Mat6 S = Mat6::Zero();
  S(0, 0) = obs_cov(0, 0);
  S(0, 3) = obs_cov(0, 1);
  S(3, 0) = obs_cov(1, 0);
  S(3, 3) = obs_cov(1, 1);
  const Mat6 Acl = gain.A + gain.B * gain.K;
  mode.cov.reserve(horizon + 1);
  auto position_block = [](const Mat6& m) {
    Mat2 p;
    p << m(0, 0), m(0, 3), m(3, 0), m(3, 3);
    return p;
  };
  mode.cov.push_back(position_block(S));
  for (int k = 0; k < horizon; ++k) {
    S = Acl * S * Acl.transpose() + process_cov;
    S = 0.5 * (S + S.transpose());
    mode.cov.push_back(position_block(S));
  }
  return mode;
}

namespace detail {

/// Floor then renormalize so that sum == 1 and every entry >= floor.
inline void apply_floor(std::vector<double>& mu, double floor) {
  const int n = static_cast<int>(mu.size());
  if (n == 0) return;
  double sum = 0.0;
  for (double m : mu) sum += m;
  if (sum <= 0.0) {
    for (double& m : mu) m = 1.0 / n;
    return;
  }
  for (double& m : mu) m /= sum;
  for (int pass = 0; pass < n; ++pass) {
    double floored_mass = 0.0, free_mass = 0.0;
    int floored = 0;
    for (double m : mu) {
      if (m <= floor) {
        floored_mass += floor;
        ++floored;
      } else {
        free_mass += m;
      }
    }
    if (floored == 0 || floored == n) break;
    const double scale = (1.0 - floored_mass) / free_mass;
    bool changed = false;
    for (double& m : mu) {
      if (m <= floor) {
        m = floor;
      } else {
        m *= scale;
        if (m < floor) changed = true;
      }
    }
    if (!changed) break;
  }
}

inline double gaussian_loglik(const Vec2& err, const Mat2& cov) {
  const double det = cov.determinant();
  if (det <= 0.0) throw std::runtime_error("gaussian_loglik: singular covariance");
  const double maha2 = err.dot(cov.inverse() * err);
  return -0.5 * (maha2 + std::log(det) + 2.0 * std::log(2.0 * M_PI));
}

/// Log-likelihood of the full observed state against a mode's one-step
/// prediction. Position uses the propagated 2x2 covariance; velocity and
/// acceleration innovations use fixed noise parameters.
inline double mode_loglik(const PointMassState& obs, const PointMassState& pred,
                          const Mat2& pos_cov, const PredictorConfig& cfg) {
  double ll = gaussian_loglik(Vec2(obs.s - pred.s, obs.d - pred.d),
                              Mat2(pos_cov + cfg.obs_cov()));
  const double vv = cfg.vel_sigma * cfg.vel_sigma;
  const double aa = cfg.acc_sigma * cfg.acc_sigma;
  auto n1 = [](double e, double var) {
    return -0.5 * (e * e / var + std::log(2.0 * M_PI * var));
  };
  ll += n1(obs.s_dot - pred.s_dot, vv) + n1(obs.d_dot - pred.d_dot, vv);
  ll += n1(obs.s_ddot - pred.s_ddot, aa) + n1(obs.d_ddot - pred.d_ddot, aa);
  return ll;
}

}  // namespace detail

/// Bayes update of mode probabilities with IMM-style sticky mixing. The
/// previous prediction's one-step-ahead entries serve as the per-mode
/// predicted observation.
inline MultiModalPrediction update_mode_probabilities(const MultiModalPrediction& prev,
                                                      const SVObservation& obs,
                                                      const PredictorConfig& cfg) {
  const int n = static_cast<int>(prev.modes.size());
  if (n == 0) throw std::invalid_argument("update_mode_probabilities: no modes");

  // sticky transition mixing
  const double diag = (n == 1) ? 1.0 : cfg.sticky_diag;
  const double off = (n == 1) ? 0.0 : (1.0 - diag) / (n - 1);
  std::vector<double> mixed(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) mixed[i] += (i == j ? diag : off) * prev.modes[j].mu;

  std::vector<double> loglik(n);
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const auto& m = prev.modes[i];
    if (m.states.size() < 2) throw std::invalid_argument("mode trajectory too short");
    loglik[i] = detail::mode_loglik(obs.state, m.states[1], m.cov[1], cfg);
    best = std::max(best, loglik[i]);
  }

  MultiModalPrediction out = prev;
  std::vector<double> mu(n);
  if (best < cfg.loglik_reset) {
    // every mode is implausible: model mismatch, start over
    for (int i = 0; i < n; ++i) mu[i] = 1.0 / n;
  } else {
    for (int i = 0; i < n; ++i) mu[i] = mixed[i] * std::exp(loglik[i] - best);
  }
  detail::apply_floor(mu, cfg.mu_floor);
  for (int i = 0; i < n; ++i) out.modes[i].mu = mu[i];
  return out;
}

/// Fresh predictions with uniform mode probabilities (no history).
inline std::vector<MultiModalPrediction> predict_all(const std::vector<SVObservation>& svs,
                                                     const Road& road, const LQRGain& gain,
                                                     int horizon, double dt,
                                                     const PredictorConfig& cfg) {
  std::vector<MultiModalPrediction> out;
  out.reserve(svs.size());
  for (const auto& sv : svs) {
    MultiModalPrediction p;
    p.sv_id = sv.sv_id;
    const auto maneuvers = enumerate_sv_modes(sv, road, cfg);
    for (const auto& [id, m] : maneuvers) {
      PredictionMode mode =
          propagate_mode(sv, m, road, gain, horizon, dt, cfg.process_cov(), cfg.obs_cov());
      mode.id = id;
      mode.mu = 1.0 / maneuvers.size();
      p.modes.push_back(std::move(mode));
    }
    out.push_back(std::move(p));
  }
  return out;
}

/// Stateful per-SV filter: carries mode probabilities between observations.
/// A single SV must be updated sequentially by timestamp; distinct SVs are
/// independent.
class Predictor {
 public:
  Predictor(Road road, LQRGain gain, int horizon, double dt, PredictorConfig cfg = {})
      : road_(std::move(road)), gain_(std::move(gain)), horizon_(horizon), dt_(dt), cfg_(cfg) {}

  std::vector<MultiModalPrediction> step(const std::vector<SVObservation>& svs) {
    std::vector<MultiModalPrediction> out;
    out.reserve(svs.size());
    for (const auto& sv : svs) out.push_back(step_one(sv));
    return out;
  }

  MultiModalPrediction step_one(const SVObservation& sv) {
    auto it_t = last_t_.find(sv.sv_id);
    if (it_t != last_t_.end() && sv.t <= it_t->second)
      throw std::invalid_argument("observations must have strictly increasing timestamps");
    last_t_[sv.sv_id] = sv.t;

    // carry probabilities from the previous step, matched by mode id
    std::map<int, double> prior;
    auto it = prev_.find(sv.sv_id);
    if (it != prev_.end()) {
      const MultiModalPrediction updated = update_mode_probabilities(it->second, sv, cfg_);
      for (const auto& m : updated.modes) prior[m.id] = m.mu;
    }

    MultiModalPrediction p;
    p.sv_id = sv.sv_id;
    const auto maneuvers = enumerate_sv_modes(sv, road_, cfg_);
    std::vector<double> mu;
    for (const auto& [id, m] : maneuvers) {
      PredictionMode mode =
          propagate_mode(sv, m, road_, gain_, horizon_, dt_, cfg_.process_cov(), cfg_.obs_cov());
      mode.id = id;
      p.modes.push_back(std::move(mode));
      const auto pit = prior.find(id);
      mu.push_back(pit != prior.end() ? pit->second : (prior.empty() ? 1.0 : cfg_.mu_floor));
    }
    detail::apply_floor(mu, cfg_.mu_floor);
    for (size_t i = 0; i < mu.size(); ++i) p.modes[i].mu = mu[i];
    prev_[sv.sv_id] = p;
    return p;
  }

  void reset() {
    prev_.clear();
    last_t_.clear();
  }

 private:
  Road road_;
  LQRGain gain_;
  int horizon_;
  double dt_;
  PredictorConfig cfg_;
  std::map<int, MultiModalPrediction> prev_;
  std::map<int, int> last_t_;
};

}  // namespace bsmpc
