#pragma once

#include <map>
#include <set>
#include <vector>

#include "bsmpc/maneuver_planner.hpp"
#include "bsmpc/scenario_engine.hpp"

namespace bsmpc {

struct ClusteringConfig {
  double eps = 0.7;     // DBSCAN radius in standardized feature units
  int min_pts = 1;      // min_pts = 1 guarantees no scenario is orphaned
  double infeasible_failsafe_threshold = 0.3;
};

/// A cluster of scenarios sharing a representative maneuver.
struct Branch {
  int id = 0;
  int lane = 0;
  Maneuver representative;          // mean v_ref / d_ref over members
  double pi = 0.0;                  // aggregated (renormalized) probability
  std::vector<int> members;         // scenario indices
  std::map<int, std::set<int>> assigned_modes;  // sv id -> mode ids in members
  std::vector<ScoredManeuver> backups;          // fallback maneuvers for retry
};

struct BranchingStructure {
  std::vector<Branch> branches;
  double feasible_probability = 1.0;  // total p of scenarios that got a maneuver
  bool failsafe_flag = false;         // infeasible mass exceeded the threshold
};

struct CriticalitySplit {
  std::set<int> critical;
  std::set<int> non_critical;
};

/// Scenario indices grouped by the target lane of their optimal maneuvers.
inline std::map<int, std::vector<int>> partition_by_lane(
    const std::vector<ScenarioDecision>& decisions) {
  std::map<int, std::vector<int>> out;
  for (const auto& d : decisions) {
    if (!d.feasible()) throw std::invalid_argument("partition_by_lane: infeasible decision");
    out[d.best->maneuver.lane].push_back(d.scenario_index);
  }
  return out;
}

/// Standardize to zero mean, unit variance per dimension; zero-variance
/// dimensions are left unscaled.
inline std::vector<Vec2> standardize_features(const std::vector<Vec2>& pts) {
  if (pts.empty()) return {};
  Vec2 mean = Vec2::Zero(), var = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  for (const auto& p : pts) var += (p - mean).cwiseProduct(p - mean);
  var /= static_cast<double>(pts.size());
  Vec2 scale;
  for (int i = 0; i < 2; ++i) scale(i) = var(i) > 1e-12 ? 1.0 / std::sqrt(var(i)) : 1.0;
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back((p - mean).cwiseProduct(scale));
  return out;
}

/// Standard DBSCAN on pre-standardized points. Noise points are returned as
/// singleton clusters rather than being dropped.
inline std::vector<int> dbscan_cluster(const std::vector<Vec2>& pts, double eps, int min_pts) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> label(n, -2);  // -2 = unvisited, -1 = noise
  auto neighbors = [&](int p) {
    std::vector<int> out;
    for (int q = 0; q < n; ++q)
      if ((pts[p] - pts[q]).norm() <= eps) out.push_back(q);
    return out;
  };
  int next = 0;
  for (int p = 0; p < n; ++p) {
    if (label[p] != -2) continue;
    auto nb = neighbors(p);
    if (static_cast<int>(nb.size()) < min_pts) {
      label[p] = -1;
      continue;
    }
    label[p] = next;
    std::vector<int> seeds = nb;
    for (size_t i = 0; i < seeds.size(); ++i) {
      const int q = seeds[i];
      if (label[q] == -1) label[q] = next;
      if (label[q] != -2) continue;
      label[q] = next;
      auto nq = neighbors(q);
      if (static_cast<int>(nq.size()) >= min_pts) seeds.insert(seeds.end(), nq.begin(), nq.end());
    }
    ++next;
  }
  for (int p = 0; p < n; ++p)
    if (label[p] == -1) label[p] = next++;  // noise becomes a singleton cluster
  return label;
}

/// Lane partition, per-cell DBSCAN in standardized (v_ref, d_ref) space,
/// representative-maneuver averaging and probability aggregation. Scenarios
/// whose maneuver planning failed are excluded and their probability is
/// renormalized away.
inline BranchingStructure build_branches(const std::vector<ScenarioDecision>& decisions,
                                         const ScenarioSet& scenarios,
                                         const ClusteringConfig& cfg) {
  BranchingStructure out;
  std::vector<ScenarioDecision> feasible;
  double p_feasible = 0.0, p_total = 0.0;
  for (const auto& d : decisions) {
    const double p = scenarios.scenarios.at(d.scenario_index).p;
    p_total += p;
    if (d.feasible()) {
      feasible.push_back(d);
      p_feasible += p;
    }
  }
  if (feasible.empty())
    throw std::runtime_error("build_branches: no feasible scenario decision (fail-safe)");
  out.feasible_probability = p_feasible;
  out.failsafe_flag = (p_total - p_feasible) > cfg.infeasible_failsafe_threshold;

  const auto by_lane = partition_by_lane(feasible);
  int next_id = 0;
  for (const auto& [lane, members] : by_lane) {
    std::vector<Vec2> feats;
    std::vector<const ScenarioDecision*> cell;
    for (int idx : members) {
      for (const auto& d : feasible)
        if (d.scenario_index == idx) cell.push_back(&d);
    }
    for (const auto* d : cell) feats.push_back(Vec2(d->best->maneuver.v_ref, d->best->maneuver.d_ref));
    const auto labels = dbscan_cluster(standardize_features(feats), cfg.eps, cfg.min_pts);

    const int n_clusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    for (int c = 0; c < n_clusters; ++c) {
      Branch b;
      b.id = next_id++;
      b.lane = lane;
      double v_sum = 0.0, d_sum = 0.0, p_sum = 0.0;
      const ScenarioDecision* top = nullptr;
      double top_p = -1.0;
      int count = 0;
      for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != c) continue;
        const auto* d = cell[i];
        b.members.push_back(d->scenario_index);
        v_sum += d->best->maneuver.v_ref;
        d_sum += d->best->maneuver.d_ref;
        const auto& sc = scenarios.scenarios.at(d->scenario_index);
        p_sum += sc.p;
        for (const auto& [sv, mode] : sc.assignment) b.assigned_modes[sv].insert(mode);
        if (sc.p > top_p) {
          top_p = sc.p;
          top = d;
        }
        ++count;
      }
      b.representative = Maneuver{lane, v_sum / count, d_sum / count};
      b.pi = p_sum / p_feasible;
      if (top != nullptr) b.backups = top->backups;
      out.branches.push_back(std::move(b));
    }
  }
  return out;
}

/// An SV is critical iff some branch contains only a strict subset of its
/// prediction modes.
inline CriticalitySplit classify_critical(const BranchingStructure& structure,
                                          const std::vector<MultiModalPrediction>& predictions) {
  CriticalitySplit out;
  for (const auto& pred : predictions) {
    const size_t total = pred.modes.size();
    bool crit = false;
    for (const auto& b : structure.branches) {
      const auto it = b.assigned_modes.find(pred.sv_id);
      const size_t in_branch = (it == b.assigned_modes.end()) ? 0 : it->second.size();
      if (in_branch < total) {
        crit = true;
        break;
      }
    }
    if (crit)
      out.critical.insert(pred.sv_id);
    else
      out.non_critical.insert(pred.sv_id);
  }
  return out;
}

}  // namespace bsmpc
