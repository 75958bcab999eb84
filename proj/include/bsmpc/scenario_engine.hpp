#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsmpc/prediction.hpp"

namespace bsmpc {

/// One joint assignment of a prediction mode to every SV.
struct Scenario {
  std::vector<std::pair<int, int>> assignment;  // (sv_id, mode_id), sorted by sv_id
  double p = 0.0;

  int mode_of(int sv_id) const {
    for (const auto& [sv, mode] : assignment)
      if (sv == sv_id) return mode;
    throw std::invalid_argument("scenario has no SV " + std::to_string(sv_id));
  }
};

struct ScenarioSet {
  std::vector<Scenario> scenarios;
};

/// Full Cartesian product of per-SV mode sets, lexicographically ordered by
/// (sv id, mode id). Probabilities are products of mode probabilities.
inline ScenarioSet enumerate_scenarios(const std::vector<MultiModalPrediction>& predictions,
                                       size_t cap = 256) {
  size_t total = predictions.empty() ? 0 : 1;
  for (const auto& p : predictions) {
    if (p.modes.empty()) throw std::invalid_argument("enumerate_scenarios: SV with no modes");
    total *= p.modes.size();
    if (total > cap)
      throw std::runtime_error("scenario count exceeds cap (" + std::to_string(cap) +
                               "); prune prediction modes before planning");
  }

  // SVs in ascending id order; modes in ascending id order within each SV.
  std::vector<const MultiModalPrediction*> svs;
  for (const auto& p : predictions) svs.push_back(&p);
  std::sort(svs.begin(), svs.end(),
            [](const auto* a, const auto* b) { return a->sv_id < b->sv_id; });
  std::vector<std::vector<const PredictionMode*>> modes(svs.size());
  for (size_t i = 0; i < svs.size(); ++i) {
    for (const auto& m : svs[i]->modes) modes[i].push_back(&m);
    std::sort(modes[i].begin(), modes[i].end(),
              [](const auto* a, const auto* b) { return a->id < b->id; });
  }

  ScenarioSet out;
  if (predictions.empty()) return out;
  std::vector<size_t> idx(svs.size(), 0);
  while (true) {
    Scenario sc;
    sc.p = 1.0;
    for (size_t i = 0; i < svs.size(); ++i) {
      sc.assignment.push_back({svs[i]->sv_id, modes[i][idx[i]]->id});
      sc.p *= modes[i][idx[i]]->mu;
    }
    out.scenarios.push_back(std::move(sc));
    // odometer increment, last SV fastest => lexicographic order
    int pos = static_cast<int>(svs.size()) - 1;
    while (pos >= 0) {
      if (++idx[pos] < modes[pos].size()) break;
      idx[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return out;
}

/// Per-SV prediction modes referenced by a scenario.
inline std::map<int, const PredictionMode*> scenario_predictions(
    const Scenario& scenario, const std::vector<MultiModalPrediction>& predictions) {
  std::map<int, const PredictionMode*> out;
  for (const auto& [sv_id, mode_id] : scenario.assignment) {
    const MultiModalPrediction* pred = nullptr;
    for (const auto& p : predictions)
      if (p.sv_id == sv_id) pred = &p;
    if (pred == nullptr)
      throw std::invalid_argument("scenario references unknown SV " + std::to_string(sv_id));
    out[sv_id] = &pred->mode_by_id(mode_id);  // throws on dangling mode id
  }
  return out;
}

}  // namespace bsmpc
